//! Experiment files (TOML), run manifests (JSON) and CSV output.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::constellation::Modulation;
use crate::error::{config_err, Error, Result};
use crate::gsm::Variant;
use crate::sim::{calibrate, BerRecord, Calibration, DetectorKind, SimConfig, Simulator, TxSpec};
use crate::txgen::{AarSettings, Lambda, TxMode};

pub const CSV_HEADER: &str =
    "snr_db,ber,bit_errors,bits_sent,mean_tx_power,mean_residual,mean_active_antennas";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_u: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_s: usize,
    pub n_a: usize,
    pub modulation: Modulation,
    #[serde(default)]
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSection {
    #[serde(default)]
    pub sigma_err: f64,
    #[serde(default = "one")]
    pub channel_reuse: usize,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            sigma_err: 0.0,
            channel_reuse: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    #[serde(default)]
    pub kind: DetectorKind,
    #[serde(default = "unit")]
    pub threshold_scale: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            kind: DetectorKind::Obmmse,
            threshold_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    /// Explicit grid; takes precedence over start/stop/step.
    #[serde(default)]
    pub snr_db: Option<Vec<f64>>,
    #[serde(default)]
    pub snr_start: Option<f64>,
    #[serde(default)]
    pub snr_stop: Option<f64>,
    #[serde(default)]
    pub snr_step: Option<f64>,
    #[serde(default = "default_min_errors")]
    pub min_bit_errors: u64,
    #[serde(default = "default_max_symbols")]
    pub max_symbols: u64,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default)]
    pub noiseless: bool,
}

impl SweepSection {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if let Some(g) = &self.snr_db {
            return Ok(g.clone());
        }
        match (self.snr_start, self.snr_stop, self.snr_step) {
            (Some(a), Some(b), Some(s)) => {
                if !(s > 0.0) || b < a {
                    return config_err("SNR range needs snr_step > 0 and snr_stop >= snr_start");
                }
                let n = ((b - a) / s + 1e-9).floor() as usize;
                Ok((0..=n).map(|i| a + i as f64 * s).collect())
            }
            (None, None, None) => Ok(Vec::new()),
            _ => config_err("snr_start, snr_stop and snr_step must be given together"),
        }
    }
}

/// One transmit-mode curve of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSection {
    pub label: String,
    pub mode: TxMode,
    #[serde(default)]
    pub n_on: Option<usize>,
    #[serde(default)]
    pub q_max: Option<usize>,
    /// Relative ℓ1 weight, a multiple of `‖H̄ᴴr‖_∞`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub lambda_abs: Option<f64>,
    #[serde(default)]
    pub accelerate: Option<bool>,
    #[serde(default)]
    pub polish: Option<bool>,
    #[serde(default)]
    pub warm_start: Option<bool>,
    #[serde(default)]
    pub early_exit_tol: Option<f64>,
    /// Overrides `[channel].sigma_err` for this curve.
    #[serde(default)]
    pub sigma_err: Option<f64>,
}

impl CurveSection {
    pub fn tx_spec(&self) -> Result<TxSpec> {
        let aar_only = self.n_on.is_some()
            || self.q_max.is_some()
            || self.lambda.is_some()
            || self.lambda_abs.is_some()
            || self.accelerate.is_some()
            || self.polish.is_some()
            || self.warm_start.is_some()
            || self.early_exit_tol.is_some();
        match self.mode {
            TxMode::Direct | TxMode::MinPower if aar_only => config_err(format!(
                "curve '{}': AAR parameters given for a non-AAR mode",
                self.label
            )),
            TxMode::Direct => Ok(TxSpec::Direct),
            TxMode::MinPower => Ok(TxSpec::MinPower),
            TxMode::Aar => {
                let Some(n_on) = self.n_on else {
                    return config_err(format!("curve '{}': AAR needs n_on", self.label));
                };
                let mut s = AarSettings::new(n_on, self.q_max.unwrap_or(100));
                s.lambda = match (self.lambda, self.lambda_abs) {
                    (Some(_), Some(_)) => {
                        return config_err(format!(
                            "curve '{}': give lambda or lambda_abs, not both",
                            self.label
                        ))
                    }
                    (Some(a), None) => Lambda::Relative(a),
                    (None, Some(a)) => Lambda::Absolute(a),
                    (None, None) => Lambda::default(),
                };
                s.accelerate = self.accelerate.unwrap_or(s.accelerate);
                s.polish = self.polish.unwrap_or(s.polish);
                s.warm_start = self.warm_start.unwrap_or(s.warm_start);
                s.early_exit_tol = self.early_exit_tol;
                Ok(TxSpec::Aar(s))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub system: SystemSection,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub detector: DetectorSection,
    pub sweep: SweepSection,
    #[serde(default, rename = "curve")]
    pub curves: Vec<CurveSection>,
}

fn one() -> usize {
    1
}
fn one_u64() -> u64 {
    1
}
fn unit() -> f64 {
    1.0
}
fn default_min_errors() -> u64 {
    200
}
fn default_max_symbols() -> u64 {
    100_000
}

impl Experiment {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let exp: Experiment =
            toml::from_str(s).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        exp.validate()?;
        Ok(exp)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("experiment serialises")
    }

    /// Curves to run; a file without `[[curve]]` runs a single direct curve.
    pub fn curve_list(&self) -> Vec<CurveSection> {
        if self.curves.is_empty() {
            vec![CurveSection {
                label: "direct".into(),
                mode: TxMode::Direct,
                n_on: None,
                q_max: None,
                lambda: None,
                lambda_abs: None,
                accelerate: None,
                polish: None,
                warm_start: None,
                early_exit_tol: None,
                sigma_err: None,
            }]
        } else {
            self.curves.clone()
        }
    }

    pub fn sim_config(&self, curve: &CurveSection) -> Result<SimConfig> {
        let s = &self.system;
        let mut c = SimConfig::new(s.n_u, s.n_tx, s.n_rx, s.n_s, s.n_a, s.modulation);
        c.variant = s.variant;
        c.tx = curve.tx_spec()?;
        c.sigma_err = curve.sigma_err.unwrap_or(self.channel.sigma_err);
        c.channel_reuse = self.channel.channel_reuse;
        c.detector = self.detector.kind;
        c.threshold_scale = self.detector.threshold_scale;
        c.snr_grid_db = self.sweep.grid()?;
        c.min_bit_errors = self.sweep.min_bit_errors;
        c.max_symbols = self.sweep.max_symbols;
        c.seed = self.sweep.seed;
        c.noiseless = self.sweep.noiseless;
        Ok(c)
    }

    pub fn sim_configs(&self) -> Result<Vec<(String, SimConfig)>> {
        self.curve_list()
            .iter()
            .map(|c| Ok((c.label.clone(), self.sim_config(c)?)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for c in &self.curves {
            if c.label.is_empty()
                || !c
                    .label
                    .chars()
                    .all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-')
            {
                return config_err(format!(
                    "curve label '{}' must be non-empty and use [A-Za-z0-9_-]",
                    c.label
                ));
            }
            if !seen.insert(c.label.as_str()) {
                return config_err(format!("duplicate curve label '{}'", c.label));
            }
        }
        for (_, cfg) in self.sim_configs()? {
            cfg.validate()?;
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.sweep.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub label: String,
    pub config: SimConfig,
    pub calibration: Calibration,
    pub records: Vec<BerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    pub started_unix: u64,
    pub elapsed_s: f64,
    pub workers: Option<usize>,
    pub experiment: Experiment,
    pub curves: Vec<CurveResult>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("malformed manifest: {e}")))
    }
}

type CalKey = (usize, usize, usize, usize, usize, Modulation, Variant, u64);

fn cal_key(c: &SimConfig) -> CalKey {
    (c.n_u, c.n_tx, c.n_rx, c.n_s, c.n_a, c.modulation, c.variant, c.seed)
}

/// Runs every curve of `exp`. Curves with the same dimensions and seed share
/// one calibration. `progress` is called after each SNR point.
pub fn run_experiment(
    exp: &Experiment,
    workers: Option<usize>,
    mut progress: impl FnMut(&str, &BerRecord),
) -> Result<RunManifest> {
    exp.validate()?;
    let started = Instant::now();
    let started_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut cals: HashMap<CalKey, Calibration> = HashMap::new();
    let mut curves = Vec::new();
    for (label, cfg) in exp.sim_configs()? {
        let key = cal_key(&cfg);
        let cal = match cals.get(&key) {
            Some(c) => *c,
            None => {
                let c = calibrate(&cfg)?;
                cals.insert(key, c);
                c
            }
        };
        let mut sim = Simulator::with_calibration(cfg.clone(), cal)?;
        if let Some(w) = workers {
            sim = sim.with_workers(w)?;
        }
        let mut records = Vec::new();
        for &snr in &cfg.snr_grid_db {
            let rec = sim.run_point(snr)?;
            progress(&label, &rec);
            records.push(rec);
        }
        curves.push(CurveResult {
            label,
            config: cfg,
            calibration: cal,
            records,
        });
    }
    Ok(RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: exp.sweep.seed,
        started_unix,
        elapsed_s: started.elapsed().as_secs_f64(),
        workers,
        experiment: exp.clone(),
        curves,
    })
}

pub fn csv_string(records: &[BerRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{:e},{},{},{},{},{}\n",
            r.snr_db,
            r.ber,
            r.bit_errors,
            r.bits_sent,
            r.mean_tx_power,
            r.mean_residual,
            r.mean_active_antennas
        ));
    }
    out
}

/// Parses CSV produced by [`csv_string`] into `(snr_db, ber)` pairs.
pub fn parse_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Decode("unexpected CSV header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let mut f = l.split(',');
            let mut num = || -> Result<f64> {
                f.next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Decode(format!("bad CSV row: {l}")))
            };
            Ok((num()?, num()?))
        })
        .collect()
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}

/// Output paths for a run: one CSV per curve plus the manifest. A single
/// curve writes to `base` itself; several write `<stem>.<label>.csv`.
pub fn output_paths(base: &Path, labels: &[String]) -> (Vec<PathBuf>, PathBuf) {
    let stem = base.with_extension("");
    let manifest = PathBuf::from(format!("{}.manifest.json", stem.display()));
    let csvs = if labels.len() == 1 {
        vec![base.to_path_buf()]
    } else {
        labels
            .iter()
            .map(|l| PathBuf::from(format!("{}.{l}.csv", stem.display())))
            .collect()
    };
    (csvs, manifest)
}
