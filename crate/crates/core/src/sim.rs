//! Monte-Carlo BER engine and the analytical FLOP counters.
//!
//! Trials are grouped into *blocks*: one channel draw reused for
//! `channel_reuse` multi-user symbols. Each block draws from its own random
//! streams keyed by `(seed, snr, block)`, blocks run in parallel, and their
//! counters are merged in block order. The stopping rule is evaluated after
//! every block during the merge, so a run is a deterministic prefix of the
//! block sequence regardless of worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_channel, sigma2_for_snr, Dims, NoiseModel};
use crate::constellation::Modulation;
use crate::detect::{detect_ml_raw, DetectorInput, ObMmse};
use crate::error::{config_err, Error, Result};
use crate::gsm::{encode, AicTable, GsmSymbol, ImParams, Variant};
use crate::linalg::{matvec_into, norm_sqr, C64, ZERO};
use crate::precode::{build_bd_precoder, check_bd_dims, effective_rx};
use crate::rng::{Purpose, SeedTree};
use crate::txgen::{tx_direct, AarSettings, AarSolver, MinPowerSolver, TxMode, TxSignal};

/// Channel draws and symbols per draw used to estimate the SNR calibration.
pub const CALIBRATION_CHANNELS: usize = 100;
pub const CALIBRATION_SYMBOLS_PER_CHANNEL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    #[default]
    Obmmse,
    Ml,
}

/// Transmit-signal generation mode with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TxSpec {
    Direct,
    MinPower,
    Aar(AarSettings),
}

impl TxSpec {
    pub fn mode(&self) -> TxMode {
        match self {
            TxSpec::Direct => TxMode::Direct,
            TxSpec::MinPower => TxMode::MinPower,
            TxSpec::Aar(_) => TxMode::Aar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_u: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_s: usize,
    pub n_a: usize,
    pub modulation: Modulation,
    pub variant: Variant,
    pub tx: TxSpec,
    /// CSIT error standard deviation; 0 for perfect CSIT.
    pub sigma_err: f64,
    pub snr_grid_db: Vec<f64>,
    pub min_bit_errors: u64,
    pub max_symbols: u64,
    pub seed: u64,
    /// Multi-user symbols sent per channel draw.
    pub channel_reuse: usize,
    pub noiseless: bool,
    pub detector: DetectorKind,
    /// OB-MMSE early-termination threshold in units of `2σ²·n_rx`.
    pub threshold_scale: f64,
}

impl SimConfig {
    /// A config with the default stopping rule and detector.
    pub fn new(
        n_u: usize,
        n_tx: usize,
        n_rx: usize,
        n_s: usize,
        n_a: usize,
        modulation: Modulation,
    ) -> Self {
        Self {
            n_u,
            n_tx,
            n_rx,
            n_s,
            n_a,
            modulation,
            variant: Variant::Full,
            tx: TxSpec::Direct,
            sigma_err: 0.0,
            snr_grid_db: Vec::new(),
            min_bit_errors: 200,
            max_symbols: 100_000,
            seed: 1,
            channel_reuse: 1,
            noiseless: false,
            detector: DetectorKind::Obmmse,
            threshold_scale: 1.0,
        }
    }

    pub fn dims(&self) -> Dims {
        Dims {
            n_u: self.n_u,
            n_tx: self.n_tx,
            n_rx: self.n_rx,
        }
    }

    pub fn im_params(&self) -> Result<ImParams> {
        ImParams::new(self.n_s, self.n_a, self.modulation, self.variant)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_u == 0 || self.n_tx == 0 || self.n_rx == 0 {
            return config_err("n_u, n_tx and n_rx must be positive");
        }
        self.im_params()?;
        check_bd_dims(self.dims(), self.n_s)?;
        if !(0.0..1.0).contains(&self.sigma_err) {
            return config_err(format!(
                "CSIT error std must lie in [0, 1), got {}",
                self.sigma_err
            ));
        }
        match &self.tx {
            TxSpec::Direct => {}
            TxSpec::MinPower => {
                if self.n_tx < self.n_u * self.n_rx {
                    return config_err(format!(
                        "min-power mode needs n_tx >= n_u * n_rx ({} < {})",
                        self.n_tx,
                        self.n_u * self.n_rx
                    ));
                }
            }
            TxSpec::Aar(s) => s.validate(self.n_tx)?,
        }
        if self.channel_reuse == 0 {
            return config_err("channel_reuse must be at least 1");
        }
        if self.max_symbols == 0 {
            return config_err("max_symbols must be at least 1");
        }
        if !(self.threshold_scale >= 0.0 && self.threshold_scale.is_finite()) {
            return config_err("threshold_scale must be a finite non-negative number");
        }
        if let Some(bad) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return config_err(format!("SNR grid contains a non-finite value {bad}"));
        }
        Ok(())
    }
}

/// Error statistics for one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerRecord {
    pub snr_db: f64,
    pub sigma2: f64,
    pub bits_sent: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub symbols_sent: u64,
    /// Per-user symbols whose AIC was detected wrongly.
    pub aic_errors: u64,
    /// Per-user symbols with at least one bit error.
    pub symbol_errors: u64,
    pub mean_tx_power: f64,
    pub mean_residual: f64,
    pub mean_active_antennas: f64,
}

impl BerRecord {
    /// SNR on an axis referenced to a fixed transmit power budget: a scheme
    /// that radiates `mean_tx_power` instead of `reference_power` would
    /// reach this BER at `snr_db + 10·log10(mean_tx_power / reference_power)`
    /// after rescaling to the budget.
    pub fn tx_referenced_snr_db(&self, reference_power: f64) -> f64 {
        self.snr_db + 10.0 * (self.mean_tx_power / reference_power).log10()
    }
}

/// SNR calibration shared by every transmit mode of a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Mean received signal energy per user `E‖Ĥ_k s_k‖²` under direct BD
    /// precoding and perfect CSIT.
    pub rx_energy: f64,
    /// Mean direct-precoded transmit power `E‖x‖²`.
    pub tx_power: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Counters {
    bits: u64,
    bit_errors: u64,
    symbols: u64,
    aic_errors: u64,
    symbol_errors: u64,
    tx_power: f64,
    residual: f64,
    active: f64,
}

impl Counters {
    fn add(&mut self, o: &Counters) {
        self.bits += o.bits;
        self.bit_errors += o.bit_errors;
        self.symbols += o.symbols;
        self.aic_errors += o.aic_errors;
        self.symbol_errors += o.symbol_errors;
        self.tx_power += o.tx_power;
        self.residual += o.residual;
        self.active += o.active;
    }
}

fn random_bits<R: Rng + ?Sized>(rng: &mut R, out: &mut [u8]) {
    for chunk in out.chunks_mut(64) {
        let w: u64 = rng.random();
        for (j, b) in chunk.iter_mut().enumerate() {
            *b = ((w >> j) & 1) as u8;
        }
    }
}

fn encode_users<R: Rng + ?Sized>(
    rng: &mut R,
    params: &ImParams,
    table: &AicTable,
    n_u: usize,
    bits: &mut [u8],
) -> Result<Vec<GsmSymbol>> {
    random_bits(rng, bits);
    bits.chunks(params.bits_per_user())
        .take(n_u)
        .map(|b| encode(b, params, table))
        .collect()
}

/// Estimates the SNR calibration from `seed` for the dimensions in `config`.
/// Transmit mode and CSIT error do not enter, so every variant of a
/// configuration shares one constant.
pub fn calibrate(config: &SimConfig) -> Result<Calibration> {
    calibrate_with(config, CALIBRATION_CHANNELS, CALIBRATION_SYMBOLS_PER_CHANNEL)
}

pub fn calibrate_with(config: &SimConfig, channels: usize, per_channel: usize) -> Result<Calibration> {
    config.validate()?;
    let params = config.im_params()?;
    let table = AicTable::build(&params);
    let tree = SeedTree::new(config.seed);
    let dims = config.dims();
    let mut bits = vec![0u8; params.bits_per_user() * config.n_u];
    let (mut rx, mut tx) = (0.0, 0.0);
    for c in 0..channels as u64 {
        let ch = draw_channel(
            &mut tree.stream(Purpose::Calibration, 0, c),
            &mut tree.stream(Purpose::Calibration, 1, c),
            dims,
            0.0,
        )?;
        let pre = build_bd_precoder(&ch, config.n_s)?;
        let mut rng = tree.stream(Purpose::Calibration, 2, c);
        for _ in 0..per_channel {
            let symbols = encode_users(&mut rng, &params, &table, config.n_u, &mut bits)?;
            let r = effective_rx(&pre.eff_channels, &symbols);
            rx += r.iter().map(|v| norm_sqr(v)).sum::<f64>() / config.n_u as f64;
            tx += tx_direct(&pre, &symbols).power();
        }
    }
    let draws = channels * per_channel;
    Ok(Calibration {
        rx_energy: rx / draws as f64,
        tx_power: tx / draws as f64,
        draws,
    })
}

enum Engine {
    Direct,
    MinPower(MinPowerSolver),
    Aar(AarSolver, AarSettings),
}

pub struct Simulator {
    config: SimConfig,
    params: ImParams,
    table: AicTable,
    calibration: Calibration,
    pool: Option<rayon::ThreadPool>,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        let calibration = calibrate(&config)?;
        Self::with_calibration(config, calibration)
    }

    pub fn with_calibration(config: SimConfig, calibration: Calibration) -> Result<Self> {
        config.validate()?;
        if !(calibration.rx_energy > 0.0) {
            return Err(Error::Contract(format!(
                "calibration constant must be positive, got {}",
                calibration.rx_energy
            )));
        }
        let params = config.im_params()?;
        let table = AicTable::build(&params);
        Ok(Self {
            config,
            params,
            table,
            calibration,
            pool: None,
        })
    }

    /// Bounds the number of worker threads. Results do not depend on it.
    pub fn with_workers(mut self, workers: usize) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
        self.pool = Some(pool);
        Ok(self)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn calibration(&self) -> Calibration {
        self.calibration
    }

    pub fn params(&self) -> &ImParams {
        &self.params
    }

    pub fn noise_for(&self, snr_db: f64) -> Result<NoiseModel> {
        if self.config.noiseless {
            return Ok(NoiseModel::noiseless());
        }
        NoiseModel::new(sigma2_for_snr(
            snr_db,
            self.config.n_rx,
            self.calibration.rx_energy,
        )?)
    }

    pub fn run_sweep(&self) -> Result<Vec<BerRecord>> {
        self.config
            .snr_grid_db
            .iter()
            .map(|&s| self.run_point(s))
            .collect()
    }

    pub fn run_point(&self, snr_db: f64) -> Result<BerRecord> {
        match &self.pool {
            Some(pool) => pool.install(|| self.run_point_inner(snr_db)),
            None => self.run_point_inner(snr_db),
        }
    }

    fn run_point_inner(&self, snr_db: f64) -> Result<BerRecord> {
        let noise = self.noise_for(snr_db)?;
        let cfg = &self.config;
        let reuse = cfg.channel_reuse as u64;
        let n_blocks = cfg.max_symbols.div_ceil(reuse);
        let chunk = rayon::current_num_threads().max(1) as u64;
        let key = snr_db.to_bits();
        let mut total = Counters::default();
        let mut next = 0u64;
        'outer: while next < n_blocks {
            let end = (next + chunk).min(n_blocks);
            let results: Vec<Result<Counters>> = (next..end)
                .into_par_iter()
                .map(|b| {
                    let n = reuse.min(cfg.max_symbols - b * reuse) as usize;
                    self.run_block(key, b, n, noise)
                })
                .collect();
            for r in results {
                total.add(&r?);
                if total.bit_errors >= cfg.min_bit_errors || total.symbols >= cfg.max_symbols {
                    break 'outer;
                }
            }
            next = end;
        }
        let per = |v: f64| if total.symbols > 0 { v / total.symbols as f64 } else { 0.0 };
        Ok(BerRecord {
            snr_db,
            sigma2: noise.sigma2(),
            bits_sent: total.bits,
            bit_errors: total.bit_errors,
            ber: if total.bits > 0 {
                total.bit_errors as f64 / total.bits as f64
            } else {
                0.0
            },
            symbols_sent: total.symbols,
            aic_errors: total.aic_errors,
            symbol_errors: total.symbol_errors,
            mean_tx_power: per(total.tx_power),
            mean_residual: per(total.residual),
            mean_active_antennas: per(total.active),
        })
    }

    fn run_block(&self, key: u64, block: u64, n_symbols: usize, noise: NoiseModel) -> Result<Counters> {
        let cfg = &self.config;
        let tree = SeedTree::new(cfg.seed);
        let dims = cfg.dims();
        let ch = draw_channel(
            &mut tree.stream(Purpose::Channel, key, block),
            &mut tree.stream(Purpose::CsitError, key, block),
            dims,
            cfg.sigma_err,
        )?;
        let pre = build_bd_precoder(&ch, cfg.n_s)?;
        let rx_channels = pre.effective_against(ch.h_true.as_ref(), cfg.n_rx);
        let engine = match &cfg.tx {
            TxSpec::Direct => Engine::Direct,
            TxSpec::MinPower => Engine::MinPower(MinPowerSolver::new(ch.h_csit.as_ref())?),
            TxSpec::Aar(s) => Engine::Aar(AarSolver::new(ch.h_csit.as_ref()), *s),
        };
        let mut bit_rng = tree.stream(Purpose::Bits, key, block);
        let mut noise_rng = tree.stream(Purpose::Noise, key, block);
        let bpu = self.params.bits_per_user();
        let mut bits = vec![0u8; bpu * cfg.n_u];
        let mut rx_bits = vec![0u8; bpu];
        let mut y = vec![ZERO; dims.rows()];
        let obmmse = ObMmse {
            threshold_scale: cfg.threshold_scale,
        };
        let mut c = Counters::default();
        for _ in 0..n_symbols {
            let symbols = encode_users(&mut bit_rng, &self.params, &self.table, cfg.n_u, &mut bits)?;
            let direct = tx_direct(&pre, &symbols);
            let tx: TxSignal = match &engine {
                Engine::Direct => direct,
                Engine::MinPower(solver) => solver.solve(&stacked_target(&pre.eff_channels, &symbols)),
                Engine::Aar(solver, s) => {
                    let r = stacked_target(&pre.eff_channels, &symbols);
                    solver.solve(&r, s, direct.power())?
                }
            };
            matvec_into(ch.h_true.as_ref(), &tx.x, &mut y);
            noise.add_to(&mut noise_rng, &mut y);
            for (k, h_eff) in rx_channels.iter().enumerate() {
                let input = DetectorInput {
                    y: &y[k * cfg.n_rx..(k + 1) * cfg.n_rx],
                    h_eff: h_eff.as_ref(),
                    sigma2: noise.sigma2(),
                    params: &self.params,
                    table: &self.table,
                };
                let det = match cfg.detector {
                    DetectorKind::Obmmse => obmmse.detect_raw(&input)?,
                    DetectorKind::Ml => detect_ml_raw(&input)?,
                };
                det.write_bits(&self.params, &mut rx_bits);
                let sent = &bits[k * bpu..(k + 1) * bpu];
                let errs = sent.iter().zip(&rx_bits).filter(|(a, b)| a != b).count() as u64;
                c.bit_errors += errs;
                c.symbol_errors += (errs > 0) as u64;
                if self.table.combo(det.aic_index) != symbols[k].aic.as_slice() {
                    c.aic_errors += 1;
                }
            }
            c.bits += (bpu * cfg.n_u) as u64;
            c.symbols += 1;
            c.tx_power += tx.power();
            c.residual += tx.residual_norm;
            c.active += tx.active_antennas() as f64;
        }
        Ok(c)
    }
}

/// `r = [r_0ᵀ … r_{N_u−1}ᵀ]ᵀ` against the transmitter-side effective channels.
fn stacked_target(eff: &[faer::Mat<C64>], symbols: &[GsmSymbol]) -> Vec<C64> {
    effective_rx(eff, symbols).into_iter().flatten().collect()
}

pub fn run_point(config: &SimConfig, snr_db: f64) -> Result<BerRecord> {
    Simulator::new(config.clone())?.run_point(snr_db)
}

pub fn run_sweep(config: &SimConfig) -> Result<Vec<BerRecord>> {
    Simulator::new(config.clone())?.run_sweep()
}

/// Complex FLOPs of the least-norm construction.
pub fn flops_min_power(n_u: usize, n_rx: usize, n_tx: usize) -> f64 {
    let (u, r, t) = (n_u as f64, n_rx as f64, n_tx as f64);
    let ur = u * r;
    ur.powi(3) + ur * ur * (t + 1.5) + ur * (3.0 * t - 1.5) - t
}

/// Complex FLOPs of AAR with `q` iterations per phase.
pub fn flops_aar(n_u: usize, n_rx: usize, n_tx: usize, n_on: usize, q: usize) -> f64 {
    let (ur, t) = ((n_u * n_rx) as f64, n_tx as f64);
    t * t * (ur - 0.5) + t * (4.0 * ur - 1.5) + q as f64 * flops_aar_per_iteration(n_tx, n_on)
}

pub fn flops_aar_per_iteration(n_tx: usize, n_on: usize) -> f64 {
    let (t, on) = (n_tx as f64, n_on as f64);
    2.0 * t * t + 10.0 * t + 2.0 * on * on + 6.0 * on - 2.0
}

/// SNR at which a BER curve crosses `target`, interpolating `log10(ber)`
/// linearly between the first bracketing pair of points. Points must be
/// sorted by SNR; zero-BER points are skipped.
pub fn crossing_snr_db(points: &[(f64, f64)], target: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    pts.windows(2).find_map(|w| {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 >= target && b1 <= target {
            let (l0, l1, lt) = (b0.log10(), b1.log10(), target.log10());
            if (l0 - l1).abs() < f64::EPSILON {
                return Some(s0);
            }
            Some(s0 + (s1 - s0) * (l0 - lt) / (l0 - l1))
        } else {
            None
        }
    })
}

/// `log10`-interpolated BER at `snr`, or `None` outside the curve.
pub fn ber_at_snr(points: &[(f64, f64)], snr: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0).collect();
    pts.windows(2).find_map(|w| {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if (s0..=s1).contains(&snr) {
            let t = if s1 > s0 { (snr - s0) / (s1 - s0) } else { 0.0 };
            Some(10f64.powf(b0.log10() + t * (b1.log10() - b0.log10())))
        } else {
            None
        }
    })
}
