use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use ptsdim::config::{csv_string, output_paths, run_experiment, write_atomic, Experiment};
use ptsdim::sim::{flops_aar, flops_min_power, TxSpec};
use ptsdim::validate::{run_suite, Hooks};
use ptsdim::Error;

#[derive(Parser)]
#[command(name = "ptsdim", version, about = "Spatial index modulation MU-MIMO link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the BER sweep of every curve in a config file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// CSV path; with several curves, `<stem>.<label>.csv` per curve.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Suppress per-point progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Print the min-power and AAR FLOP counts for a config.
    Flops {
        #[arg(long)]
        config: PathBuf,
        /// Override the active-antenna count of the AAR curves.
        #[arg(long)]
        n_on: Option<usize>,
        /// Override the iteration count of the AAR curves.
        #[arg(long)]
        q: Option<usize>,
        #[arg(long)]
        json: bool,
    },
    /// Run the fast invariant suite.
    Validate {
        #[arg(long)]
        json: bool,
    },
}

fn exit_for(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate {
            config,
            output,
            seed,
            workers,
            quiet,
        } => simulate(config, output, seed, workers, quiet),
        Command::Flops {
            config,
            n_on,
            q,
            json,
        } => flops(config, n_on, q, json),
        Command::Validate { json } => validate(json),
    }
}

fn simulate(
    config: PathBuf,
    output: PathBuf,
    seed: Option<u64>,
    workers: Option<usize>,
    quiet: bool,
) -> ExitCode {
    let mut exp = match Experiment::load(&config) {
        Ok(e) => e,
        Err(e) => return exit_for(&e),
    };
    if let Some(s) = seed {
        exp = exp.with_seed(s);
    }
    let manifest = match run_experiment(&exp, workers, |label, r| {
        if !quiet {
            eprintln!(
                "{label}: {:>6.2} dB  ber {:.3e}  ({} / {} bits)",
                r.snr_db, r.ber, r.bit_errors, r.bits_sent
            );
        }
    }) {
        Ok(m) => m,
        Err(e) => return exit_for(&e),
    };
    let labels: Vec<String> = manifest.curves.iter().map(|c| c.label.clone()).collect();
    let (csvs, manifest_path) = output_paths(&output, &labels);
    for (path, curve) in csvs.iter().zip(&manifest.curves) {
        if let Err(e) = write_atomic(path, csv_string(&curve.records).as_bytes()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(1);
        }
    }
    if let Err(e) = write_atomic(&manifest_path, manifest.to_json().as_bytes()) {
        eprintln!("error: cannot write {}: {e}", manifest_path.display());
        return ExitCode::from(1);
    }
    ExitCode::SUCCESS
}

#[derive(Serialize)]
struct AarFlops {
    label: String,
    n_on: usize,
    q: usize,
    flops: f64,
    ratio: f64,
}

#[derive(Serialize)]
struct FlopsReport {
    min_power: f64,
    aar: Vec<AarFlops>,
}

/// Rounds to six significant figures.
fn sig6(x: f64) -> f64 {
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn flops(config: PathBuf, n_on: Option<usize>, q: Option<usize>, json: bool) -> ExitCode {
    let exp = match Experiment::load(&config) {
        Ok(e) => e,
        Err(e) => return exit_for(&e),
    };
    let s = &exp.system;
    let min_power = flops_min_power(s.n_u, s.n_rx, s.n_tx);
    let configs = match exp.sim_configs() {
        Ok(c) => c,
        Err(e) => return exit_for(&e),
    };
    let mut points: Vec<(String, usize, usize)> = configs
        .iter()
        .filter_map(|(label, c)| match c.tx {
            TxSpec::Aar(a) => Some((label.clone(), n_on.unwrap_or(a.n_on), q.unwrap_or(a.q_max))),
            _ => None,
        })
        .collect();
    if points.is_empty() {
        match (n_on, q) {
            (Some(n), Some(q)) => points.push(("aar".into(), n, q)),
            _ => {
                return exit_for(&Error::Config(
                    "config has no AAR curve; pass --n-on and --q".into(),
                ))
            }
        }
    }
    if let Some((_, n, _)) = points.iter().find(|p| p.1 == 0 || p.1 > s.n_tx) {
        return exit_for(&Error::Config(format!(
            "0 < n_on <= n_tx violated (n_on = {n}, n_tx = {})",
            s.n_tx
        )));
    }
    let report = FlopsReport {
        min_power,
        aar: points
            .into_iter()
            .map(|(label, n_on, q)| {
                let f = flops_aar(s.n_u, s.n_rx, s.n_tx, n_on, q);
                AarFlops {
                    label,
                    n_on,
                    q,
                    flops: f,
                    ratio: sig6(f / min_power),
                }
            })
            .collect(),
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    } else {
        println!("min_power_flops {}", report.min_power);
        for a in &report.aar {
            println!("aar_flops[{}] {} (n_on = {}, q = {})", a.label, a.flops, a.n_on, a.q);
            println!("ratio[{}] {}", a.label, a.ratio);
        }
    }
    ExitCode::SUCCESS
}

fn validate(json: bool) -> ExitCode {
    let report = run_suite(&Hooks::default());
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serialises"));
    } else {
        for c in &report.checks {
            println!(
                "{} {:<28} {:>8.1} ms  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.elapsed_ms,
                c.detail
            );
        }
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
