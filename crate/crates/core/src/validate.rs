//! Fast self-check suite behind `ptsdim validate`.
//!
//! Each check is a named invariant evaluated on tiny configurations. The
//! kernels under test are reached through [`Hooks`] so a test can swap in a
//! deliberately broken implementation and confirm the suite notices.

use std::time::Instant;

use faer::Mat;
use serde::Serialize;

use crate::channel::{complex_gaussian, draw_channel, ChannelSet, Dims};
use crate::detect::{detect_ml_raw, DetectorInput, ObMmse};
use crate::gsm::{bits_per_symbol, decode, encode, AicTable, GsmSymbol, ImParams, Variant};
use crate::linalg::{adjoint_matvec, frobenius, hpd_solve_small, matvec, norm, norm_sqr, select_cols, C64};
use crate::precode::{build_bd_precoder, effective_rx};
use crate::rng::{Purpose, SeedTree};
use crate::sim::{calibrate_with, flops_aar, flops_min_power, SimConfig, Simulator, TxSpec};
use crate::txgen::{self, tx_direct, AarSettings, AarSolver, MinPowerSolver};

/// Replaceable kernels exercised by the suite.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub soft_threshold: fn(C64, f64) -> C64,
}

impl Default for Hooks {
    fn default() -> Self {
        Self {
            soft_threshold: txgen::soft_threshold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

type Check = fn(&Hooks) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("bd_nulling", bd_nulling),
    ("bd_orthonormality", bd_orthonormality),
    ("gsm_round_trip", gsm_round_trip),
    ("rate_formula", rate_formula),
    ("soft_threshold_identities", soft_threshold_identities),
    ("least_norm", least_norm),
    ("receiver_transparency", receiver_transparency),
    ("ml_oracle_agreement", ml_oracle_agreement),
    ("obmmse_noiseless", obmmse_noiseless),
    ("aar_support_oracle", aar_support_oracle),
    ("flop_counts", flop_counts),
];

pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

pub fn run_suite(hooks: &Hooks) -> Report {
    let checks: Vec<CheckResult> = CHECKS
        .iter()
        .map(|&(name, f)| {
            let t = Instant::now();
            let out = std::panic::catch_unwind(|| f(hooks))
                .unwrap_or_else(|_| Err("check panicked".into()));
            let (passed, detail) = match out {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            CheckResult {
                name,
                passed,
                detail,
                elapsed_ms: t.elapsed().as_secs_f64() * 1e3,
            }
        })
        .collect();
    Report {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn channel(seed: u64, dims: Dims, sigma_err: f64) -> ChannelSet {
    let t = SeedTree::new(seed);
    draw_channel(
        &mut t.stream(Purpose::Validation, 0, seed),
        &mut t.stream(Purpose::Validation, 1, seed),
        dims,
        sigma_err,
    )
    .expect("valid dims")
}

fn random_symbols(seed: u64, params: &ImParams, table: &AicTable, n_u: usize) -> Vec<GsmSymbol> {
    use rand::Rng;
    let mut rng = SeedTree::new(seed).stream(Purpose::Validation, 2, seed);
    (0..n_u)
        .map(|_| {
            let bits: Vec<u8> = (0..params.bits_per_user()).map(|_| rng.random_range(0..2u8)).collect();
            encode(&bits, params, table).expect("valid bits")
        })
        .collect()
}

fn qpsk(n_s: usize, n_a: usize) -> ImParams {
    ImParams::new(n_s, n_a, "qpsk".parse().unwrap(), Variant::Full).unwrap()
}

const SMALL: Dims = Dims { n_u: 4, n_tx: 14, n_rx: 2 };

fn bd_nulling(_: &Hooks) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let ch = channel(seed, SMALL, 0.0);
        let p = build_bd_precoder(&ch, 3).map_err(|e| e.to_string())?;
        for k in 0..SMALL.n_u {
            for i in (0..SMALL.n_u).filter(|&i| i != k) {
                let hi = ch.user_csit(i);
                worst = worst.max(frobenius((hi * &p.f_blocks[k]).as_ref()) / frobenius(hi));
            }
        }
    }
    ensure(worst <= 1e-9, || format!("leakage {worst:.3e} > 1e-9"))?;
    Ok(format!("max leakage {worst:.2e}"))
}

fn bd_orthonormality(_: &Hooks) -> Result<String, String> {
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let p = build_bd_precoder(&channel(seed, SMALL, 0.0), 3).map_err(|e| e.to_string())?;
        for f in &p.f_blocks {
            let g = f.adjoint() * f;
            worst = worst.max(frobenius((&g - Mat::<C64>::identity(3, 3)).as_ref()));
        }
    }
    ensure(worst <= 1e-10, || format!("‖FᴴF − I‖ = {worst:.3e} > 1e-10"))?;
    Ok(format!("max deviation {worst:.2e}"))
}

fn gsm_round_trip(_: &Hooks) -> Result<String, String> {
    let mut count = 0;
    for (n_s, n_a, m, variant) in [
        (4, 2, "qpsk", Variant::Full),
        (5, 2, "bpsk", Variant::Full),
        (4, 2, "qam16", Variant::Reduced),
        (3, 1, "psk8", Variant::Full),
    ] {
        let params = ImParams::new(n_s, n_a, m.parse().unwrap(), variant).map_err(|e| e.to_string())?;
        let table = AicTable::build(&params);
        let b = params.bits_per_user();
        for word in 0..1u64 << b {
            let bits: Vec<u8> = (0..b).map(|j| ((word >> (b - 1 - j)) & 1) as u8).collect();
            let sym = encode(&bits, &params, &table).map_err(|e| e.to_string())?;
            let back = decode(&sym, &params, &table).map_err(|e| e.to_string())?;
            ensure(back == bits, || format!("{n_s}/{n_a}/{m}: word {word} decoded wrongly"))?;
            count += 1;
        }
    }
    Ok(format!("{count} words"))
}

fn rate_formula(_: &Hooks) -> Result<String, String> {
    let qam64 = ImParams::new(7, 2, "qam64".parse().unwrap(), Variant::Full).unwrap();
    let b = bits_per_symbol(&qam64, 15);
    ensure(b.per_user == 16 && b.total == 240, || format!("7/2/64-QAM gives {b:?}"))?;
    let b = bits_per_symbol(&qpsk(9, 3), 12);
    ensure(b.per_user == 12 && b.total == 144, || format!("9/3/QPSK gives {b:?}"))?;
    Ok("16 and 12 bits per user".into())
}

fn soft_threshold_identities(h: &Hooks) -> Result<String, String> {
    let st = h.soft_threshold;
    let close = |a: C64, b: C64| (a - b).norm() <= 1e-12 * (1.0 + b.norm());
    ensure(close(st(C64::new(3.0, 0.0), 1.0), C64::new(2.0, 0.0)), || {
        format!("S(3, 1) = {}", st(C64::new(3.0, 0.0), 1.0))
    })?;
    ensure(close(st(C64::new(0.0, 4.0), 1.0), C64::new(0.0, 3.0)), || {
        format!("S(4i, 1) = {}", st(C64::new(0.0, 4.0), 1.0))
    })?;
    let mut rng = SeedTree::new(7).stream(Purpose::Validation, 3, 0);
    for _ in 0..1000 {
        let u = complex_gaussian(&mut rng, 2.0);
        let v = complex_gaussian(&mut rng, 1.0).norm();
        let s = st(u, v);
        if u.norm() <= v {
            ensure(s == C64::new(0.0, 0.0), || format!("S({u}, {v}) = {s}, expected 0"))?;
        } else {
            // shrink by v along the phase of u
            let expect = u * ((u.norm() - v) / u.norm());
            ensure(close(s, expect), || format!("S({u}, {v}) = {s}, expected {expect}"))?;
        }
        // proximal optimality of ½|x − u|² + v|x|
        let obj = |x: C64| 0.5 * (x - u).norm_sqr() + v * x.norm();
        let probe = s + complex_gaussian(&mut rng, 1e-2);
        ensure(obj(s) <= obj(probe) + 1e-12, || format!("S({u}, {v}) is not the prox point"))?;
    }
    Ok("1000 random arguments".into())
}

fn least_norm(_: &Hooks) -> Result<String, String> {
    let dims = Dims { n_u: 3, n_tx: 15, n_rx: 2 };
    let params = qpsk(4, 2);
    let table = AicTable::build(&params);
    let mut strict = 0;
    for seed in 0..50 {
        let ch = channel(seed, dims, 0.0);
        let pre = build_bd_precoder(&ch, 4).map_err(|e| e.to_string())?;
        let symbols = random_symbols(seed, &params, &table, 3);
        let r: Vec<C64> = effective_rx(&pre.eff_channels, &symbols).into_iter().flatten().collect();
        let x = MinPowerSolver::new(ch.h_csit.as_ref()).map_err(|e| e.to_string())?.solve(&r);
        let rel = x.residual_norm / norm(&r);
        ensure(rel <= 1e-8, || format!("seed {seed}: relative residual {rel:.3e}"))?;
        let direct = tx_direct(&pre, &symbols).power();
        ensure(x.power() <= direct * (1.0 + 1e-12), || {
            format!("seed {seed}: ‖x̂‖² = {} > ‖x_direct‖² = {direct}", x.power())
        })?;
        strict += (x.power() < direct) as usize;
    }
    ensure(strict == 50, || format!("strict power reduction on {strict}/50 draws"))?;
    Ok("50 draws".into())
}

fn transparency_config() -> SimConfig {
    let mut c = SimConfig::new(3, 15, 2, 4, 2, "qpsk".parse().unwrap());
    c.max_symbols = 200;
    c.min_bit_errors = u64::MAX;
    c.channel_reuse = 10;
    c.seed = 5;
    c
}

fn receiver_transparency(_: &Hooks) -> Result<String, String> {
    let direct = transparency_config();
    let cal = calibrate_with(&direct, 10, 20).map_err(|e| e.to_string())?;
    let mut mp = direct.clone();
    mp.tx = TxSpec::MinPower;
    let a = Simulator::with_calibration(direct, cal).map_err(|e| e.to_string())?;
    let b = Simulator::with_calibration(mp, cal).map_err(|e| e.to_string())?;
    let mut total = 0;
    for snr in [0.0, 5.0, 10.0] {
        let ra = a.run_point(snr).map_err(|e| e.to_string())?;
        let rb = b.run_point(snr).map_err(|e| e.to_string())?;
        ensure(ra.bit_errors == rb.bit_errors, || {
            format!("{snr} dB: {} vs {} bit errors", ra.bit_errors, rb.bit_errors)
        })?;
        total += ra.bit_errors;
    }
    Ok(format!("identical counts, {total} errors total"))
}

/// Exhaustive search written independently of the detector module.
fn brute_force(y: &[C64], h: &Mat<C64>, params: &ImParams, table: &AicTable) -> (usize, Vec<usize>) {
    let cons = params.constellation();
    let m = cons.order();
    let k = params.carried_symbols();
    let mut best = (f64::INFINITY, 0, vec![0; k]);
    for (ai, aic) in table.combos().iter().enumerate() {
        for word in 0..m.pow(k as u32) {
            let labels: Vec<usize> = (0..k).map(|j| (word / m.pow(j as u32)) % m).collect();
            let mut s = vec![C64::new(0.0, 0.0); params.n_s()];
            for (p, &pos) in aic.iter().enumerate() {
                s[pos] = cons.point(labels[p.min(k - 1)]);
            }
            let hx = matvec(h.as_ref(), &s);
            let d: f64 = y.iter().zip(&hx).map(|(a, b)| (a - b).norm_sqr()).sum();
            if d < best.0 {
                best = (d, ai, labels);
            }
        }
    }
    (best.1, best.2)
}

fn ml_oracle_agreement(_: &Hooks) -> Result<String, String> {
    let mut n = 0;
    for (params, n_rx) in [
        (qpsk(4, 2), 2),
        (ImParams::new(4, 2, "bpsk".parse().unwrap(), Variant::Reduced).unwrap(), 3),
    ] {
        let table = AicTable::build(&params);
        let mut rng = SeedTree::new(11).stream(Purpose::Validation, 4, n_rx as u64);
        for trial in 0..100 {
            let h = Mat::from_fn(n_rx, params.n_s(), |_, _| complex_gaussian(&mut rng, 1.0));
            let y: Vec<C64> = (0..n_rx).map(|_| complex_gaussian(&mut rng, 2.0)).collect();
            let det = detect_ml_raw(&DetectorInput {
                y: &y,
                h_eff: h.as_ref(),
                sigma2: 0.5,
                params: &params,
                table: &table,
            })
            .map_err(|e| e.to_string())?;
            let (aic, labels) = brute_force(&y, &h, &params, &table);
            ensure(det.aic_index == aic && det.labels == labels, || {
                format!("trial {trial}: detector ({}, {:?}) vs oracle ({aic}, {labels:?})", det.aic_index, det.labels)
            })?;
            n += 1;
        }
    }
    Ok(format!("{n} random observations"))
}

fn obmmse_noiseless(_: &Hooks) -> Result<String, String> {
    let params = qpsk(4, 2);
    let table = AicTable::build(&params);
    let mut rng = SeedTree::new(13).stream(Purpose::Validation, 5, 0);
    for seed in 0..200u64 {
        let h = Mat::from_fn(4, 4, |_, _| complex_gaussian(&mut rng, 1.0));
        let sym = random_symbols(seed, &params, &table, 1).remove(0);
        let y = matvec(h.as_ref(), &sym.densify(4));
        let got = ObMmse::default()
            .detect(&DetectorInput {
                y: &y,
                h_eff: h.as_ref(),
                sigma2: 0.0,
                params: &params,
                table: &table,
            })
            .map_err(|e| e.to_string())?;
        ensure(got.aic == sym.aic && got.values == sym.values, || {
            format!("draw {seed}: noiseless observation detected wrongly")
        })?;
    }
    Ok("200 noiseless draws".into())
}

/// Residual of `min ‖r − A x‖ s.t. ‖x‖² ≤ p_max` with `A` the columns
/// `cols` of `h`, via the Lagrangian `(AᴴA + μI) x = Aᴴr` and bisection on μ.
fn ball_ls_residual(h: &Mat<C64>, r: &[C64], cols: &[usize], p_max: f64) -> f64 {
    let a = select_cols(h.as_ref(), cols);
    let n = cols.len();
    let g = a.adjoint() * &a;
    let b = adjoint_matvec(a.as_ref(), r);
    let solve = |mu: f64| {
        let mut m: Vec<C64> = (0..n * n).map(|k| g[(k % n, k / n)]).collect();
        for i in 0..n {
            m[i * n + i] += mu;
        }
        let mut x = b.clone();
        hpd_solve_small(&mut m, n, &mut x).then_some(x)
    };
    let mut x = solve(0.0).unwrap_or_else(|| vec![C64::new(f64::INFINITY, 0.0); n]);
    if norm_sqr(&x) > p_max {
        let (mut lo, mut hi) = (0.0, norm(&b) / p_max.sqrt());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match solve(mid) {
                Some(xm) if norm_sqr(&xm) <= p_max => hi = mid,
                _ => lo = mid,
            }
        }
        x = solve(hi).expect("positive shift");
    }
    let fit = matvec(a.as_ref(), &x);
    r.iter().zip(&fit).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt()
}

fn aar_support_oracle(_: &Hooks) -> Result<String, String> {
    let dims = Dims { n_u: 2, n_tx: 4, n_rx: 1 };
    let params = qpsk(1, 1);
    let table = AicTable::build(&params);
    let settings = AarSettings::new(2, 500);
    let (mut aar, mut best) = (0.0, 0.0);
    for seed in 0..100 {
        let ch = channel(seed, dims, 0.0);
        let pre = build_bd_precoder(&ch, 1).map_err(|e| e.to_string())?;
        let symbols = random_symbols(seed, &params, &table, 2);
        let r: Vec<C64> = effective_rx(&pre.eff_channels, &symbols).into_iter().flatten().collect();
        let p_max = tx_direct(&pre, &symbols).power();
        let sig = AarSolver::new(ch.h_csit.as_ref())
            .solve(&r, &settings, p_max)
            .map_err(|e| e.to_string())?;
        aar += sig.residual_norm;
        let mut b = f64::INFINITY;
        for i in 0..4 {
            for j in i + 1..4 {
                b = b.min(ball_ls_residual(&ch.h_csit, &r, &[i, j], p_max));
            }
        }
        best += b;
    }
    ensure(aar <= 1.5 * best + 1e-9, || format!("mean residual {aar:.4e} vs oracle {best:.4e}"))?;
    Ok(format!("mean residual {:.3e}, oracle {:.3e}", aar / 100.0, best / 100.0))
}

fn flop_counts(_: &Hooks) -> Result<String, String> {
    let a = flops_min_power(15, 4, 105);
    let b = flops_aar(15, 4, 105, 80, 100);
    ensure(a == 618105.0 && b == 4318830.0, || format!("got {a} and {b}"))?;
    Ok("618105 and 4318830".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let r = run_suite(&Hooks::default());
        for c in &r.checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert_eq!(r.checks.len(), check_names().len());
    }

    fn flipped(u: C64, v: f64) -> C64 {
        -txgen::soft_threshold(u, v)
    }

    #[test]
    fn sign_flip_is_caught_by_name() {
        let r = run_suite(&Hooks {
            soft_threshold: flipped,
        });
        let failed: Vec<_> = r.failed().map(|c| c.name).collect();
        assert_eq!(failed, vec!["soft_threshold_identities"]);
        assert!(!r.passed);
    }
}
