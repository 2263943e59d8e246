//! Transmit-signal construction.
//!
//! Three ways to produce the length-`n_tx` vector that the base station
//! radiates:
//!
//! * **direct**: `x = Σ_k F_k s_k`;
//! * **min-power**: the least-norm `x̂` reproducing the same noise-free
//!   received vectors, `x̂ = H̄ᴴ (H̄ H̄ᴴ)⁻¹ r`;
//! * **AAR** (active antenna reduction): an accelerated proximal-gradient
//!   ℓ1 heuristic selects `n_on` antennas, then a projected-gradient
//!   polishing pass fits the signal on that support under the power cap
//!   `‖x‖² ≤ P_max`.

use faer::linalg::solvers::{Llt, Solve};
use faer::{Mat, MatRef, Side};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gsm::GsmSymbol;
use crate::linalg::{adjoint_matvec, matvec, norm, norm_sqr, C64, ZERO};
use crate::precode::PrecoderSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxMode {
    Direct,
    MinPower,
    Aar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TxSignal {
    pub x: Vec<C64>,
    pub mode: TxMode,
    /// Active antennas; every index for direct and min-power.
    pub support: Vec<usize>,
    /// `‖r − H̄x‖₂` against the transmitter-side target.
    pub residual_norm: f64,
}

impl TxSignal {
    pub fn power(&self) -> f64 {
        norm_sqr(&self.x)
    }

    pub fn active_antennas(&self) -> usize {
        self.x.iter().filter(|v| **v != ZERO).count()
    }
}

/// `‖r − H x‖₂`
pub fn residual(h: MatRef<'_, C64>, x: &[C64], r: &[C64]) -> f64 {
    let hx = matvec(h, x);
    hx.iter()
        .zip(r)
        .map(|(a, b)| (b - a).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

pub fn tx_direct(precoder: &PrecoderSet, symbols: &[GsmSymbol]) -> TxSignal {
    let n_tx = precoder.f_blocks.first().map_or(0, |f| f.nrows());
    let mut x = vec![ZERO; n_tx];
    for (f, s) in precoder.f_blocks.iter().zip(symbols) {
        for (&i, &v) in s.aic.iter().zip(&s.values) {
            let col = f.col(i);
            for (row, xr) in x.iter_mut().enumerate() {
                *xr += col[row] * v;
            }
        }
    }
    TxSignal {
        x,
        mode: TxMode::Direct,
        support: (0..n_tx).collect(),
        residual_norm: 0.0,
    }
}

/// Cached Cholesky factor of `H̄ H̄ᴴ` for repeated least-norm solves on
/// one channel.
pub struct MinPowerSolver {
    h: Mat<C64>,
    llt: Llt<C64>,
}

impl MinPowerSolver {
    pub fn new(h: MatRef<'_, C64>) -> Result<Self> {
        if h.ncols() < h.nrows() {
            return Err(Error::Config(format!(
                "least-norm transmission needs n_tx >= n_u * n_rx ({} < {})",
                h.ncols(),
                h.nrows()
            )));
        }
        let gram = h * h.adjoint();
        let llt = gram
            .llt(Side::Lower)
            .map_err(|e| Error::Numerical(format!("H H^H is not positive definite: {e:?}")))?;
        Ok(Self {
            h: h.to_owned(),
            llt,
        })
    }

    pub fn solve(&self, r: &[C64]) -> TxSignal {
        let mut w = Mat::from_fn(r.len(), 1, |i, _| r[i]);
        self.llt.solve_in_place(w.as_mut());
        let w: Vec<C64> = (0..r.len()).map(|i| w[(i, 0)]).collect();
        let x = adjoint_matvec(self.h.as_ref(), &w);
        let residual_norm = residual(self.h.as_ref(), &x, r);
        TxSignal {
            support: (0..x.len()).collect(),
            x,
            mode: TxMode::MinPower,
            residual_norm,
        }
    }
}

pub fn tx_min_power(h: MatRef<'_, C64>, r: &[C64]) -> Result<TxSignal> {
    Ok(MinPowerSolver::new(h)?.solve(r))
}

/// Complex soft threshold `S(u, v) = max(|u|−v, 0) / (max(|u|−v, 0) + v) · u`.
pub fn soft_threshold(u: C64, v: f64) -> C64 {
    let mag = u.norm();
    if mag <= v {
        return ZERO;
    }
    u * ((mag - v) / mag)
}

/// Euclidean projection onto `{x : ‖x‖² ≤ p_max}`, in place.
pub fn project_ball(v: &mut [C64], p_max: f64) {
    let e = norm_sqr(v);
    if e > p_max {
        let s = (p_max / e).sqrt();
        v.iter_mut().for_each(|z| *z *= s);
    }
}

/// How the ℓ1 weight is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lambda {
    /// `λ = α · ‖H̄ᴴ r‖_∞`
    Relative(f64),
    Absolute(f64),
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda::Relative(0.01)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AarSettings {
    pub n_on: usize,
    pub lambda: Lambda,
    /// Iterations in each phase.
    pub q_max: usize,
    pub accelerate: bool,
    pub polish: bool,
    /// Start the polishing phase from the phase-one iterate on the support
    /// instead of zero.
    pub warm_start: bool,
    /// Stop a phase once `‖x^(q) − x^(q−1)‖ ≤ tol · ‖x^(q)‖`.
    pub early_exit_tol: Option<f64>,
}

impl AarSettings {
    pub fn new(n_on: usize, q_max: usize) -> Self {
        Self {
            n_on,
            lambda: Lambda::default(),
            q_max,
            accelerate: true,
            polish: true,
            warm_start: false,
            early_exit_tol: None,
        }
    }

    pub fn validate(&self, n_tx: usize) -> Result<()> {
        if self.n_on == 0 || self.n_on > n_tx {
            return Err(Error::Config(format!(
                "0 < n_on <= n_tx violated (n_on = {}, n_tx = {n_tx})",
                self.n_on
            )));
        }
        if self.q_max == 0 {
            return Err(Error::Config("q_max must be at least 1".into()));
        }
        let l = match self.lambda {
            Lambda::Relative(a) | Lambda::Absolute(a) => a,
        };
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::Config(format!("lambda must be positive, got {l}")));
        }
        if let Some(t) = self.early_exit_tol {
            if !(t >= 0.0) {
                return Err(Error::Config(format!("early-exit tolerance must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// Objective values recorded by [`AarSolver::solve_traced`].
#[derive(Debug, Clone, Default)]
pub struct AarTrace {
    /// `½‖r − H̄x̂‖² + λ‖x̂‖₁` after each phase-one iteration, with the value
    /// at `x̂ = 0` first.
    pub phase1: Vec<f64>,
    /// `½‖r − H̄x̄‖²` after each polishing iteration, starting point first.
    pub phase2: Vec<f64>,
    pub lambda: f64,
    pub support: Vec<usize>,
}

/// Per-channel state for AAR: `H̄`, its Gram matrix and the step size
/// `γ = 1 / tr(H̄ᴴH̄)`.
pub struct AarSolver {
    h: Mat<C64>,
    gram: Mat<C64>,
    gamma: f64,
}

fn gram_matvec(g: &Mat<C64>, z: &[C64], out: &mut [C64]) {
    out.fill(ZERO);
    for (j, &zj) in z.iter().enumerate() {
        if zj == ZERO {
            continue;
        }
        let col = g.col_as_slice(j);
        out.iter_mut().zip(col).for_each(|(o, &c)| *o += c * zj);
    }
}

fn momentum(z: &mut [C64], x: &[C64], x_prev: &[C64], q: usize, accelerate: bool) {
    let beta = if accelerate {
        q as f64 / (q as f64 + 3.0)
    } else {
        0.0
    };
    for ((zi, &xi), &pi) in z.iter_mut().zip(x).zip(x_prev) {
        *zi = xi + (xi - pi) * beta;
    }
}

fn converged(x: &[C64], x_prev: &[C64], tol: Option<f64>) -> bool {
    match tol {
        None => false,
        Some(t) => {
            let d: f64 = x
                .iter()
                .zip(x_prev)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            d <= t * norm(x)
        }
    }
}

/// Quadratic part `½‖r − Hx‖²` expressed through the Gram matrix.
fn half_sq_residual(g: &Mat<C64>, b: &[C64], r_sq: f64, x: &[C64], scratch: &mut [C64]) -> f64 {
    gram_matvec(g, x, scratch);
    let quad: f64 = x.iter().zip(scratch.iter()).map(|(a, c)| (a.conj() * c).re).sum();
    let lin: f64 = x.iter().zip(b).map(|(a, c)| (a.conj() * c).re).sum();
    (0.5 * (r_sq - 2.0 * lin + quad)).max(0.0)
}

impl AarSolver {
    pub fn new(h: MatRef<'_, C64>) -> Self {
        let gram = h.adjoint() * h;
        let trace: f64 = (0..gram.nrows()).map(|i| gram[(i, i)].re).sum();
        let gamma = if trace > 0.0 { trace.recip() } else { 0.0 };
        Self {
            h: h.to_owned(),
            gram,
            gamma,
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn solve(&self, r: &[C64], settings: &AarSettings, p_max: f64) -> Result<TxSignal> {
        self.run(r, settings, p_max, None)
    }

    pub fn solve_traced(
        &self,
        r: &[C64],
        settings: &AarSettings,
        p_max: f64,
    ) -> Result<(TxSignal, AarTrace)> {
        let mut trace = AarTrace::default();
        let tx = self.run(r, settings, p_max, Some(&mut trace))?;
        Ok((tx, trace))
    }

    fn run(
        &self,
        r: &[C64],
        settings: &AarSettings,
        p_max: f64,
        mut trace: Option<&mut AarTrace>,
    ) -> Result<TxSignal> {
        let n = self.h.ncols();
        settings.validate(n)?;
        if r.len() != self.h.nrows() {
            return Err(Error::Contract(format!(
                "target has {} entries, channel has {} rows",
                r.len(),
                self.h.nrows()
            )));
        }
        let b = adjoint_matvec(self.h.as_ref(), r);
        let lambda = match settings.lambda {
            Lambda::Absolute(l) => l,
            Lambda::Relative(a) => a * b.iter().map(|v| v.norm()).fold(0.0, f64::max),
        };
        let gamma = self.gamma;
        let thresh = lambda * gamma;
        let r_sq = norm_sqr(r);

        // phase one: accelerated proximal gradient on the full antenna set
        let mut x = vec![ZERO; n];
        let mut x_prev = vec![ZERO; n];
        let mut z = vec![ZERO; n];
        let mut grad = vec![ZERO; n];
        let mut scratch = vec![ZERO; n];
        if let Some(t) = trace.as_deref_mut() {
            t.lambda = lambda;
            t.phase1.push(0.5 * r_sq);
        }
        for q in 1..=settings.q_max {
            gram_matvec(&self.gram, &z, &mut grad);
            std::mem::swap(&mut x, &mut x_prev);
            for i in 0..n {
                x[i] = z[i] - (grad[i] - b[i]) * gamma;
            }
            project_ball(&mut x, p_max);
            x.iter_mut().for_each(|v| *v = soft_threshold(*v, thresh));
            momentum(&mut z, &x, &x_prev, q, settings.accelerate);
            if let Some(t) = trace.as_deref_mut() {
                let l1: f64 = x.iter().map(|v| v.norm()).sum();
                t.phase1
                    .push(half_sq_residual(&self.gram, &b, r_sq, &x, &mut scratch) + lambda * l1);
            }
            if converged(&x, &x_prev, settings.early_exit_tol) {
                break;
            }
        }

        let support = select_support(&x, settings.n_on);
        let m = support.len();
        let mut out = vec![ZERO; n];
        if settings.polish && m > 0 {
            // phase two: projected gradient restricted to H̄(:, Λ)
            let g_sub = Mat::from_fn(m, m, |i, j| self.gram[(support[i], support[j])]);
            let b_sub: Vec<C64> = support.iter().map(|&i| b[i]).collect();
            let mut xs: Vec<C64> = if settings.warm_start {
                support.iter().map(|&i| x[i]).collect()
            } else {
                vec![ZERO; m]
            };
            let mut xs_prev = xs.clone();
            let mut zs = xs.clone();
            let mut g = vec![ZERO; m];
            let mut scratch_sub = vec![ZERO; m];
            if let Some(t) = trace.as_deref_mut() {
                t.phase2
                    .push(half_sq_residual(&g_sub, &b_sub, r_sq, &xs, &mut scratch_sub));
            }
            for q in 1..=settings.q_max {
                gram_matvec(&g_sub, &zs, &mut g);
                std::mem::swap(&mut xs, &mut xs_prev);
                for i in 0..m {
                    xs[i] = zs[i] - (g[i] - b_sub[i]) * gamma;
                }
                project_ball(&mut xs, p_max);
                momentum(&mut zs, &xs, &xs_prev, q, settings.accelerate);
                if let Some(t) = trace.as_deref_mut() {
                    t.phase2
                        .push(half_sq_residual(&g_sub, &b_sub, r_sq, &xs, &mut scratch_sub));
                }
                if converged(&xs, &xs_prev, settings.early_exit_tol) {
                    break;
                }
            }
            for (k, &i) in support.iter().enumerate() {
                out[i] = xs[k];
            }
        } else {
            for &i in &support {
                out[i] = x[i];
            }
        }
        if let Some(t) = trace {
            t.support = support.clone();
        }
        let residual_norm = residual(self.h.as_ref(), &out, r);
        Ok(TxSignal {
            x: out,
            mode: TxMode::Aar,
            support,
            residual_norm,
        })
    }
}

/// Positions of the `n_on` largest-magnitude nonzero entries, ascending.
/// Ties go to the lower index; fewer nonzeros than `n_on` returns them all.
pub fn select_support(x: &[C64], n_on: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).filter(|&i| x[i] != ZERO).collect();
    idx.sort_by(|&a, &b| x[b].norm().total_cmp(&x[a].norm()).then(a.cmp(&b)));
    idx.truncate(n_on);
    idx.sort_unstable();
    idx
}

pub fn tx_aar(
    h: MatRef<'_, C64>,
    r: &[C64],
    settings: &AarSettings,
    p_max: f64,
) -> Result<TxSignal> {
    AarSolver::new(h).solve(r, settings, p_max)
}
