//! Per-user GSM detection from `y_k = Ĥ_k s_k + n_k`.
//!
//! [`detect_ml`] is the exhaustive reference; [`ObMmse`] is the ordered
//! block MMSE detector used by the simulator.

use faer::MatRef;

use crate::error::{Error, Result};
use crate::gsm::{AicTable, GsmSymbol, ImParams, Variant};
use crate::linalg::{hpd_solve_small, C64, ZERO};

/// Hypothesis budget of the exhaustive detector.
pub const ML_MAX_HYPOTHESES: usize = 1 << 20;

#[derive(Debug, Clone, Copy)]
pub struct DetectorInput<'a> {
    pub y: &'a [C64],
    /// `n_rx × n_s` effective channel known to the receiver.
    pub h_eff: MatRef<'a, C64>,
    /// Per-real-dimension noise variance.
    pub sigma2: f64,
    pub params: &'a ImParams,
    pub table: &'a AicTable,
}

/// A hard decision: AIC table index plus one constellation label per
/// carried symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Detection {
    pub aic_index: usize,
    pub labels: Vec<usize>,
}

impl Detection {
    pub fn to_symbol(&self, params: &ImParams, table: &AicTable) -> GsmSymbol {
        let c = params.constellation();
        let values = match params.variant() {
            Variant::Full => self.labels.iter().map(|&l| c.point(l)).collect(),
            Variant::Reduced => vec![c.point(self.labels[0]); params.n_a()],
        };
        GsmSymbol {
            aic: table.combo(self.aic_index).to_vec(),
            values,
        }
    }

    /// Writes the bits this decision stands for into `out`.
    pub fn write_bits(&self, params: &ImParams, out: &mut [u8]) {
        let sb = params.spatial_bits();
        for (j, b) in out[..sb].iter_mut().enumerate() {
            *b = ((self.aic_index >> (sb - 1 - j)) & 1) as u8;
        }
        let c = params.constellation();
        let k = c.bits();
        for (j, &l) in self.labels.iter().enumerate() {
            c.label_to_bits(l, &mut out[sb + j * k..sb + (j + 1) * k]);
        }
    }
}

fn check_shapes(input: &DetectorInput<'_>) -> Result<()> {
    let p = input.params;
    if input.h_eff.ncols() != p.n_s() || input.h_eff.nrows() != input.y.len() {
        return Err(Error::Contract(format!(
            "effective channel is {}x{}, expected {}x{}",
            input.h_eff.nrows(),
            input.h_eff.ncols(),
            input.y.len(),
            p.n_s()
        )));
    }
    Ok(())
}

fn residual_energy(input: &DetectorInput<'_>, aic: &[usize], values: &[C64]) -> f64 {
    let h = input.h_eff;
    let mut acc = 0.0;
    for (row, &yr) in input.y.iter().enumerate() {
        let mut e = yr;
        for (&i, &v) in aic.iter().zip(values) {
            e -= h[(row, i)] * v;
        }
        acc += e.norm_sqr();
    }
    acc
}

/// Exhaustive search over every table AIC and constellation filling.
pub fn detect_ml_raw(input: &DetectorInput<'_>) -> Result<Detection> {
    check_shapes(input)?;
    let p = input.params;
    let c = p.constellation();
    let m = c.order();
    let carried = p.carried_symbols();
    let fillings = m
        .checked_pow(carried as u32)
        .filter(|f| f.saturating_mul(input.table.len()) <= ML_MAX_HYPOTHESES)
        .ok_or_else(|| {
            Error::Contract(format!(
                "exhaustive detection over {} AICs x {m}^{carried} fillings exceeds {ML_MAX_HYPOTHESES} hypotheses",
                input.table.len()
            ))
        })?;
    let n_a = p.n_a();
    let mut labels = vec![0usize; carried];
    let mut values = vec![ZERO; n_a];
    let mut best = (f64::INFINITY, 0usize, vec![0usize; carried]);
    for (aic_index, aic) in input.table.combos().iter().enumerate() {
        for f in 0..fillings {
            // first carried symbol is the most significant digit
            let mut rest = f;
            for slot in labels.iter_mut().rev() {
                *slot = rest % m;
                rest /= m;
            }
            match p.variant() {
                Variant::Full => {
                    for (v, &l) in values.iter_mut().zip(&labels) {
                        *v = c.point(l);
                    }
                }
                Variant::Reduced => values.fill(c.point(labels[0])),
            }
            let metric = residual_energy(input, aic, &values);
            if metric < best.0 {
                best = (metric, aic_index, labels.clone());
            }
        }
    }
    Ok(Detection {
        aic_index: best.1,
        labels: best.2,
    })
}

pub fn detect_ml(input: &DetectorInput<'_>) -> Result<GsmSymbol> {
    Ok(detect_ml_raw(input)?.to_symbol(input.params, input.table))
}

/// `(H_Iᴴ H_I + reg·I)` and `H_Iᴴ y`, column-major.
fn normal_equations(
    h: MatRef<'_, C64>,
    y: &[C64],
    aic: &[usize],
    reg: f64,
    gram: &mut [C64],
    rhs: &mut [C64],
) {
    let n_a = aic.len();
    for (a, &i) in aic.iter().enumerate() {
        for (b, &j) in aic.iter().enumerate() {
            let mut s = ZERO;
            for row in 0..y.len() {
                s += h[(row, i)].conj() * h[(row, j)];
            }
            gram[b * n_a + a] = s;
        }
        gram[a * n_a + a] += reg;
        rhs[a] = (0..y.len()).map(|row| h[(row, i)].conj() * y[row]).sum();
    }
}

/// Ordered block MMSE detector.
///
/// AICs are visited in decreasing order of matched-filter energy
/// `Σ_{i∈I} |h_iᴴy|² / ‖h_i‖⁴`. Each candidate gets a regularised
/// least-squares estimate, per-position slicing and a residual check; the
/// search stops at the first residual below `threshold_scale · 2σ²·n_rx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObMmse {
    pub threshold_scale: f64,
}

impl Default for ObMmse {
    fn default() -> Self {
        Self {
            threshold_scale: 1.0,
        }
    }
}

impl ObMmse {
    pub fn detect_raw(&self, input: &DetectorInput<'_>) -> Result<Detection> {
        check_shapes(input)?;
        let p = input.params;
        let c = p.constellation();
        let h = input.h_eff;
        let n_rx = input.y.len();
        let n_a = p.n_a();
        let energy: Vec<f64> = (0..p.n_s())
            .map(|i| {
                let mut num = ZERO;
                let mut den = 0.0;
                for (row, &yr) in input.y.iter().enumerate() {
                    num += h[(row, i)].conj() * yr;
                    den += h[(row, i)].norm_sqr();
                }
                if den > 0.0 {
                    (num / den).norm_sqr()
                } else {
                    0.0
                }
            })
            .collect();
        let mut order: Vec<(f64, usize)> = input
            .table
            .combos()
            .iter()
            .enumerate()
            .map(|(idx, aic)| (aic.iter().map(|&i| energy[i]).sum(), idx))
            .collect();
        // stable: equal weights keep table order
        order.sort_by(|a, b| b.0.total_cmp(&a.0));

        let reg = 2.0 * input.sigma2;
        let v_th = self.threshold_scale * 2.0 * input.sigma2 * n_rx as f64;
        let mut gram = vec![ZERO; n_a * n_a];
        let mut rhs = vec![ZERO; n_a];
        let mut values = vec![ZERO; n_a];
        let mut labels = vec![0usize; p.carried_symbols()];
        let mut best: Option<(f64, usize, Vec<usize>)> = None;

        for &(_, idx) in &order {
            let aic = input.table.combo(idx);
            normal_equations(h, input.y, aic, reg, &mut gram, &mut rhs);
            if !hpd_solve_small(&mut gram, n_a, &mut rhs) {
                // singular only when σ² = 0 and the columns are dependent
                let load = 1e-12 * (0..n_a).map(|a| gram[a * n_a + a].re).sum::<f64>().max(1.0);
                normal_equations(h, input.y, aic, reg + load, &mut gram, &mut rhs);
                if !hpd_solve_small(&mut gram, n_a, &mut rhs) {
                    continue;
                }
            }
            match p.variant() {
                Variant::Full => {
                    for ((l, v), &e) in labels.iter_mut().zip(values.iter_mut()).zip(&rhs) {
                        *l = c.slice(e);
                        *v = c.point(*l);
                    }
                }
                Variant::Reduced => {
                    let mean = rhs.iter().sum::<C64>() / n_a as f64;
                    labels[0] = c.slice(mean);
                    values.fill(c.point(labels[0]));
                }
            }
            let res = residual_energy(input, aic, &values);
            let better = match &best {
                None => true,
                Some((b, b_idx, _)) => res < *b || (res == *b && idx < *b_idx),
            };
            if better {
                best = Some((res, idx, labels.clone()));
            }
            if res <= v_th {
                break;
            }
        }
        let (_, aic_index, labels) = best.unwrap_or((0.0, 0, vec![0; p.carried_symbols()]));
        Ok(Detection { aic_index, labels })
    }

    pub fn detect(&self, input: &DetectorInput<'_>) -> Result<GsmSymbol> {
        Ok(self.detect_raw(input)?.to_symbol(input.params, input.table))
    }
}

pub fn detect_obmmse(input: &DetectorInput<'_>) -> Result<GsmSymbol> {
    ObMmse::default().detect(input)
}

/// Hamming distance and length of two bit sequences.
pub fn count_errors(tx_bits: &[u8], rx_bits: &[u8]) -> Result<(u64, u64)> {
    if tx_bits.len() != rx_bits.len() {
        return Err(Error::Contract(format!(
            "bit sequences differ in length ({} vs {})",
            tx_bits.len(),
            rx_bits.len()
        )));
    }
    let errors = tx_bits
        .iter()
        .zip(rx_bits)
        .filter(|(a, b)| (*a & 1) != (*b & 1))
        .count();
    Ok((errors as u64, tx_bits.len() as u64))
}
