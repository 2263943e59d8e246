//! Block-diagonalisation precoding from SVD null spaces.

use faer::{Mat, MatRef};

use crate::channel::{ChannelSet, Dims};
use crate::error::{Error, Result};
use crate::gsm::GsmSymbol;
use crate::linalg::{C64, ZERO};

/// Checks the two dimension constraints of BD precoding and names the one
/// that fails.
pub fn check_bd_dims(dims: Dims, n_s: usize) -> Result<()> {
    if n_s == 0 {
        return Err(Error::Config("n_s must be at least 1".into()));
    }
    if n_s * dims.n_u > dims.n_tx {
        return Err(Error::Config(format!(
            "n_s <= n_tx / n_u violated: {n_s} * {} > {}",
            dims.n_u, dims.n_tx
        )));
    }
    let interferers = (dims.n_u - 1) * dims.n_rx;
    if dims.n_tx < interferers + n_s {
        return Err(Error::Config(format!(
            "null-space dimension n_tx - (n_u - 1) * n_rx = {} is below n_s = {n_s}",
            dims.n_tx as isize - interferers as isize
        )));
    }
    Ok(())
}

/// Per-user precoders `F_k` (n_tx × n_s, orthonormal columns) and the
/// effective channels `Ĥ_k = H̄_k F_k` against the CSIT channel.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    pub f_blocks: Vec<Mat<C64>>,
    pub eff_channels: Vec<Mat<C64>>,
}

/// Orthonormal basis of the null space of `a` from its full SVD, in the
/// order the right-singular vectors come out.
pub fn null_space(a: MatRef<'_, C64>) -> Result<Mat<C64>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(Mat::identity(n, n));
    }
    let svd = a
        .svd()
        .map_err(|e| Error::Numerical(format!("SVD did not converge: {e:?}")))?;
    let s = svd.S().column_vector();
    let sigma_max = if s.nrows() > 0 { s[0].re } else { 0.0 };
    let tol = a.nrows().max(n) as f64 * f64::EPSILON * sigma_max;
    let rank = (0..s.nrows()).filter(|&i| s[i].re > tol).count();
    let v = svd.V();
    Ok(v.subcols(rank, n - rank).to_owned())
}

pub fn build_bd_precoder(channel: &ChannelSet, n_s: usize) -> Result<PrecoderSet> {
    let dims = channel.dims;
    check_bd_dims(dims, n_s)?;
    let mut f_blocks = Vec::with_capacity(dims.n_u);
    for k in 0..dims.n_u {
        let others: Vec<usize> = (0..dims.n_u * dims.n_rx)
            .filter(|r| r / dims.n_rx != k)
            .collect();
        let h_tilde = Mat::from_fn(others.len(), dims.n_tx, |i, j| channel.h_csit[(others[i], j)]);
        let null = null_space(h_tilde.as_ref())?;
        if null.ncols() < n_s {
            return Err(Error::Numerical(format!(
                "user {k}: rank deficiency leaves a {}-dimensional null space, need n_s = {n_s}",
                null.ncols()
            )));
        }
        f_blocks.push(null.subcols(0, n_s).to_owned());
    }
    let eff_channels = effective_channels(&f_blocks, channel.h_csit.as_ref(), dims.n_rx);
    Ok(PrecoderSet {
        f_blocks,
        eff_channels,
    })
}

/// `H_k F_k` for every user, against the supplied channel.
pub fn effective_channels(f_blocks: &[Mat<C64>], h: MatRef<'_, C64>, n_rx: usize) -> Vec<Mat<C64>> {
    f_blocks
        .iter()
        .enumerate()
        .map(|(k, f)| h.subrows(k * n_rx, n_rx) * f)
        .collect()
}

impl PrecoderSet {
    pub fn n_u(&self) -> usize {
        self.f_blocks.len()
    }

    /// Effective channels against a different channel matrix (the true `H`
    /// when the precoder was built from an imperfect estimate).
    pub fn effective_against(&self, h: MatRef<'_, C64>, n_rx: usize) -> Vec<Mat<C64>> {
        effective_channels(&self.f_blocks, h, n_rx)
    }
}

/// Noise-free received vectors `r_k = Ĥ_k(:, I_k) s_k(I_k)`.
pub fn effective_rx(eff_channels: &[Mat<C64>], symbols: &[GsmSymbol]) -> Vec<Vec<C64>> {
    eff_channels
        .iter()
        .zip(symbols)
        .map(|(h, s)| {
            let mut r = vec![ZERO; h.nrows()];
            for (&i, &v) in s.aic.iter().zip(&s.values) {
                for (row, ri) in r.iter_mut().enumerate() {
                    *ri += h[(row, i)] * v;
                }
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channel;
    use crate::linalg::{frobenius, matvec};
    use crate::rng::{Purpose, SeedTree};

    fn draw(seed: u64, dims: Dims, sigma_err: f64) -> ChannelSet {
        let t = SeedTree::new(seed);
        draw_channel(
            &mut t.stream(Purpose::Channel, 0, 0),
            &mut t.stream(Purpose::CsitError, 0, 0),
            dims,
            sigma_err,
        )
        .unwrap()
    }

    fn worst_leakage(ch: &ChannelSet, p: &PrecoderSet) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..ch.dims.n_u {
            for i in 0..ch.dims.n_u {
                if i != k {
                    let hi = ch.user_csit(i);
                    let leak = frobenius((hi * &p.f_blocks[k]).as_ref()) / frobenius(hi);
                    worst = worst.max(leak);
                }
            }
        }
        worst
    }

    #[test]
    fn two_user_single_antenna() {
        let dims = Dims { n_u: 2, n_tx: 2, n_rx: 1 };
        let ch = draw(1, dims, 0.0);
        let p = build_bd_precoder(&ch, 1).unwrap();
        let leak = (ch.user_csit(1) * &p.f_blocks[0])[(0, 0)].norm();
        assert!(leak < 1e-12);
    }

    #[test]
    fn nulling_and_orthonormality_random() {
        let dims = Dims { n_u: 4, n_tx: 14, n_rx: 2 };
        for seed in 0..100 {
            let ch = draw(seed, dims, 0.0);
            let p = build_bd_precoder(&ch, 3).unwrap();
            assert!(worst_leakage(&ch, &p) <= 1e-9);
            for f in &p.f_blocks {
                let g = f.adjoint() * f;
                let dev = frobenius((&g - Mat::<C64>::identity(3, 3)).as_ref());
                assert!(dev <= 1e-10, "{dev}");
            }
        }
    }

    #[test]
    fn infeasible_dimensions_named() {
        let dims = Dims { n_u: 3, n_tx: 8, n_rx: 2 };
        let ch = draw(0, dims, 0.0);
        let err = build_bd_precoder(&ch, 3).unwrap_err().to_string();
        assert!(err.contains("n_s <= n_tx / n_u"), "{err}");
        let dims = Dims { n_u: 3, n_tx: 9, n_rx: 4 };
        let ch = draw(0, dims, 0.0);
        let err = build_bd_precoder(&ch, 2).unwrap_err().to_string();
        assert!(err.contains("null-space dimension"), "{err}");
    }

    #[test]
    fn reference_config_is_feasible() {
        let dims = Dims { n_u: 15, n_tx: 105, n_rx: 4 };
        assert!(check_bd_dims(dims, 7).is_ok());
        assert_eq!(dims.n_tx - (dims.n_u - 1) * dims.n_rx, 49);
    }

    #[test]
    fn rank_deficient_channel_reported() {
        // user 1 and user 2 share identical rows, so H̃_0 has rank 1
        let dims = Dims { n_u: 3, n_tx: 3, n_rx: 1 };
        let mut ch = draw(2, dims, 0.0);
        for j in 0..3 {
            let v = ch.h_csit[(1, j)];
            ch.h_csit[(2, j)] = v;
        }
        ch.h_true = ch.h_csit.clone();
        // n_s = 1: user 0's null space is 2-dimensional, fine; users 1 and 2
        // each have a 2-dimensional null space containing the other's row
        // direction, which is still feasible.
        assert!(build_bd_precoder(&ch, 1).is_ok());
        let null = null_space(ch.h_csit.as_ref().subrows(1, 2)).unwrap();
        assert_eq!(null.ncols(), 2);
    }

    #[test]
    fn model_equivalence_perfect_csit() {
        let dims = Dims { n_u: 3, n_tx: 12, n_rx: 2 };
        let params = crate::gsm::ImParams::new(4, 2, "qpsk".parse().unwrap(), Default::default()).unwrap();
        let table = crate::gsm::AicTable::build(&params);
        for seed in 0..20 {
            let ch = draw(seed, dims, 0.0);
            let p = build_bd_precoder(&ch, 4).unwrap();
            let symbols: Vec<GsmSymbol> = (0..3)
                .map(|k| {
                    let bits: Vec<u8> = (0..params.bits_per_user()).map(|j| ((seed as usize + j * (k + 1)) % 3 == 0) as u8).collect();
                    crate::gsm::encode(&bits, &params, &table).unwrap()
                })
                .collect();
            let via_eff = effective_rx(&p.eff_channels, &symbols);
            let mut x = vec![ZERO; dims.n_tx];
            for (f, s) in p.f_blocks.iter().zip(&symbols) {
                let xk = matvec(f.as_ref(), &s.densify(4));
                x.iter_mut().zip(xk).for_each(|(a, b)| *a += b);
            }
            let y = matvec(ch.h_true.as_ref(), &x);
            for k in 0..3 {
                let yk = &y[k * 2..(k + 1) * 2];
                let diff: f64 = yk.iter().zip(&via_eff[k]).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
                let scale: f64 = yk.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
                assert!(diff <= 1e-10 * scale.max(1.0));
            }
        }
    }

    #[test]
    fn residual_mui_with_imperfect_csit() {
        let dims = Dims { n_u: 3, n_tx: 12, n_rx: 2 };
        let ch = draw(11, dims, 0.1);
        let p = build_bd_precoder(&ch, 4).unwrap();
        // leakage into user 1 from user 0 through the true channel
        let leak = frobenius((ch.user_true(1) * &p.f_blocks[0]).as_ref());
        assert!(leak > 1e-3);
    }

    #[test]
    fn zero_symbol_gives_zero_rx() {
        let dims = Dims { n_u: 2, n_tx: 6, n_rx: 2 };
        let ch = draw(3, dims, 0.0);
        let p = build_bd_precoder(&ch, 2).unwrap();
        let r = effective_rx(&p.eff_channels, &[GsmSymbol::zero(1), GsmSymbol::zero(1)]);
        assert!(r.iter().flatten().all(|v| *v == ZERO));
    }
}
