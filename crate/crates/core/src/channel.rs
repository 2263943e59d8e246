//! Flat Rayleigh channels, the imperfect-CSIT split `H = H̄ + H_error`,
//! receiver noise and the SNR convention.

use faer::{Mat, MatRef};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub n_u: usize,
    pub n_tx: usize,
    pub n_rx: usize,
}

impl Dims {
    pub fn rows(&self) -> usize {
        self.n_u * self.n_rx
    }
}

/// Sample from CN(0, var).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// True channel `H`, transmitter-side estimate `H̄` and the CSIT error std.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    pub h_true: Mat<Complex64>,
    pub h_csit: Mat<Complex64>,
    pub sigma_err: f64,
    pub dims: Dims,
}

impl ChannelSet {
    /// Builds a perfect-CSIT channel set from a given matrix.
    pub fn perfect(h: Mat<Complex64>, n_u: usize, n_rx: usize) -> Result<Self> {
        if h.nrows() != n_u * n_rx {
            return Err(Error::Contract(format!(
                "channel has {} rows, expected n_u * n_rx = {}",
                h.nrows(),
                n_u * n_rx
            )));
        }
        let dims = Dims {
            n_u,
            n_tx: h.ncols(),
            n_rx,
        };
        Ok(Self {
            h_csit: h.clone(),
            h_true: h,
            sigma_err: 0.0,
            dims,
        })
    }

    /// Rows `[k·n_rx, (k+1)·n_rx)` of the true channel.
    pub fn user_true(&self, k: usize) -> MatRef<'_, Complex64> {
        self.h_true
            .as_ref()
            .subrows(k * self.dims.n_rx, self.dims.n_rx)
    }

    pub fn user_csit(&self, k: usize) -> MatRef<'_, Complex64> {
        self.h_csit
            .as_ref()
            .subrows(k * self.dims.n_rx, self.dims.n_rx)
    }
}

/// Draws one channel realisation.
///
/// `base` feeds `H̄` (or `H` under perfect CSIT) and `err` feeds
/// `H_error`, so runs differing only in `sigma_err` see correlated
/// channels. With `sigma_err = 0` the error stream is not touched and
/// `h_csit` is an exact copy of `h_true`.
pub fn draw_channel<R: Rng + ?Sized, E: Rng + ?Sized>(
    base: &mut R,
    err: &mut E,
    dims: Dims,
    sigma_err: f64,
) -> Result<ChannelSet> {
    if !(0.0..1.0).contains(&sigma_err) {
        return Err(Error::Config(format!(
            "CSIT error std must lie in [0, 1), got {sigma_err}"
        )));
    }
    let rows = dims.rows();
    let csit_var = 1.0 - sigma_err * sigma_err;
    // column-major fill order
    let mut draws = Vec::with_capacity(rows * dims.n_tx);
    for _ in 0..rows * dims.n_tx {
        draws.push(complex_gaussian(base, 1.0));
    }
    let h_csit = Mat::from_fn(rows, dims.n_tx, |i, j| draws[j * rows + i] * csit_var.sqrt());
    let h_true = if sigma_err == 0.0 {
        h_csit.clone()
    } else {
        let var = sigma_err * sigma_err;
        let mut h = h_csit.clone();
        for j in 0..dims.n_tx {
            for i in 0..rows {
                h[(i, j)] += complex_gaussian(err, var);
            }
        }
        h
    };
    Ok(ChannelSet {
        h_true,
        h_csit,
        sigma_err,
        dims,
    })
}

/// Receiver noise with per-real-dimension variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    sigma2: f64,
}

impl NoiseModel {
    pub fn new(sigma2: f64) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::Contract(format!(
                "noise variance must be positive and finite, got {sigma2}; use NoiseModel::noiseless()"
            )));
        }
        Ok(Self { sigma2 })
    }

    pub fn noiseless() -> Self {
        Self { sigma2: 0.0 }
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma2 == 0.0
    }

    /// Adds i.i.d. noise (real and imaginary parts `N(0, σ²)`) in place.
    pub fn add_to<R: Rng + ?Sized>(&self, rng: &mut R, y: &mut [Complex64]) {
        if self.is_noiseless() {
            return;
        }
        for v in y {
            *v += complex_gaussian(rng, 2.0 * self.sigma2);
        }
    }
}

pub fn draw_noise<R: Rng + ?Sized>(rng: &mut R, n_rx: usize, noise: NoiseModel) -> Vec<Complex64> {
    let mut n = vec![Complex64::new(0.0, 0.0); n_rx];
    noise.add_to(rng, &mut n);
    n
}

/// Noise variance for a per-user receive SNR in dB.
///
/// `calibration` is the mean received signal energy per user,
/// `E‖Ĥ_k s_k‖²`, so that `2σ²·n_rx = calibration / 10^(snr/10)`.
pub fn sigma2_for_snr(snr_db: f64, n_rx: usize, calibration: f64) -> Result<f64> {
    if !(calibration > 0.0 && calibration.is_finite()) {
        return Err(Error::Contract(format!(
            "calibration constant must be positive, got {calibration}"
        )));
    }
    Ok(calibration / (2.0 * n_rx as f64 * 10f64.powf(snr_db / 10.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, SeedTree};

    const DIMS: Dims = Dims {
        n_u: 3,
        n_tx: 12,
        n_rx: 2,
    };

    fn draw(seed: u64, sigma_err: f64) -> ChannelSet {
        let t = SeedTree::new(seed);
        draw_channel(
            &mut t.stream(Purpose::Channel, 0, 0),
            &mut t.stream(Purpose::CsitError, 0, 0),
            DIMS,
            sigma_err,
        )
        .unwrap()
    }

    #[test]
    fn perfect_csit_is_exact_copy() {
        let c = draw(1, 0.0);
        assert!(c.h_true == c.h_csit);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        assert!(draw(5, 0.1).h_true == draw(5, 0.1).h_true);
        assert!(draw(5, 0.1).h_true != draw(6, 0.1).h_true);
    }

    #[test]
    fn invalid_error_std() {
        let t = SeedTree::new(0);
        let r = draw_channel(
            &mut t.stream(Purpose::Channel, 0, 0),
            &mut t.stream(Purpose::CsitError, 0, 0),
            DIMS,
            1.0,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn unit_entry_variance_with_csit_error() {
        let t = SeedTree::new(9);
        let mut base = t.stream(Purpose::Channel, 0, 0);
        let mut err = t.stream(Purpose::CsitError, 0, 0);
        let dims = Dims { n_u: 1, n_tx: 1, n_rx: 1 };
        let n = 100_000;
        let (mut acc, mut acc_csit) = (0.0, 0.0);
        for _ in 0..n {
            let c = draw_channel(&mut base, &mut err, dims, 0.1).unwrap();
            acc += c.h_true[(0, 0)].norm_sqr();
            acc_csit += c.h_csit[(0, 0)].norm_sqr();
        }
        let var = acc / n as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
        assert!((acc_csit / n as f64 - 0.99).abs() < 0.02);
    }

    #[test]
    fn noise_energy_and_whiteness() {
        let t = SeedTree::new(3);
        let mut rng = t.stream(Purpose::Noise, 0, 0);
        let sigma2 = 0.37;
        let noise = NoiseModel::new(sigma2).unwrap();
        let n = 500_000;
        let (mut e0, mut e1, mut cross) = (0.0, 0.0, Complex64::new(0.0, 0.0));
        for _ in 0..n {
            let v = draw_noise(&mut rng, 2, noise);
            e0 += v[0].norm_sqr();
            e1 += v[1].norm_sqr();
            cross += v[0] * v[1].conj();
        }
        let target = 2.0 * sigma2;
        assert!((e0 / n as f64 / target - 1.0).abs() < 0.01);
        assert!((e1 / n as f64 / target - 1.0).abs() < 0.01);
        assert!((cross / n as f64).norm() / target < 0.02);
    }

    #[test]
    fn split_streams_are_uncorrelated() {
        let t = SeedTree::new(4);
        let mut a = t.stream(Purpose::Noise, 0, 1);
        let mut b = t.stream(Purpose::Noise, 0, 2);
        let noise = NoiseModel::new(0.5).unwrap();
        let n = 200_000;
        let mut cross = Complex64::new(0.0, 0.0);
        for _ in 0..n {
            cross += draw_noise(&mut a, 1, noise)[0] * draw_noise(&mut b, 1, noise)[0].conj();
        }
        assert!((cross / n as f64).norm() < 0.01);
    }

    #[test]
    fn noise_model_rejects_zero() {
        assert!(NoiseModel::new(0.0).is_err());
        assert!(NoiseModel::noiseless().is_noiseless());
        let mut rng = SeedTree::new(0).stream(Purpose::Noise, 0, 0);
        assert!(draw_noise(&mut rng, 3, NoiseModel::noiseless())
            .iter()
            .all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn snr_convention() {
        let cal = 8.0;
        let s0 = sigma2_for_snr(0.0, 4, cal).unwrap();
        assert!((2.0 * s0 * 4.0 - cal).abs() < 1e-12);
        let s10 = sigma2_for_snr(10.0, 4, cal).unwrap();
        assert!((s0 / s10 - 10.0).abs() < 1e-12);
        assert!(sigma2_for_snr(0.0, 4, 0.0).is_err());
        assert!(sigma2_for_snr(0.0, 4, -1.0).is_err());
    }
}
