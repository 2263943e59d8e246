//! Small dense helpers on top of `faer`.

use faer::{Mat, MatRef};
use num_complex::Complex64;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    norm_sqr(v).sqrt()
}

/// `A x`
pub fn matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    let mut y = vec![ZERO; a.nrows()];
    matvec_into(a, x, &mut y);
    y
}

pub fn matvec_into(a: MatRef<'_, C64>, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(a.ncols(), x.len());
    y.fill(ZERO);
    for (j, &xj) in x.iter().enumerate() {
        if xj == ZERO {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
}

/// `Aᴴ x`
pub fn adjoint_matvec(a: MatRef<'_, C64>, x: &[C64]) -> Vec<C64> {
    debug_assert_eq!(a.nrows(), x.len());
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            x.iter()
                .enumerate()
                .fold(ZERO, |acc, (i, &xi)| acc + col[i].conj() * xi)
        })
        .collect()
}

/// Selects the columns `idx` of `a`.
pub fn select_cols(a: MatRef<'_, C64>, idx: &[usize]) -> Mat<C64> {
    Mat::from_fn(a.nrows(), idx.len(), |i, j| a[(i, idx[j])])
}

pub fn frobenius(a: MatRef<'_, C64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            acc += a[(i, j)].norm_sqr();
        }
    }
    acc.sqrt()
}

/// Solves the Hermitian positive-definite system `A x = b` in place by
/// Cholesky. Intended for the few-by-few systems of the detectors.
/// Returns `false` if `A` is not numerically positive definite.
pub fn hpd_solve_small(a: &mut [C64], n: usize, b: &mut [C64]) -> bool {
    // a is column-major n×n; lower Cholesky factor overwrites it.
    for j in 0..n {
        let mut d = a[j * n + j].re;
        for k in 0..j {
            d -= a[k * n + j].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        a[j * n + j] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[j * n + i];
            for k in 0..j {
                s -= a[k * n + i] * a[k * n + j].conj();
            }
            a[j * n + i] = s / d;
        }
    }
    // forward: L y = b
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i].re;
    }
    // backward: Lᴴ x = y
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[i * n + k].conj() * b[k];
        }
        b[i] = s / a[i * n + i].re;
    }
    true
}
