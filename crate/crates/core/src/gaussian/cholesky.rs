//! Cholesky factorization with a diagonal jitter ladder.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// First rung of the jitter ladder, relative to the scale (trace).
pub const JITTER_START: f64 = 1e-10;
/// Last rung of the jitter ladder, relative to the scale (trace).
pub const JITTER_MAX: f64 = 1e-6;

/// Relative pivot floor for the unjittered attempt.
const PIVOT_FLOOR: f64 = 1e-14;

/// Lower-triangular factor `L` with `L Lᵀ = A + jitter·I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// Absolute jitter added to the diagonal (0 when none was needed).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn into_lower(self) -> DMatrix<f64> {
        self.lower
    }

    /// Solves `(L Lᵀ) X = B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        self.solve_mut(&mut x);
        x
    }

    pub fn solve_mut(&self, b: &mut DMatrix<f64>) {
        if self.lower.nrows() == 0 {
            return;
        }
        self.lower.solve_lower_triangular_mut(b);
        self.lower.tr_solve_lower_triangular_mut(b);
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        if self.lower.nrows() > 0 {
            self.lower.solve_lower_triangular_mut(&mut x);
            self.lower.tr_solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// Solves `L x = b` only.
    pub fn forward_solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        if self.lower.nrows() > 0 {
            self.lower.solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// Solves `L X = B` only.
    pub fn forward_solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        if self.lower.nrows() > 0 {
            self.lower.solve_lower_triangular_mut(&mut x);
        }
        x
    }
}

/// Factorizes a symmetric matrix, escalating diagonal jitter from
/// `1e-10·trace` by factors of ten up to `1e-6·trace` when needed.
///
/// Only the lower triangle of `cov` is read. The all-zero matrix factors to
/// the zero matrix with no jitter.
pub fn robust_cholesky(cov: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let scale = cov.trace();
    robust_cholesky_scaled(cov, scale)
}

/// As [`robust_cholesky`] but with the jitter ladder relative to `scale`
/// instead of the trace of `cov`.
pub fn robust_cholesky_scaled(cov: &DMatrix<f64>, scale: f64) -> Result<CholeskyFactor> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPsd { max_jitter: 0.0 });
    }
    let n = cov.nrows();
    if cov.iter().all(|&v| v == 0.0) {
        return Ok(CholeskyFactor {
            lower: DMatrix::zeros(n, n),
            jitter: 0.0,
        });
    }
    let scale = if scale > 0.0 { scale } else { cov.diagonal().abs().sum() };

    if let Some(lower) = factor(cov, 0.0, PIVOT_FLOOR * scale) {
        return Ok(CholeskyFactor { lower, jitter: 0.0 });
    }
    let mut rel = JITTER_START;
    while rel <= JITTER_MAX * (1.0 + 1e-9) {
        let jitter = rel * scale;
        if let Some(lower) = factor(cov, jitter, 0.0) {
            return Ok(CholeskyFactor { lower, jitter });
        }
        rel *= 10.0;
    }
    Err(Error::NotPsd {
        max_jitter: JITTER_MAX * scale,
    })
}

/// Right-looking column Cholesky of `cov + jitter·I`; `None` when a pivot
/// falls at or below `floor`.
fn factor(cov: &DMatrix<f64>, jitter: f64, floor: f64) -> Option<DMatrix<f64>> {
    let n = cov.nrows();
    let mut a = cov.clone();
    for j in 0..n {
        a[(j, j)] += jitter;
    }
    let data = a.as_mut_slice();
    let mut col = vec![0.0; n];
    for j in 0..n {
        let pivot = data[j + j * n];
        if !(pivot > floor) || pivot <= 0.0 {
            return None;
        }
        let d = pivot.sqrt();
        data[j + j * n] = d;
        for i in (j + 1)..n {
            data[i + j * n] /= d;
            col[i] = data[i + j * n];
        }
        for k in (j + 1)..n {
            let lkj = col[k];
            if lkj == 0.0 {
                continue;
            }
            let dst = &mut data[k + k * n..(k + 1) * n];
            for (x, l) in dst.iter_mut().zip(&col[k..]) {
                *x -= l * lkj;
            }
        }
    }
    for j in 0..n {
        for i in 0..j {
            data[i + j * n] = 0.0;
        }
    }
    Some(a)
}
