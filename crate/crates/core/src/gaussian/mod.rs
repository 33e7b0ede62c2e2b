//! Multivariate Gaussian kernel: orthant probabilities, factorization and
//! sampling.
//!
//! Orthant probabilities `Φ_d(upper; mean, cov)` are dispatched by the
//! dimension left after removing unconstrained (`+∞`) and point-mass
//! margins: the error function for one variable, Genz's bivariate
//! quadrature for two, and randomized lattice QMC over Genz's
//! separation-of-variables transform above that. [`CdfOptions`] can route
//! dimensions three and four through a deterministic homotopy instead,
//! which is what the design criteria use.

mod bvn;
mod cholesky;
mod homotopy;
pub mod normal;
mod qmc;

pub use bvn::bvn_cdf;
pub use cholesky::{robust_cholesky, robust_cholesky_scaled, CholeskyFactor, JITTER_MAX, JITTER_START};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Largest dimension accepted by the orthant routines.
pub const MAX_DIM: usize = 20;

/// Variance (relative to the largest one) at or below which a margin is a
/// point mass.
const POINT_MASS: f64 = 1e-13;

/// Randomized QMC settings.
///
/// `sample_count` is the total lattice budget, split evenly across
/// `randomization_count` independent random shifts; the spread of the
/// per-shift means gives the standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QmcConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub randomization_count: usize,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self {
            sample_count: 4096,
            seed: 0x5eed_cafe,
            randomization_count: 16,
        }
    }
}

impl QmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 128 {
            return Err(Error::Config(format!(
                "qmc sample_count must be >= 128, got {}",
                self.sample_count
            )));
        }
        if self.randomization_count < 8 {
            return Err(Error::Config(format!(
                "qmc randomization_count must be >= 8, got {}",
                self.randomization_count
            )));
        }
        Ok(())
    }
}

/// Orthant evaluation settings used by the higher-level modules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdfOptions {
    pub qmc: QmcConfig,
    /// Largest dimension evaluated deterministically (2, 3 or 4).
    pub exact_up_to: usize,
}

impl Default for CdfOptions {
    fn default() -> Self {
        Self {
            qmc: QmcConfig::default(),
            exact_up_to: 4,
        }
    }
}

impl CdfOptions {
    /// Plain QMC above dimension two.
    pub fn qmc_only(qmc: QmcConfig) -> Self {
        Self { qmc, exact_up_to: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        self.qmc.validate()?;
        if !(2..=4).contains(&self.exact_up_to) {
            return Err(Error::Config(format!(
                "exact_up_to must be 2, 3 or 4, got {}",
                self.exact_up_to
            )));
        }
        Ok(())
    }
}

/// An orthant probability with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfEstimate {
    pub probability: f64,
    /// QMC standard error, or the quadrature error estimate on the
    /// deterministic paths (zero for one and two dimensions).
    pub std_error: f64,
}

impl CdfEstimate {
    fn exact(probability: f64) -> Self {
        Self {
            probability,
            std_error: 0.0,
        }
    }
}

/// `P(N ≤ upper)` for `N ~ Normal(mean, cov)`.
///
/// Entries of `upper` may be `+∞` (margin unconstrained) or `-∞`
/// (probability zero).
pub fn mvn_cdf(upper: &[f64], mean: &[f64], cov: &DMatrix<f64>, cfg: &QmcConfig) -> Result<CdfEstimate> {
    mvn_cdf_with(upper, mean, cov, &CdfOptions::qmc_only(*cfg))
}

/// [`mvn_cdf`] with explicit dispatch options.
pub fn mvn_cdf_with(upper: &[f64], mean: &[f64], cov: &DMatrix<f64>, opts: &CdfOptions) -> Result<CdfEstimate> {
    let d = upper.len();
    if mean.len() != d || cov.nrows() != d || cov.ncols() != d {
        return Err(Error::DimensionMismatch(format!(
            "upper has {d} entries, mean {}, covariance {}x{}",
            mean.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if d > MAX_DIM {
        return Err(Error::DimensionCap { dim: d, cap: MAX_DIM });
    }
    if upper.iter().chain(mean).any(|v| v.is_nan()) || cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::DimensionMismatch("non-finite input".into()));
    }
    let max_var = (0..d).map(|i| cov[(i, i)]).fold(0.0_f64, f64::max);
    let floor = POINT_MASS * max_var;

    let mut keep = Vec::with_capacity(d);
    let mut bound = Vec::with_capacity(d);
    for i in 0..d {
        if cov[(i, i)] < -1e-10 * max_var.max(f64::MIN_POSITIVE) {
            return Err(Error::NotPsd { max_jitter: 0.0 });
        }
        if upper[i] == f64::INFINITY {
            continue;
        }
        if upper[i] == f64::NEG_INFINITY {
            return Ok(CdfEstimate::exact(0.0));
        }
        let b = upper[i] - mean[i];
        if cov[(i, i)] <= floor {
            if b < 0.0 {
                return Ok(CdfEstimate::exact(0.0));
            }
            continue;
        }
        keep.push(i);
        bound.push(b);
    }

    let k = keep.len();
    let sub = |a: usize, b: usize| cov[(keep[a], keep[b])];
    match k {
        0 => Ok(CdfEstimate::exact(1.0)),
        1 => Ok(CdfEstimate::exact(normal::cdf(bound[0] / sub(0, 0).sqrt()))),
        2 => {
            let (s0, s1) = (sub(0, 0).sqrt(), sub(1, 1).sqrt());
            Ok(CdfEstimate::exact(bvn_cdf(bound[0] / s0, bound[1] / s1, sub(0, 1) / (s0 * s1))))
        }
        _ if k <= opts.exact_up_to.min(4) => {
            let (probability, std_error) = homotopy::orthant_low_dim(&bound, sub);
            Ok(CdfEstimate { probability, std_error })
        }
        _ => {
            opts.qmc.validate()?;
            let reduced = DMatrix::from_fn(k, k, sub);
            let (probability, std_error) = qmc::orthant_qmc(&bound, &reduced, &opts.qmc)?;
            Ok(CdfEstimate { probability, std_error })
        }
    }
}

/// `P(X ≤ (a, a))` for `X ~ N(0, [[K, D], [D, K]])` with `p×p` blocks.
///
/// This is the expectation of the squared orthant probability `Φ_p(a + BV; K − D)²`
/// when `BV ~ N(0, D)`. `marginal` may carry an already computed `Φ_p(a; K)`.
pub fn repeated_block_orthant(
    a: &[f64],
    k: &DMatrix<f64>,
    d: &DMatrix<f64>,
    marginal: Option<f64>,
    opts: &CdfOptions,
) -> Result<CdfEstimate> {
    let p = a.len();
    if k.shape() != (p, p) || d.shape() != (p, p) {
        return Err(Error::DimensionMismatch(format!(
            "threshold has {p} entries, blocks are {:?} and {:?}",
            k.shape(),
            d.shape()
        )));
    }
    let max_var = (0..p).map(|i| k[(i, i)]).fold(0.0_f64, f64::max);
    let regular = a.iter().all(|v| v.is_finite()) && (0..p).all(|i| k[(i, i)] > POINT_MASS * max_var);
    if p == 2 && opts.exact_up_to >= 4 && regular {
        let (probability, std_error) = homotopy::repeated_pair_orthant(
            [a[0], a[1]],
            [[k[(0, 0)], k[(0, 1)]], [k[(1, 0)], k[(1, 1)]]],
            [[d[(0, 0)], d[(0, 1)]], [d[(1, 0)], d[(1, 1)]]],
            marginal,
        );
        return Ok(CdfEstimate { probability, std_error });
    }
    let mut full = DMatrix::zeros(2 * p, 2 * p);
    full.view_mut((0, 0), (p, p)).copy_from(k);
    full.view_mut((p, p), (p, p)).copy_from(k);
    let sym = (d + d.transpose()) * 0.5;
    full.view_mut((0, p), (p, p)).copy_from(&sym);
    full.view_mut((p, 0), (p, p)).copy_from(&sym);
    let upper: Vec<f64> = a.iter().chain(a).copied().collect();
    mvn_cdf_with(&upper, &vec![0.0; 2 * p], &full, opts)
}

/// Draws `n` samples from `Normal(mean, cov)`; one row per draw.
pub fn mvn_sample(mean: &[f64], cov: &DMatrix<f64>, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    let d = mean.len();
    if cov.shape() != (d, d) {
        return Err(Error::DimensionMismatch(format!(
            "mean has {d} entries, covariance is {:?}",
            cov.shape()
        )));
    }
    let factor = robust_cholesky(cov)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = factor.lower();
    let mut out = DMatrix::zeros(n, d);
    let mut z = DVector::zeros(d);
    for r in 0..n {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let x = l * &z;
        for c in 0..d {
            out[(r, c)] = mean[c] + x[c];
        }
    }
    Ok(out)
}
