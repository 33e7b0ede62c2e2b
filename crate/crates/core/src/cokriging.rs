//! Co-Kriging on generalized locations: one-shot conditioning and
//! batch-sequential updates of the discretized posterior.
//!
//! The posterior over the grid is kept explicitly as an `N·p` mean vector
//! and full covariance matrix (interleaved `node·p + response`). Posterior
//! quantities at points off the grid are recovered from the observation
//! history.

use crate::error::{Error, Result};
use crate::gaussian::{robust_cholesky_scaled, CholeskyFactor};
use crate::grf::{prior_cov, prior_mean, GeneralizedLocation, GridDomain, GrfPrior};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// A batch of noisy observations at generalized locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationBatch {
    pub xs: Vec<GeneralizedLocation>,
    pub values: Vec<f64>,
    /// Noise covariance Δ (`q×q`).
    pub noise: DMatrix<f64>,
}

impl ObservationBatch {
    pub fn new(xs: Vec<GeneralizedLocation>, values: Vec<f64>, noise: DMatrix<f64>) -> Result<Self> {
        let batch = Self { xs, values, noise };
        batch.validate()?;
        Ok(batch)
    }

    /// Independent noise with standard deviation `noise_sd[response]`.
    pub fn with_diagonal_noise(xs: Vec<GeneralizedLocation>, values: Vec<f64>, noise_sd: &[f64]) -> Result<Self> {
        let noise = diagonal_noise(&xs, noise_sd)?;
        Self::new(xs, values, noise)
    }

    pub fn empty() -> Self {
        Self {
            xs: Vec::new(),
            values: Vec::new(),
            noise: DMatrix::zeros(0, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.xs.len();
        if self.values.len() != q || self.noise.shape() != (q, q) {
            return Err(Error::DimensionMismatch(format!(
                "batch of {q} locations with {} values and {:?} noise",
                self.values.len(),
                self.noise.shape()
            )));
        }
        if self.values.iter().chain(self.noise.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DimensionMismatch("non-finite batch entry".into()));
        }
        for i in 0..q {
            if self.noise[(i, i)] < 0.0 {
                return Err(Error::NotPsd { max_jitter: 0.0 });
            }
            for j in 0..i {
                let (a, b) = (self.noise[(i, j)], self.noise[(j, i)]);
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::DimensionMismatch("noise covariance is not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Diagonal Δ with per-response standard deviations.
pub fn diagonal_noise(xs: &[GeneralizedLocation], noise_sd: &[f64]) -> Result<DMatrix<f64>> {
    let mut d = DMatrix::zeros(xs.len(), xs.len());
    for (i, x) in xs.iter().enumerate() {
        let sd = *noise_sd.get(x.response).ok_or_else(|| {
            Error::DimensionMismatch(format!("no noise level for response {}", x.response))
        })?;
        d[(i, i)] = sd * sd;
    }
    Ok(d)
}

fn block_diagonal_noise(batches: &[ObservationBatch]) -> DMatrix<f64> {
    let n: usize = batches.iter().map(|b| b.len()).sum();
    let mut d = DMatrix::zeros(n, n);
    let mut offset = 0;
    for b in batches {
        let q = b.len();
        d.view_mut((offset, offset), (q, q)).copy_from(&b.noise);
        offset += q;
    }
    d
}

/// Factorization of the full history system, used for off-grid queries.
#[derive(Debug, Clone)]
struct History {
    locs: Vec<GeneralizedLocation>,
    factor: CholeskyFactor,
    /// `L⁻¹ (z − μ(H))`.
    whitened: DVector<f64>,
}

impl History {
    fn build(prior: &GrfPrior, batches: &[ObservationBatch]) -> Result<Option<Self>> {
        let locs: Vec<GeneralizedLocation> = batches.iter().flat_map(|b| b.xs.iter().copied()).collect();
        if locs.is_empty() {
            return Ok(None);
        }
        let z = DVector::from_iterator(locs.len(), batches.iter().flat_map(|b| b.values.iter().copied()));
        let a = prior_cov(&locs, &locs, &prior.cov) + block_diagonal_noise(batches);
        let factor = factorize(&a, a.trace())?;
        let whitened = factor.forward_solve_vec(&(z - prior_mean(&locs, &prior.trend)));
        Ok(Some(Self { locs, factor, whitened }))
    }

    /// `L⁻¹ k(H, xs)`.
    fn whiten(&self, prior: &GrfPrior, xs: &[GeneralizedLocation]) -> DMatrix<f64> {
        self.factor.forward_solve(&prior_cov(&self.locs, xs, &prior.cov))
    }
}

fn factorize(a: &DMatrix<f64>, scale: f64) -> Result<CholeskyFactor> {
    robust_cholesky_scaled(a, scale).map_err(|e| match e {
        Error::NotPsd { max_jitter } => Error::SingularSystem(format!(
            "observation system of size {} not factorizable (jitter up to {max_jitter:e})",
            a.nrows()
        )),
        other => other,
    })
}

/// Weights for assimilating a design: the whitened gain
/// `V = L⁻¹ k_n(x, grid)` with `L Lᵀ = k_n(x, x) + Δ`.
///
/// The posterior after observing `z` at `x` has mean
/// `μ_n + Vᵀ L⁻¹ (z − μ_n(x))` and covariance `k_n − VᵀV`.
#[derive(Debug, Clone)]
pub struct DesignGain {
    pub xs: Vec<GeneralizedLocation>,
    /// `μ_n(x)`.
    pub predictive_mean: DVector<f64>,
    /// Cholesky factor of `k_n(x, x) + Δ`.
    pub factor: CholeskyFactor,
    /// `q × N·p`.
    pub whitened_gain: DMatrix<f64>,
}

impl DesignGain {
    /// `K_n(u,u) − K_{n+1}(u,u)` for one node (`p×p`).
    pub fn variance_reduction(&self, node: usize, p: usize) -> DMatrix<f64> {
        let v = self.whitened_gain.columns(node * p, p);
        v.transpose() * v
    }

    /// Covariance of the whitened innovations is the identity; this maps an
    /// innovation draw `ε ~ N(0, I_q)` to the induced mean shift on the grid.
    pub fn mean_shift(&self, eps: &DVector<f64>) -> DVector<f64> {
        self.whitened_gain.tr_mul(eps)
    }
}

/// Discretized posterior: mean and covariance over grid × responses.
#[derive(Debug, Clone)]
pub struct PosteriorState {
    grid: GridDomain,
    prior: GrfPrior,
    grid_locs: Vec<GeneralizedLocation>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    history: Vec<ObservationBatch>,
    cache: Option<History>,
}

impl PosteriorState {
    /// The prior itself, before any data.
    pub fn from_prior(prior: &GrfPrior, grid: &GridDomain) -> Result<Self> {
        prior.validate()?;
        let grid_locs = grid.generalized_locations(prior.p());
        let mean = prior_mean(&grid_locs, &prior.trend);
        let cov = prior_cov(&grid_locs, &grid_locs, &prior.cov);
        Ok(Self {
            grid: grid.clone(),
            prior: prior.clone(),
            grid_locs,
            mean,
            cov,
            history: Vec::new(),
            cache: None,
        })
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn prior(&self) -> &GrfPrior {
        &self.prior
    }

    pub fn p(&self) -> usize {
        self.prior.p()
    }

    /// Interleaved `N·p` posterior mean.
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn history(&self) -> &[ObservationBatch] {
        &self.history
    }

    pub fn grid_locations(&self) -> &[GeneralizedLocation] {
        &self.grid_locs
    }

    /// Mean `p`-vector and `p×p` covariance at a grid node index.
    pub fn node_marginal(&self, node: usize) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.p();
        let i = node * p;
        (
            self.mean.rows(i, p).into_owned(),
            self.cov.view((i, i), (p, p)).into_owned(),
        )
    }

    /// As [`node_marginal`](Self::node_marginal), addressed by coordinates.
    pub fn posterior_marginal(&self, u: [f64; 2]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        Ok(self.node_marginal(self.grid.require_node(u)?))
    }

    /// Grid index of a generalized location sitting exactly on a node.
    fn grid_index(&self, x: &GeneralizedLocation) -> Option<usize> {
        self.grid.node_at(x.point).map(|node| node * self.p() + x.response)
    }

    /// Posterior mean at arbitrary generalized locations.
    pub fn mean_at(&self, xs: &[GeneralizedLocation]) -> Result<DVector<f64>> {
        self.prior.check_locations(xs)?;
        let mut out = prior_mean(xs, &self.prior.trend);
        let whitened = self.cache.as_ref().map(|h| (h, h.whiten(&self.prior, xs)));
        for (i, x) in xs.iter().enumerate() {
            if let Some(k) = self.grid_index(x) {
                out[i] = self.mean[k];
            } else if let Some((h, w)) = &whitened {
                out[i] += w.column(i).dot(&h.whitened);
            }
        }
        Ok(out)
    }

    /// Posterior covariance `k_n(xs, ys)`.
    pub fn cov_at(&self, xs: &[GeneralizedLocation], ys: &[GeneralizedLocation]) -> Result<DMatrix<f64>> {
        self.prior.check_locations(xs)?;
        self.prior.check_locations(ys)?;
        let ix: Vec<Option<usize>> = xs.iter().map(|x| self.grid_index(x)).collect();
        let iy: Vec<Option<usize>> = ys.iter().map(|y| self.grid_index(y)).collect();
        let mut out = prior_cov(xs, ys, &self.prior.cov);
        if let Some(h) = &self.cache {
            let wx = h.whiten(&self.prior, xs);
            let wy = h.whiten(&self.prior, ys);
            out.gemm_tr(-1.0, &wx, &wy, 1.0);
        }
        for (i, a) in ix.iter().enumerate() {
            for (j, b) in iy.iter().enumerate() {
                if let (Some(a), Some(b)) = (a, b) {
                    out[(i, j)] = self.cov[(*a, *b)];
                }
            }
        }
        Ok(out)
    }

    /// Posterior cross-covariance `k_n(xs, grid)` (`q × N·p`).
    pub fn cross_cov_grid(&self, xs: &[GeneralizedLocation]) -> Result<DMatrix<f64>> {
        self.prior.check_locations(xs)?;
        let np = self.grid_locs.len();
        let mut out = DMatrix::zeros(xs.len(), np);
        let off: Vec<usize> = (0..xs.len()).filter(|&i| self.grid_index(&xs[i]).is_none()).collect();
        if !off.is_empty() {
            let off_locs: Vec<GeneralizedLocation> = off.iter().map(|&i| xs[i]).collect();
            let mut block = prior_cov(&off_locs, &self.grid_locs, &self.prior.cov);
            if let Some(h) = &self.cache {
                let wx = h.whiten(&self.prior, &off_locs);
                let wg = h.whiten(&self.prior, &self.grid_locs);
                block.gemm_tr(-1.0, &wx, &wg, 1.0);
            }
            for (r, &i) in off.iter().enumerate() {
                out.row_mut(i).copy_from(&block.row(r));
            }
        }
        for (i, x) in xs.iter().enumerate() {
            if let Some(k) = self.grid_index(x) {
                // The covariance is symmetric; a column is contiguous.
                out.row_mut(i).tr_copy_from(&self.cov.column(k));
            }
        }
        Ok(out)
    }

    /// Gain for a candidate design with noise covariance `noise`.
    pub fn design_gain(&self, xs: &[GeneralizedLocation], noise: &DMatrix<f64>) -> Result<DesignGain> {
        let q = xs.len();
        if noise.shape() != (q, q) {
            return Err(Error::DimensionMismatch(format!(
                "{q} design locations with {:?} noise",
                noise.shape()
            )));
        }
        let s = self.cov_at(xs, xs)? + noise;
        let scale = prior_cov(xs, xs, &self.prior.cov).trace() + noise.trace();
        let factor = factorize(&s, scale)?;
        let whitened_gain = factor.forward_solve(&self.cross_cov_grid(xs)?);
        Ok(DesignGain {
            xs: xs.to_vec(),
            predictive_mean: self.mean_at(xs)?,
            factor,
            whitened_gain,
        })
    }

    /// Assimilates one batch and returns the new state.
    pub fn update(&self, batch: &ObservationBatch) -> Result<Self> {
        batch.validate()?;
        if batch.is_empty() {
            return Ok(self.clone());
        }
        let gain = self.design_gain(&batch.xs, &batch.noise)?;
        let mut next = self.clone();
        next.apply_gain(&gain, &batch.values)?;
        next.history.push(batch.clone());
        next.cache = History::build(&next.prior, &next.history)?;
        Ok(next)
    }

    fn apply_gain(&mut self, gain: &DesignGain, values: &[f64]) -> Result<()> {
        let resid = DVector::from_column_slice(values) - &gain.predictive_mean;
        let innovation = gain.factor.forward_solve_vec(&resid);
        self.mean += gain.whitened_gain.tr_mul(&innovation);
        self.cov.gemm_tr(-1.0, &gain.whitened_gain, &gain.whitened_gain, 1.0);
        Ok(())
    }
}

/// One-shot conditioning of the prior on all batches.
pub fn condition_batch(prior: &GrfPrior, grid: &GridDomain, batches: &[ObservationBatch]) -> Result<PosteriorState> {
    let mut state = PosteriorState::from_prior(prior, grid)?;
    for b in batches {
        b.validate()?;
        prior.check_locations(&b.xs)?;
    }
    let Some(history) = History::build(prior, batches)? else {
        return Ok(state);
    };
    let w = history.whiten(prior, &state.grid_locs);
    state.mean += w.tr_mul(&history.whitened);
    state.cov.gemm_tr(-1.0, &w, &w, 1.0);
    state.history = batches.to_vec();
    state.cache = Some(history);
    Ok(state)
}
