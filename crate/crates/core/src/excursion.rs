//! Uncertainty functionals of the excursion set: excursion probability
//! (EP), Bernoulli variance, IBV, EMV and moments of the excursion volume.

use crate::cokriging::PosteriorState;
use crate::error::{Error, Result};
use crate::gaussian::{mvn_cdf_with, CdfOptions, MAX_DIM};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Largest grid on which the quadratic-cost EMV is evaluated in full.
pub const EMV_NODE_LIMIT: usize = 225;

/// Largest supported moment order.
pub const MAX_MOMENT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Below,
    Above,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Below => 1.0,
            Orientation::Above => -1.0,
        }
    }
}

/// Per-response thresholds with the side of each inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcursionSpec {
    pub thresholds: Vec<f64>,
    pub orientation: Vec<Orientation>,
}

impl ExcursionSpec {
    pub fn below(thresholds: Vec<f64>) -> Self {
        let orientation = vec![Orientation::Below; thresholds.len()];
        Self { thresholds, orientation }
    }

    pub fn above(thresholds: Vec<f64>) -> Self {
        let orientation = vec![Orientation::Above; thresholds.len()];
        Self { thresholds, orientation }
    }

    pub fn p(&self) -> usize {
        self.thresholds.len()
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.thresholds.len() != p || self.orientation.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "excursion spec has {} thresholds and {} orientations for p = {p}",
                self.thresholds.len(),
                self.orientation.len()
            )));
        }
        if self.thresholds.iter().any(|t| t.is_nan()) {
            return Err(Error::Config("thresholds must not be NaN".into()));
        }
        Ok(())
    }

    pub fn signs(&self) -> Vec<f64> {
        self.orientation.iter().map(|o| o.sign()).collect()
    }

    /// Orthant bound `a = S(t − μ)` for a mean vector.
    pub fn margin(&self, mean: &[f64]) -> Vec<f64> {
        self.thresholds
            .iter()
            .zip(&self.orientation)
            .zip(mean)
            .map(|((t, o), m)| o.sign() * (t - m))
            .collect()
    }

    /// `S K S` for the orientation signs `S`.
    pub fn orient(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.signs();
        DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| s[i % s.len()] * s[j % s.len()] * k[(i, j)])
    }

    /// `P(Z ∈ T)` for `Z ~ N(mean, cov)`.
    pub fn probability(&self, mean: &[f64], cov: &DMatrix<f64>, opts: &CdfOptions) -> Result<f64> {
        let a = self.margin(mean);
        Ok(mvn_cdf_with(&a, &vec![0.0; a.len()], &self.orient(cov), opts)?.probability)
    }
}

/// Non-negative per-node weights of the measure on the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureWeights(pub Vec<f64>);

impl MeasureWeights {
    /// Every node weighted by the cell area.
    pub fn cell_area(state: &PosteriorState) -> Self {
        let g = state.grid();
        Self(vec![g.cell_area(); g.len()])
    }

    pub fn uniform(n: usize, w: f64) -> Self {
        Self(vec![w; n])
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {n} grid nodes",
                self.0.len()
            )));
        }
        if self.0.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config("measure weights must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn check(state: &PosteriorState, spec: &ExcursionSpec) -> Result<()> {
    spec.validate(state.p())
}

/// EP at one grid node, addressed by coordinates.
pub fn excursion_probability(
    state: &PosteriorState,
    u: [f64; 2],
    spec: &ExcursionSpec,
    opts: &CdfOptions,
) -> Result<f64> {
    check(state, spec)?;
    let node = state.grid().require_node(u)?;
    node_probability(state, node, spec, opts)
}

/// EP at a grid node index.
pub fn node_probability(state: &PosteriorState, node: usize, spec: &ExcursionSpec, opts: &CdfOptions) -> Result<f64> {
    let (m, k) = state.node_marginal(node);
    spec.probability(m.as_slice(), &k, opts)
}

/// EP for every grid node.
pub fn excursion_probability_field(state: &PosteriorState, spec: &ExcursionSpec, opts: &CdfOptions) -> Result<Vec<f64>> {
    check(state, spec)?;
    (0..state.grid().len())
        .map(|i| node_probability(state, i, spec, opts))
        .collect()
}

/// `p(1 − p)` per node.
pub fn bernoulli_variance(p: f64) -> f64 {
    p * (1.0 - p)
}

pub fn bernoulli_variance_field(state: &PosteriorState, spec: &ExcursionSpec, opts: &CdfOptions) -> Result<Vec<f64>> {
    Ok(excursion_probability_field(state, spec, opts)?
        .into_iter()
        .map(bernoulli_variance)
        .collect())
}

/// Integrated Bernoulli variance `Σ w(u) p(u)(1 − p(u))`.
pub fn ibv(state: &PosteriorState, spec: &ExcursionSpec, weights: &MeasureWeights, opts: &CdfOptions) -> Result<f64> {
    weights.validate(state.grid().len())?;
    let bv = bernoulli_variance_field(state, spec, opts)?;
    Ok(bv.iter().zip(&weights.0).map(|(b, w)| b * w).sum())
}

/// Joint orthant probability that every listed node is in the excursion
/// set. Repeated nodes are merged, so the diagonal terms are exact.
fn joint_probability(state: &PosteriorState, nodes: &[usize], spec: &ExcursionSpec, opts: &CdfOptions) -> Result<f64> {
    let mut distinct: Vec<usize> = nodes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let p = state.p();
    let idx: Vec<usize> = distinct.iter().flat_map(|&n| (0..p).map(move |l| n * p + l)).collect();
    let mean: Vec<f64> = idx.iter().map(|&i| state.mean()[i]).collect();
    let cov = DMatrix::from_fn(idx.len(), idx.len(), |i, j| state.cov()[(idx[i], idx[j])]);
    let thresholds: Vec<f64> = (0..distinct.len()).flat_map(|_| spec.thresholds.iter().copied()).collect();
    let orientation = (0..distinct.len()).flat_map(|_| spec.orientation.iter().copied()).collect();
    let joint = ExcursionSpec { thresholds, orientation };
    joint.probability(&mean, &cov, opts)
}

/// `E[ν(Γ)^r]` as an `r`-fold weighted sum of joint orthant probabilities.
pub fn excursion_moment(
    state: &PosteriorState,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    r: usize,
    opts: &CdfOptions,
) -> Result<f64> {
    check(state, spec)?;
    let n = state.grid().len();
    weights.validate(n)?;
    if r == 0 {
        return Ok(1.0);
    }
    if r > MAX_MOMENT || r * state.p() > MAX_DIM {
        return Err(Error::DimensionCap {
            dim: r * state.p(),
            cap: MAX_MOMENT.min(MAX_DIM / state.p().max(1)) * state.p(),
        });
    }
    if r >= 2 && n.pow(r as u32) > EMV_NODE_LIMIT * EMV_NODE_LIMIT {
        return Err(Error::GridTooLarge {
            nodes: n,
            limit: EMV_NODE_LIMIT,
        });
    }
    let active: Vec<usize> = (0..n).filter(|&i| weights.0[i] > 0.0).collect();
    let ep: Vec<f64> = (0..n)
        .map(|i| node_probability(state, i, spec, opts))
        .collect::<Result<_>>()?;
    let mut total = 0.0;
    let mut tuple = vec![0usize; r];
    moment_sum(state, spec, weights, opts, &active, &ep, &mut tuple, 0, &mut total)?;
    Ok(total)
}

/// Sums over ordered tuples with non-decreasing entries, weighting each by
/// its number of permutations.
#[allow(clippy::too_many_arguments)]
fn moment_sum(
    state: &PosteriorState,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    opts: &CdfOptions,
    active: &[usize],
    ep: &[f64],
    tuple: &mut Vec<usize>,
    depth: usize,
    total: &mut f64,
) -> Result<()> {
    if depth == tuple.len() {
        let mut distinct = tuple.clone();
        distinct.dedup();
        let prob = if distinct.len() == 1 {
            ep[distinct[0]]
        } else {
            joint_probability(state, &distinct, spec, opts)?
        };
        let w: f64 = tuple.iter().map(|&i| weights.0[i]).product();
        *total += permutations(tuple) * w * prob;
        return Ok(());
    }
    let start = if depth == 0 { 0 } else { active.iter().position(|&a| a == tuple[depth - 1]).unwrap() };
    for &node in &active[start..] {
        tuple[depth] = node;
        moment_sum(state, spec, weights, opts, active, ep, tuple, depth + 1, total)?;
    }
    Ok(())
}

/// Number of distinct orderings of a sorted tuple.
fn permutations(sorted: &[usize]) -> f64 {
    let fact = |k: usize| (1..=k).product::<usize>() as f64;
    let mut denom = 1.0;
    let mut run = 1;
    for i in 1..=sorted.len() {
        if i < sorted.len() && sorted[i] == sorted[i - 1] {
            run += 1;
        } else {
            denom *= fact(run);
            run = 1;
        }
    }
    fact(sorted.len()) / denom
}

/// Variance of the excursion volume, `E[ν(Γ)²] − E[ν(Γ)]²`.
pub fn emv(state: &PosteriorState, spec: &ExcursionSpec, weights: &MeasureWeights, opts: &CdfOptions) -> Result<f64> {
    let n = state.grid().len();
    if n > EMV_NODE_LIMIT {
        return Err(Error::GridTooLarge {
            nodes: n,
            limit: EMV_NODE_LIMIT,
        });
    }
    let m2 = excursion_moment(state, spec, weights, 2, opts)?;
    let m1 = excursion_moment(state, spec, weights, 1, opts)?;
    Ok(m2 - m1 * m1)
}

/// EMV on every `stride`-th grid row and column, each retained node
/// carrying the weight of the `stride × stride` block it represents.
///
/// This approximates the volume by a coarser Riemann sum and is biased
/// towards larger variance when the excursion set has features smaller
/// than the stride.
pub fn emv_subsampled(
    state: &PosteriorState,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    stride: usize,
    opts: &CdfOptions,
) -> Result<f64> {
    let g = state.grid();
    weights.validate(g.len())?;
    let stride = stride.max(1);
    let mut sub = vec![0.0; g.len()];
    for row in 0..g.ny {
        for col in 0..g.nx {
            let (r0, c0) = (row - row % stride, col - col % stride);
            sub[r0 * g.nx + c0] += weights.0[row * g.nx + col];
        }
    }
    let kept = sub.iter().filter(|w| **w > 0.0).count();
    if kept > EMV_NODE_LIMIT {
        return Err(Error::GridTooLarge {
            nodes: kept,
            limit: EMV_NODE_LIMIT,
        });
    }
    let sub = MeasureWeights(sub);
    let active: Vec<usize> = (0..g.len()).filter(|&i| sub.0[i] > 0.0).collect();
    let ep: Vec<f64> = active
        .iter()
        .map(|&i| node_probability(state, i, spec, opts))
        .collect::<Result<_>>()?;
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (a, &i) in active.iter().enumerate() {
        m1 += sub.0[i] * ep[a];
        m2 += sub.0[i] * sub.0[i] * ep[a];
        for &j in &active[a + 1..] {
            m2 += 2.0 * sub.0[i] * sub.0[j] * joint_probability(state, &[i, j], spec, opts)?;
        }
    }
    Ok(m2 - m1 * m1)
}

/// Per-node EP values gathered into an `ny × nx` matrix (row = y).
pub fn as_grid_matrix(state: &PosteriorState, values: &[f64]) -> DMatrix<f64> {
    let g = state.grid();
    DMatrix::from_fn(g.ny, g.nx, |r, c| values[r * g.nx + c])
}

/// Mean vector of one response over the grid.
pub fn response_mean(state: &PosteriorState, response: usize) -> DVector<f64> {
    let p = state.p();
    DVector::from_fn(state.grid().len(), |i, _| state.mean()[i * p + response])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::{GridDomain, GrfPrior, SeparableCovariance, TrendModel};

    fn single_node(mu: [f64; 2], sigma: f64, gamma: f64) -> PosteriorState {
        let prior = GrfPrior::new(
            TrendModel::constant(mu.to_vec()),
            SeparableCovariance::bivariate([sigma, sigma], gamma, 1.0),
        )
        .unwrap();
        PosteriorState::from_prior(&prior, &GridDomain::unit(1)).unwrap()
    }

    #[test]
    fn table_probabilities() {
        let opts = CdfOptions::default();
        let spec = ExcursionSpec::below(vec![0.0, 0.0]);
        for (gamma, want) in [(0.2, 0.2820), (0.6, 0.3524), (0.8, 0.3976)] {
            let s = single_node([0.0, 0.0], 1.0, gamma);
            let p = excursion_probability(&s, [0.5, 0.5], &spec, &opts).unwrap();
            assert!((p - want).abs() < 5e-5, "{gamma}: {p}");
        }
    }

    #[test]
    fn orientation_symmetry_at_threshold() {
        let s = single_node([1.0, 2.0], 1.3, -0.4);
        let opts = CdfOptions::default();
        let below = excursion_probability(&s, [0.5, 0.5], &ExcursionSpec::below(vec![1.0, 2.0]), &opts).unwrap();
        let above = excursion_probability(&s, [0.5, 0.5], &ExcursionSpec::above(vec![1.0, 2.0]), &opts).unwrap();
        assert!((below - above).abs() < 1e-14);
    }

    #[test]
    fn sentinel_thresholds() {
        let s = single_node([0.0, 0.0], 1.0, 0.5);
        let opts = CdfOptions::default();
        let spec = ExcursionSpec::below(vec![f64::NEG_INFINITY, 0.0]);
        assert_eq!(excursion_probability(&s, [0.5, 0.5], &spec, &opts).unwrap(), 0.0);
        let spec = ExcursionSpec::below(vec![f64::INFINITY, 0.0]);
        assert!((excursion_probability(&s, [0.5, 0.5], &spec, &opts).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bernoulli_values() {
        assert!((bernoulli_variance(0.28) - 0.2016).abs() < 1e-12);
        assert_eq!(bernoulli_variance(0.0), 0.0);
        assert_eq!(bernoulli_variance(1.0), 0.0);
        assert_eq!(bernoulli_variance(0.5), 0.25);
    }

    #[test]
    fn single_node_emv_is_bernoulli_variance() {
        let s = single_node([0.3, -0.2], 1.0, 0.3);
        let spec = ExcursionSpec::below(vec![0.0, 0.0]);
        let opts = CdfOptions::default();
        let w = MeasureWeights(vec![2.0]);
        let p = node_probability(&s, 0, &spec, &opts).unwrap();
        let e = emv(&s, &spec, &w, &opts).unwrap();
        assert!((e - 4.0 * p * (1.0 - p)).abs() < 1e-14);
        assert!((excursion_moment(&s, &spec, &w, 1, &opts).unwrap() - 2.0 * p).abs() < 1e-15);
    }

    #[test]
    fn permutation_counts() {
        assert_eq!(permutations(&[1, 2, 3]), 6.0);
        assert_eq!(permutations(&[1, 1, 3]), 3.0);
        assert_eq!(permutations(&[2, 2, 2]), 1.0);
        assert_eq!(permutations(&[0, 4]), 2.0);
    }

    #[test]
    fn moment_caps() {
        let s = single_node([0.0, 0.0], 1.0, 0.3);
        let spec = ExcursionSpec::below(vec![0.0, 0.0]);
        let w = MeasureWeights(vec![1.0]);
        let err = excursion_moment(&s, &spec, &w, 4, &CdfOptions::default()).unwrap_err();
        assert!(matches!(err, Error::DimensionCap { .. }));
    }
}
