//! Expected uncertainty reduction criteria.
//!
//! The building blocks are closed forms for expectations of products of
//! Gaussian orthant probabilities whose thresholds move linearly with a
//! Gaussian vector `V ~ N(0, C_V)`:
//!
//! ```text
//! E[Φ_p(a + BV; C)^h] = Φ_{ph}((a, …, a); 1 1ᵀ ⊗ B C_V Bᵀ + I ⊗ C)
//! ```
//!
//! and its multi-term generalization. After observing a design `x` the
//! posterior mean at `u` moves by `λ(u)ᵀ(Y − μ_n(x))`, so the expected
//! Bernoulli variance reduces to one `Φ_{2p}` per node.

use crate::cokriging::{DesignGain, PosteriorState};
use crate::error::{Error, Result};
use crate::excursion::{self, ExcursionSpec, MeasureWeights, EMV_NODE_LIMIT};
use crate::gaussian::{mvn_cdf_with, repeated_block_orthant, CdfEstimate, CdfOptions, MAX_DIM};
use crate::grf::GeneralizedLocation;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Bernoulli variances below this are treated as already resolved; the
/// expected value after new data can only be smaller.
const RESOLVED: f64 = 1e-15;

/// One factor `Φ_p(a + BV; C)^h` of an expected product.
#[derive(Debug, Clone)]
pub struct PhiTerm {
    pub a: Vec<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub h: usize,
}

/// `E[Φ_p(a + BV; C)^h]` for `V ~ N(0, C_V)`.
pub fn expected_phi_power(
    a: &[f64],
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    c_v: &DMatrix<f64>,
    h: usize,
    opts: &CdfOptions,
) -> Result<CdfEstimate> {
    expected_phi_product(
        &[PhiTerm {
            a: a.to_vec(),
            b: b.clone(),
            c: c.clone(),
            h,
        }],
        c_v,
        opts,
    )
}

/// `E[Π_i Φ_{p_i}(a_i + B_i V; C_i)^{h_i}]` for `V ~ N(0, C_V)`.
pub fn expected_phi_product(terms: &[PhiTerm], c_v: &DMatrix<f64>, opts: &CdfOptions) -> Result<CdfEstimate> {
    let q = c_v.nrows();
    if c_v.ncols() != q {
        return Err(Error::DimensionMismatch(format!("C_V is {:?}", c_v.shape())));
    }
    for t in terms {
        let p = t.a.len();
        if t.b.shape() != (p, q) || t.c.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "term with {p} thresholds has B {:?} and C {:?} (q = {q})",
                t.b.shape(),
                t.c.shape()
            )));
        }
    }
    let dim: usize = terms.iter().map(|t| t.a.len() * t.h).sum();
    if dim > MAX_DIM {
        return Err(Error::DimensionCap { dim, cap: MAX_DIM });
    }

    // Offsets of each (term, copy) block.
    let mut blocks = Vec::new();
    let mut offset = 0;
    for (i, t) in terms.iter().enumerate() {
        for _ in 0..t.h {
            blocks.push((i, offset));
            offset += t.a.len();
        }
    }
    let mut sigma = DMatrix::zeros(dim, dim);
    let mut upper = Vec::with_capacity(dim);
    for (bi, &(i, oi)) in blocks.iter().enumerate() {
        upper.extend_from_slice(&terms[i].a);
        for (bj, &(j, oj)) in blocks.iter().enumerate() {
            let mut block = &terms[i].b * c_v * terms[j].b.transpose();
            if bi == bj {
                block += &terms[i].c;
            }
            sigma.view_mut((oi, oj), block.shape()).copy_from(&block);
        }
    }
    mvn_cdf_with(&upper, &vec![0.0; dim], &sigma, opts)
}

/// A candidate observation batch with its noise covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDesign {
    pub xs: Vec<GeneralizedLocation>,
    pub noise: DMatrix<f64>,
}

impl CandidateDesign {
    pub fn validate(&self) -> Result<()> {
        let q = self.xs.len();
        if q == 0 {
            return Err(Error::DimensionMismatch("empty design".into()));
        }
        if self.noise.shape() != (q, q) {
            return Err(Error::DimensionMismatch(format!(
                "{q} design locations with {:?} noise",
                self.noise.shape()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EibvBreakdown {
    pub current_ibv: f64,
    pub expected_ibv: f64,
    /// Expected Bernoulli variance per node (unweighted).
    pub per_node_terms: Vec<f64>,
}

/// `E[p'(1 − p')]` at one node where `p'` is the EP after the update, in
/// oriented coordinates: margin `a`, current covariance `k` and variance
/// reduction `d = K_n − K_{n+1}`. `current` is `Φ_p(a; k)`.
pub fn expected_bernoulli_variance(
    a: &[f64],
    k: &DMatrix<f64>,
    d: &DMatrix<f64>,
    current: f64,
    opts: &CdfOptions,
) -> Result<f64> {
    let bv = current * (1.0 - current);
    if bv < RESOLVED {
        return Ok(bv.max(0.0));
    }
    let scale = k.trace().abs();
    if d.amax() <= 1e-14 * scale {
        return Ok(bv);
    }
    let second = repeated_block_orthant(a, k, d, Some(current), opts)?.probability;
    Ok((current - second).clamp(0.0, bv))
}

/// Expected IBV after observing `design`.
pub fn eibv(
    state: &PosteriorState,
    design: &CandidateDesign,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    opts: &CdfOptions,
) -> Result<EibvBreakdown> {
    design.validate()?;
    spec.validate(state.p())?;
    weights.validate(state.grid().len())?;
    let gain = state.design_gain(&design.xs, &design.noise)?;
    eibv_with_gain(state, &gain, spec, weights, opts)
}

/// [`eibv`] for an already computed design gain.
pub fn eibv_with_gain(
    state: &PosteriorState,
    gain: &DesignGain,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    opts: &CdfOptions,
) -> Result<EibvBreakdown> {
    let p = state.p();
    let n = state.grid().len();
    let mut per_node = vec![0.0; n];
    let mut current_ibv = 0.0;
    let mut expected_ibv = 0.0;
    for node in 0..n {
        let w = weights.0[node];
        let (m, k) = state.node_marginal(node);
        let a = spec.margin(m.as_slice());
        let k = spec.orient(&k);
        let current = mvn_cdf_with(&a, &vec![0.0; p], &k, opts)?.probability;
        let d = spec.orient(&gain.variance_reduction(node, p));
        let term = expected_bernoulli_variance(&a, &k, &d, current, opts)?;
        per_node[node] = term;
        current_ibv += w * current * (1.0 - current);
        expected_ibv += w * term;
    }
    Ok(EibvBreakdown {
        current_ibv,
        expected_ibv,
        per_node_terms: per_node,
    })
}

/// Expected EMV after observing `design`.
///
/// The expected second moment of the volume is unchanged by the update,
/// so only the products of EPs at pairs of nodes need the two-term closed
/// form; their covariance blocks are `K_n` on the diagonal and the
/// cross-reduction `λ(u)ᵀ(k_n(x,x) + Δ)λ(v)` off it.
pub fn eemv(
    state: &PosteriorState,
    design: &CandidateDesign,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    opts: &CdfOptions,
) -> Result<f64> {
    design.validate()?;
    spec.validate(state.p())?;
    let n = state.grid().len();
    if n > EMV_NODE_LIMIT {
        return Err(Error::GridTooLarge {
            nodes: n,
            limit: EMV_NODE_LIMIT,
        });
    }
    weights.validate(n)?;
    let gain = state.design_gain(&design.xs, &design.noise)?;
    let p = state.p();
    let second_moment = excursion::excursion_moment(state, spec, weights, 2, opts)?;

    let active: Vec<usize> = (0..n).filter(|&i| weights.0[i] > 0.0).collect();
    let margins: Vec<(Vec<f64>, DMatrix<f64>)> = active
        .iter()
        .map(|&i| {
            let (m, k) = state.node_marginal(i);
            (spec.margin(m.as_slice()), spec.orient(&k))
        })
        .collect();
    let signs = spec.signs();
    let mut expected_products = 0.0;
    for (ai, &u) in active.iter().enumerate() {
        let vu = gain.whitened_gain.columns(u * p, p);
        for (aj, &v) in active.iter().enumerate().skip(ai) {
            let vv = gain.whitened_gain.columns(v * p, p);
            let cross = DMatrix::from_fn(p, p, |r, c| signs[r] * signs[c] * vu.column(r).dot(&vv.column(c)));
            let (a_u, k_u) = &margins[ai];
            let (a_v, k_v) = &margins[aj];
            let mut sigma = DMatrix::zeros(2 * p, 2 * p);
            sigma.view_mut((0, 0), (p, p)).copy_from(k_u);
            sigma.view_mut((p, p), (p, p)).copy_from(k_v);
            sigma.view_mut((0, p), (p, p)).copy_from(&cross);
            sigma.view_mut((p, 0), (p, p)).copy_from(&cross.transpose());
            let upper: Vec<f64> = a_u.iter().chain(a_v).copied().collect();
            let prob = mvn_cdf_with(&upper, &vec![0.0; 2 * p], &sigma, opts)?.probability;
            let mult = if u == v { 1.0 } else { 2.0 };
            expected_products += mult * weights.0[u] * weights.0[v] * prob;
        }
    }
    Ok((second_moment - expected_products).max(0.0))
}
