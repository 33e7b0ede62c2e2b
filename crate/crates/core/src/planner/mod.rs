//! Waypoint planning: static designs and the naive, myopic and two-step
//! look-ahead strategies.

pub mod graph;

pub use graph::{build_graph, Direction, WaypointGraph};

use crate::cokriging::{diagonal_noise, DesignGain, PosteriorState};
use crate::criteria::{eibv_with_gain, expected_bernoulli_variance};
use crate::error::{Error, Result};
use crate::excursion::{node_probability, ExcursionSpec, MeasureWeights};
use crate::gaussian::{mvn_cdf_with, robust_cholesky_scaled, CdfOptions, CholeskyFactor};
use crate::grf::{isotopic, GeneralizedLocation};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Scores closer than this are ties, resolved by the lowest node index.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    StaticNorth,
    StaticEast,
    StaticZigzag,
    Naive,
    Myopic,
    Lookahead,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::StaticNorth,
        StrategyKind::StaticEast,
        StrategyKind::StaticZigzag,
        StrategyKind::Naive,
        StrategyKind::Myopic,
        StrategyKind::Lookahead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::StaticNorth => "static_north",
            StrategyKind::StaticEast => "static_east",
            StrategyKind::StaticZigzag => "static_zigzag",
            StrategyKind::Naive => "naive",
            StrategyKind::Myopic => "myopic",
            StrategyKind::Lookahead => "lookahead",
        }
    }

    pub fn is_static(self) -> bool {
        matches!(
            self,
            StrategyKind::StaticNorth | StrategyKind::StaticEast | StrategyKind::StaticZigzag
        )
    }

    /// Stable small integer used in seed derivation.
    pub fn id(self) -> u64 {
        Self::ALL.iter().position(|k| *k == self).unwrap() as u64
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub lookahead_samples: usize,
    pub prune_revisits: bool,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kind: StrategyKind::Myopic,
            lookahead_samples: 30,
            prune_revisits: true,
        }
    }
}

impl StrategyConfig {
    pub fn of(kind: StrategyKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookahead_samples == 0 {
            return Err(Error::Config("lookahead_samples must be >= 1".into()));
        }
        Ok(())
    }
}

/// Where the vehicle is and what it has seen.
#[derive(Debug, Clone)]
pub struct SurveyState {
    pub current_node: usize,
    pub visited: Vec<usize>,
    pub posterior: PosteriorState,
    pub stage: usize,
}

impl SurveyState {
    pub fn start(node: usize, posterior: PosteriorState) -> Self {
        Self {
            current_node: node,
            visited: vec![node],
            posterior,
            stage: 0,
        }
    }
}

/// Static measurement and criterion settings shared by the strategies.
#[derive(Debug, Clone)]
pub struct PlanContext {
    pub graph: WaypointGraph,
    pub spec: ExcursionSpec,
    pub weights: MeasureWeights,
    pub noise_sd: Vec<f64>,
    pub measurements_per_leg: usize,
    pub cdf: CdfOptions,
}

impl PlanContext {
    /// Points sampled on the leg `from → to`, at fractions `k/m`, `k = 1..=m`.
    pub fn leg_points(&self, from: usize, to: usize) -> Vec<[f64; 2]> {
        let (a, b) = (self.graph.position(from), self.graph.position(to));
        let m = self.measurements_per_leg.max(1);
        (1..=m)
            .map(|k| {
                let f = k as f64 / m as f64;
                [a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]
            })
            .collect()
    }

    /// Isotopic design along a leg and its noise covariance.
    pub fn leg_design(&self, from: usize, to: usize, p: usize) -> Result<(Vec<GeneralizedLocation>, DMatrix<f64>)> {
        let xs: Vec<GeneralizedLocation> = self.leg_points(from, to).into_iter().flat_map(|u| isotopic(u, p)).collect();
        let noise = diagonal_noise(&xs, &self.noise_sd)?;
        Ok((xs, noise))
    }
}

/// One row of a strategy's criterion table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateScore {
    pub node: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub chosen: usize,
    pub table: Vec<CandidateScore>,
}

/// Minimizer with ties (within [`TIE_TOLERANCE`]) going to the lowest
/// node index.
pub fn argmin_tied(table: &[CandidateScore]) -> Option<usize> {
    let best = table.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
    table
        .iter()
        .filter(|c| c.score <= best + TIE_TOLERANCE)
        .map(|c| c.node)
        .min()
}

fn decide(table: Vec<CandidateScore>) -> Decision {
    let chosen = argmin_tied(&table).expect("candidate set is never empty");
    Decision { chosen, table }
}

/// Neighbors of `node`, without those in `visited` when pruning; falls back
/// to all neighbors if pruning leaves nothing.
pub fn candidate_nodes(graph: &WaypointGraph, node: usize, visited: &[usize], prune: bool) -> Vec<usize> {
    let all = graph.neighbors(node);
    if prune {
        let kept: Vec<usize> = all.iter().copied().filter(|n| !visited.contains(n)).collect();
        if !kept.is_empty() {
            return kept;
        }
    }
    all.to_vec()
}

pub fn candidates(state: &SurveyState, graph: &WaypointGraph, cfg: &StrategyConfig) -> Vec<usize> {
    candidate_nodes(graph, state.current_node, &state.visited, cfg.prune_revisits)
}

/// Candidate whose (snapped) EP is closest to one half.
pub fn naive_step(state: &SurveyState, ctx: &PlanContext, cfg: &StrategyConfig) -> Result<Decision> {
    let grid = state.posterior.grid();
    let table = candidates(state, &ctx.graph, cfg)
        .into_iter()
        .map(|node| {
            let snapped = grid.nearest_node(ctx.graph.position(node));
            let p = node_probability(&state.posterior, snapped, &ctx.spec, &ctx.cdf)?;
            Ok(CandidateScore {
                node,
                score: (p - 0.5).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(decide(table))
}

/// Candidate with the smallest EIBV for the isotopic measurements on its leg.
pub fn myopic_step(state: &SurveyState, ctx: &PlanContext, cfg: &StrategyConfig) -> Result<Decision> {
    let post = &state.posterior;
    let table = candidates(state, &ctx.graph, cfg)
        .into_iter()
        .map(|node| {
            let (xs, noise) = ctx.leg_design(state.current_node, node, post.p())?;
            let gain = post.design_gain(&xs, &noise)?;
            let e = eibv_with_gain(post, &gain, &ctx.spec, &ctx.weights, &ctx.cdf)?;
            Ok(CandidateScore {
                node,
                score: e.expected_ibv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(decide(table))
}

/// Posterior after a hypothetical first leg, without its (random) data:
/// the covariance part, which does not depend on the observed values.
struct FirstLeg {
    gain: DesignGain,
    /// Oriented `K_{n+1}` block per node.
    node_cov: Vec<DMatrix<f64>>,
    /// Oriented variance reductions of each second leg, per node.
    second: Vec<(usize, Vec<DMatrix<f64>>)>,
}

fn first_leg(
    state: &SurveyState,
    ctx: &PlanContext,
    cfg: &StrategyConfig,
    u: usize,
) -> Result<FirstLeg> {
    let post = &state.posterior;
    let p = post.p();
    let n = post.grid().len();
    let (xs, noise) = ctx.leg_design(state.current_node, u, p)?;
    let gain = post.design_gain(&xs, &noise)?;
    let node_cov: Vec<DMatrix<f64>> = (0..n)
        .map(|i| {
            let (_, k) = post.node_marginal(i);
            ctx.spec.orient(&(k - gain.variance_reduction(i, p)))
        })
        .collect();

    let mut visited = state.visited.clone();
    visited.push(u);
    let mut second = Vec::new();
    for v in candidate_nodes(&ctx.graph, u, &visited, cfg.prune_revisits) {
        let (ys, noise2) = ctx.leg_design(u, v, p)?;
        // k_{n+1}(y, ·) = k_n(y, ·) − Wᵀ V_u with W = L_u⁻¹ k_n(x, y).
        let w = gain.factor.forward_solve(&post.cov_at(&xs, &ys)?);
        let mut cross = post.cross_cov_grid(&ys)?;
        cross.gemm_tr(-1.0, &w, &gain.whitened_gain, 1.0);
        let mut s = post.cov_at(&ys, &ys)? + &noise2;
        s.gemm_tr(-1.0, &w, &w, 1.0);
        let scale = crate::grf::prior_cov(&ys, &ys, &post.prior().cov).trace() + noise2.trace();
        let factor: CholeskyFactor = robust_cholesky_scaled(&s, scale)
            .map_err(|e| Error::SingularSystem(format!("look-ahead second leg: {e}")))?;
        let v2 = factor.forward_solve(&cross);
        let reductions = (0..n)
            .map(|i| {
                let c = v2.columns(i * p, p);
                ctx.spec.orient(&(c.transpose() * c))
            })
            .collect();
        second.push((v, reductions));
    }
    Ok(FirstLeg { gain, node_cov, second })
}

/// Two-step look-ahead: expected best second-step EIBV after moving to each
/// candidate, averaged over `m` predictive draws of the first leg's data.
///
/// The same standard-normal innovations are used for every candidate.
pub fn lookahead_step(state: &SurveyState, ctx: &PlanContext, cfg: &StrategyConfig, seed: u64) -> Result<Decision> {
    cfg.validate()?;
    let post = &state.posterior;
    let p = post.p();
    let n = post.grid().len();
    let cands = candidates(state, &ctx.graph, cfg);
    let q = ctx.leg_points(state.current_node, cands[0]).len() * p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<DVector<f64>> = (0..cfg.lookahead_samples)
        .map(|_| DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng)))
        .collect();

    let mut table = Vec::with_capacity(cands.len());
    for &u in &cands {
        let leg = first_leg(state, ctx, cfg, u)?;
        let mut total = 0.0;
        for eps in &draws {
            let mean = post.mean() + leg.gain.mean_shift(eps);
            let mut scores = vec![0.0; leg.second.len()];
            for i in 0..n {
                let w = ctx.weights.0[i];
                if w == 0.0 {
                    continue;
                }
                let a = ctx.spec.margin(&mean.as_slice()[i * p..(i + 1) * p]);
                let k = &leg.node_cov[i];
                let current = mvn_cdf_with(&a, &vec![0.0; p], k, &ctx.cdf)?.probability;
                for (s, (_, red)) in scores.iter_mut().zip(&leg.second) {
                    *s += w * expected_bernoulli_variance(&a, k, &red[i], current, &ctx.cdf)?;
                }
            }
            total += scores.iter().copied().fold(f64::INFINITY, f64::min);
        }
        table.push(CandidateScore {
            node: u,
            score: total / draws.len() as f64,
        });
    }
    Ok(decide(table))
}

/// Move sequence of a static design from `start`, at most `length` moves;
/// the path stops early at the boundary.
///
/// North alternates NE/NW, east repeats E, and zigzag runs NE, NE, NW, NW
/// so the lateral displacement changes sign every other step.
pub fn static_path(kind: StrategyKind, graph: &WaypointGraph, start: usize, length: usize) -> Vec<usize> {
    let pattern: &[Direction] = match kind {
        StrategyKind::StaticNorth => &[Direction::NorthEast, Direction::NorthWest],
        StrategyKind::StaticEast => &[Direction::East],
        StrategyKind::StaticZigzag => &[
            Direction::NorthEast,
            Direction::NorthEast,
            Direction::NorthWest,
            Direction::NorthWest,
        ],
        _ => return Vec::new(),
    };
    let mut path = Vec::with_capacity(length);
    let mut node = start;
    for step in 0..length {
        match graph.neighbor(node, pattern[step % pattern.len()]) {
            Some(next) => {
                path.push(next);
                node = next;
            }
            None => break,
        }
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grf::{Extent, GridDomain, GrfPrior};

    fn default_graph() -> WaypointGraph {
        build_graph(&Extent::UNIT, 1.0 / 21.0).unwrap()
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let table = [
            CandidateScore { node: 9, score: 0.3 },
            CandidateScore {
                node: 4,
                score: 0.3 + 5e-13,
            },
            CandidateScore { node: 7, score: 0.5 },
        ];
        assert_eq!(argmin_tied(&table), Some(4));
    }

    #[test]
    fn pruning_falls_back_when_exhausted() {
        let g = default_graph();
        let node = 5 * g.cols + 7;
        assert_eq!(candidate_nodes(&g, node, &[], true).len(), 6);
        let all: Vec<usize> = g.neighbors(node).to_vec();
        assert_eq!(candidate_nodes(&g, node, &all, true), all);
        assert_eq!(candidate_nodes(&g, node, &all[..2], true).len(), 4);
        assert!(candidate_nodes(&g, 0, &[], true).len() <= 3);
    }

    #[test]
    fn static_paths() {
        let g = default_graph();
        let north = static_path(StrategyKind::StaticNorth, &g, 53, 10);
        assert_eq!(north.len(), 10);
        let mut y = g.position(53)[1];
        for &n in &north {
            assert!(g.position(n)[1] > y);
            y = g.position(n)[1];
        }
        let east = static_path(StrategyKind::StaticEast, &g, 53, 30);
        assert_eq!(east.len(), g.cols - 1 - 11);
        let zig = static_path(StrategyKind::StaticZigzag, &g, 53, 8);
        let mut prev = g.position(53)[0];
        let dx: Vec<f64> = zig
            .iter()
            .map(|&n| {
                let x = g.position(n)[0];
                let d = x - prev;
                prev = x;
                d
            })
            .collect();
        for k in 0..dx.len() {
            let want = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(dx[k].signum(), want);
        }
        assert_eq!(static_path(StrategyKind::StaticEast, &g, 53, 1), vec![54]);
    }

    #[test]
    fn leg_points_end_at_target() {
        let prior = GrfPrior::default();
        let grid = GridDomain::unit(5);
        let post = PosteriorState::from_prior(&prior, &grid).unwrap();
        let ctx = PlanContext {
            graph: default_graph(),
            spec: ExcursionSpec::above(vec![2.3, 22.0]),
            weights: MeasureWeights::cell_area(&post),
            noise_sd: vec![0.5, 0.5],
            measurements_per_leg: 3,
            cdf: CdfOptions::default(),
        };
        let pts = ctx.leg_points(53, 54);
        assert_eq!(pts.len(), 3);
        assert_eq!(pts[2], ctx.graph.position(54));
        let (xs, noise) = ctx.leg_design(53, 54, 2).unwrap();
        assert_eq!(xs.len(), 6);
        assert_eq!(noise[(5, 5)], 0.25);
    }
}
