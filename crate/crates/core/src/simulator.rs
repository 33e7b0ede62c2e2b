//! Replicate simulation of survey strategies against synthetic truths.

use crate::cokriging::{ObservationBatch, PosteriorState};
use crate::error::{Error, Result};
use crate::excursion::ibv;
use crate::grf::{derive_seed, isotopic, sample_truth, GridDomain, GrfPrior, Truth};
use crate::planner::{
    lookahead_step, myopic_step, naive_step, static_path, PlanContext, StrategyConfig, StrategyKind, SurveyState,
};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Survey length, replication and measurement settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveyConfig {
    pub stages: usize,
    pub replicates: usize,
    pub measurements_per_leg: usize,
    pub noise_sd: Vec<f64>,
    pub start_node: usize,
    pub strategy: StrategyConfig,
    pub seed: u64,
}

impl Default for SurveyConfig {
    fn default() -> Self {
        Self {
            stages: 10,
            replicates: 100,
            measurements_per_leg: 1,
            noise_sd: vec![0.5, 0.5],
            start_node: 53,
            strategy: StrategyConfig::default(),
            seed: 2024,
        }
    }
}

impl SurveyConfig {
    /// Field-replay settings: three measurements per leg, noise sd 0.25.
    pub fn field_mode() -> Self {
        Self {
            measurements_per_leg: 3,
            noise_sd: vec![0.25, 0.25],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if self.measurements_per_leg == 0 {
            return Err(Error::Config("measurements_per_leg must be >= 1".into()));
        }
        if self.noise_sd.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("noise_sd must be finite and non-negative".into()));
        }
        self.strategy.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMetrics {
    pub strategy: StrategyKind,
    pub replicate: usize,
    pub stage: usize,
    pub node: usize,
    /// Cumulative distance in lattice pitches.
    pub distance: f64,
    pub ibv: f64,
    pub rmse: Vec<f64>,
    pub r2: Vec<f64>,
    /// Seconds spent choosing the next node and assimilating its data.
    pub wall_time_criterion: f64,
}

#[derive(Debug, Clone)]
pub struct SurveyOutcome {
    pub metrics: Vec<StageMetrics>,
    /// Visited nodes, starting with the start node.
    pub trajectory: Vec<usize>,
    pub posterior: PosteriorState,
}

/// Truth values at `xs` plus independent noise.
pub fn synth_measure(
    truth: &Truth,
    xs: &[crate::grf::GeneralizedLocation],
    noise_sd: &[f64],
    seed: u64,
) -> Result<ObservationBatch> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = xs
        .iter()
        .map(|x| {
            let e: f64 = StandardNormal.sample(&mut rng);
            truth.value(x) + noise_sd[x.response] * e
        })
        .collect();
    ObservationBatch::with_diagonal_noise(xs.to_vec(), values, noise_sd)
}

/// Per-response RMSE and explained variance of an interleaved posterior
/// mean against the grid truth (`N × p`).
pub fn rmse_and_r2(mean: &DVector<f64>, truth: &DMatrix<f64>) -> Result<Vec<(f64, f64)>> {
    let (n, p) = truth.shape();
    if mean.len() != n * p {
        return Err(Error::DimensionMismatch(format!(
            "mean of length {} against a {n}x{p} truth",
            mean.len()
        )));
    }
    (0..p)
        .map(|l| {
            let col = truth.column(l);
            let avg = col.mean();
            let sse: f64 = (0..n).map(|i| (mean[i * p + l] - col[i]).powi(2)).sum();
            let sst: f64 = col.iter().map(|v| (v - avg).powi(2)).sum();
            if sst == 0.0 {
                return Err(Error::DegenerateTruth(l));
            }
            Ok(((sse / n as f64).sqrt(), 1.0 - sse / sst))
        })
        .collect()
}

/// Everything a survey run needs besides the truth.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub prior: GrfPrior,
    pub grid: GridDomain,
    pub plan: PlanContext,
}

impl Scenario {
    #[allow(clippy::too_many_arguments)]
    fn metrics(
        &self,
        cfg: &SurveyConfig,
        replicate: usize,
        stage: usize,
        node: usize,
        distance: f64,
        post: &PosteriorState,
        truth: &Truth,
        wall: f64,
    ) -> Result<StageMetrics> {
        let fit = rmse_and_r2(post.mean(), truth.values())?;
        Ok(StageMetrics {
            strategy: cfg.strategy.kind,
            replicate,
            stage,
            node,
            distance,
            ibv: ibv(post, &self.plan.spec, &self.plan.weights, &self.plan.cdf)?,
            rmse: fit.iter().map(|f| f.0).collect(),
            r2: fit.iter().map(|f| f.1).collect(),
            wall_time_criterion: wall,
        })
    }
}

/// Seed shared by all strategies of one replicate (truth and noise).
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    derive_seed(&[master, replicate as u64])
}

/// Seed of the strategy's own randomness (look-ahead draws).
pub fn strategy_seed(master: u64, replicate: usize, kind: StrategyKind) -> u64 {
    derive_seed(&[master, replicate as u64, 0x5717_a7e9, kind.id()])
}

/// Noise stream of one leg, keyed by its position so that strategies
/// travelling the same leg at the same stage see the same noise.
pub fn leg_noise_seed(replicate_seed: u64, stage: usize, from: usize, to: usize) -> u64 {
    derive_seed(&[replicate_seed, 0x0015_e5ee, stage as u64, from as u64, to as u64])
}

/// Runs one survey of `cfg.stages` legs.
pub fn run_survey(scenario: &Scenario, truth: &Truth, cfg: &SurveyConfig, replicate: usize) -> Result<SurveyOutcome> {
    run_survey_observed(scenario, truth, cfg, replicate, &mut |_| Ok(()))
}

/// As [`run_survey`], calling `observe` on the initial state and after
/// every stage's update.
pub fn run_survey_observed(
    scenario: &Scenario,
    truth: &Truth,
    cfg: &SurveyConfig,
    replicate: usize,
    observe: &mut dyn FnMut(&SurveyState) -> Result<()>,
) -> Result<SurveyOutcome> {
    cfg.validate()?;
    let mut plan = scenario.plan.clone();
    plan.noise_sd = cfg.noise_sd.clone();
    plan.measurements_per_leg = cfg.measurements_per_leg;
    let plan = &plan;
    plan.graph.check_node(cfg.start_node)?;
    let p = scenario.prior.p();
    if cfg.noise_sd.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} noise levels for p = {p}",
            cfg.noise_sd.len()
        )));
    }
    let rep_seed = replicate_seed(cfg.seed, replicate);
    let strat_seed = strategy_seed(cfg.seed, replicate, cfg.strategy.kind);

    let prior_state = PosteriorState::from_prior(&scenario.prior, &scenario.grid)?;
    let mut state = SurveyState::start(cfg.start_node, prior_state);
    let mut metrics = vec![scenario.metrics(cfg, replicate, 0, cfg.start_node, 0.0, &state.posterior, truth, 0.0)?];
    observe(&state)?;
    let fixed = static_path(cfg.strategy.kind, &plan.graph, cfg.start_node, cfg.stages);
    let mut distance = 0.0;

    for stage in 1..=cfg.stages {
        let started = Instant::now();
        let from = state.current_node;
        let to = match cfg.strategy.kind {
            // A static path that hit the boundary holds position.
            k if k.is_static() => fixed.get(stage - 1).copied().unwrap_or(from),
            StrategyKind::Naive => naive_step(&state, plan, &cfg.strategy)?.chosen,
            StrategyKind::Myopic => myopic_step(&state, plan, &cfg.strategy)?.chosen,
            StrategyKind::Lookahead => {
                lookahead_step(&state, plan, &cfg.strategy, derive_seed(&[strat_seed, stage as u64]))?.chosen
            }
            _ => unreachable!(),
        };
        let xs: Vec<_> = if to == from {
            isotopic(plan.graph.position(to), p)
        } else {
            plan.leg_design(from, to, p)?.0
        };
        let batch = synth_measure(truth, &xs, &cfg.noise_sd, leg_noise_seed(rep_seed, stage, from, to))?;
        state.posterior = state.posterior.update(&batch)?;
        let wall = started.elapsed().as_secs_f64();

        if to != from {
            distance += 1.0;
        }
        state.current_node = to;
        state.visited.push(to);
        state.stage = stage;
        metrics.push(scenario.metrics(cfg, replicate, stage, to, distance, &state.posterior, truth, wall)?);
        observe(&state)?;
    }
    Ok(SurveyOutcome {
        metrics,
        trajectory: state.visited,
        posterior: state.posterior,
    })
}

/// Summary of one metric over replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub strategy: StrategyKind,
    pub stage: usize,
    pub metric: String,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateReport {
    pub rows: Vec<StageMetrics>,
    pub aggregates: Vec<Aggregate>,
    /// Seed of each replicate's truth.
    pub truth_seeds: Vec<u64>,
}

impl ReplicateReport {
    /// Per-replicate values of a metric at one stage, in replicate order.
    pub fn values(&self, kind: StrategyKind, stage: usize, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.strategy == kind && r.stage == stage)
            .filter_map(|r| metric_value(r, metric))
            .collect()
    }
}

/// Named scalar metrics of a row (`rmse_0`, `r2_1`, ...).
pub fn metric_names(p: usize) -> Vec<String> {
    let mut names = vec!["distance".to_string(), "ibv".to_string()];
    names.extend((0..p).map(|l| format!("rmse_{l}")));
    names.extend((0..p).map(|l| format!("r2_{l}")));
    names.push("wall_time_criterion".into());
    names
}

pub fn metric_value(row: &StageMetrics, metric: &str) -> Option<f64> {
    match metric {
        "distance" => Some(row.distance),
        "ibv" => Some(row.ibv),
        "wall_time_criterion" => Some(row.wall_time_criterion),
        m => {
            let (name, idx) = m.rsplit_once('_')?;
            let idx: usize = idx.parse().ok()?;
            match name {
                "rmse" => row.rmse.get(idx).copied(),
                "r2" => row.r2.get(idx).copied(),
                _ => None,
            }
        }
    }
}

fn summarize(values: &[f64]) -> (f64, f64, f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

/// Runs every strategy on `cfg.replicates` paired truths.
pub fn run_replicates(scenario: &Scenario, cfg: &SurveyConfig, strategies: &[StrategyConfig]) -> Result<ReplicateReport> {
    cfg.validate()?;
    let per_replicate: Vec<Result<Vec<StageMetrics>>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let truth = sample_truth(&scenario.prior, &scenario.grid, replicate_seed(cfg.seed, r))?;
            let mut rows = Vec::new();
            for s in strategies {
                let run_cfg = SurveyConfig {
                    strategy: *s,
                    ..cfg.clone()
                };
                rows.extend(run_survey(scenario, &truth, &run_cfg, r)?.metrics);
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_replicate {
        rows.extend(r?);
    }

    let mut aggregates = Vec::new();
    for s in strategies {
        for stage in 0..=cfg.stages {
            for metric in metric_names(scenario.prior.p()) {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.strategy == s.kind && r.stage == stage)
                    .filter_map(|r| metric_value(r, &metric))
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let (mean, sd, min, max) = summarize(&vals);
                aggregates.push(Aggregate {
                    strategy: s.kind,
                    stage,
                    metric,
                    mean,
                    sd,
                    min,
                    max,
                });
            }
        }
    }
    Ok(ReplicateReport {
        rows,
        aggregates,
        truth_seeds: (0..cfg.replicates).map(|r| replicate_seed(cfg.seed, r)).collect(),
    })
}
