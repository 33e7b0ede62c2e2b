use grf_excursion::cokriging::{ObservationBatch, PosteriorState};
use grf_excursion::config::RunConfig;
use grf_excursion::excursion::ibv;
use grf_excursion::grf::sample_truth;
use grf_excursion::planner::{StrategyConfig, StrategyKind};
use grf_excursion::simulator::{
    leg_noise_seed, replicate_seed, rmse_and_r2, run_replicates, run_survey, ReplicateReport, Scenario, SurveyConfig,
};

fn small() -> (Scenario, SurveyConfig) {
    let mut cfg = RunConfig::default();
    cfg.grid.nx = 7;
    cfg.grid.ny = 7;
    cfg.graph.pitch = 1.0 / 8.0;
    cfg.survey.stages = 4;
    cfg.survey.replicates = 3;
    cfg.survey.start_node = 9;
    cfg.survey.lookahead_samples = 4;
    (cfg.scenario().unwrap(), cfg.survey.survey_config())
}

fn all_strategies(samples: usize) -> Vec<StrategyConfig> {
    StrategyKind::ALL
        .iter()
        .map(|&kind| StrategyConfig {
            kind,
            lookahead_samples: samples,
            prune_revisits: true,
        })
        .collect()
}

fn without_wall_time(mut report: ReplicateReport) -> ReplicateReport {
    for r in &mut report.rows {
        r.wall_time_criterion = 0.0;
    }
    report.aggregates.retain(|a| a.metric != "wall_time_criterion");
    report
}

#[test]
fn replicates_are_deterministic() {
    let (scenario, cfg) = small();
    let a = run_replicates(&scenario, &cfg, &all_strategies(4)).unwrap();
    let b = run_replicates(&scenario, &cfg, &all_strategies(4)).unwrap();
    assert_eq!(without_wall_time(a), without_wall_time(b));
}

#[test]
fn single_replicate_has_no_spread() {
    let (scenario, mut cfg) = small();
    cfg.replicates = 1;
    let report = run_replicates(&scenario, &cfg, &all_strategies(4)[..4]).unwrap();
    assert!(!report.aggregates.is_empty());
    for a in &report.aggregates {
        assert_eq!(a.sd, 0.0, "{a:?}");
        assert_eq!(a.min, a.max);
        assert_eq!(a.mean, a.min);
    }
}

#[test]
fn strategies_share_the_replicate_truth() {
    let (scenario, cfg) = small();
    let report = run_replicates(&scenario, &cfg, &all_strategies(4)[..5]).unwrap();
    let seeds: Vec<u64> = (0..cfg.replicates).map(|r| replicate_seed(cfg.seed, r)).collect();
    assert_eq!(report.truth_seeds, seeds);
    for r in 0..cfg.replicates {
        let stage0: Vec<_> = report.rows.iter().filter(|m| m.replicate == r && m.stage == 0).collect();
        assert_eq!(stage0.len(), 5);
        for m in &stage0 {
            assert_eq!(m.rmse, stage0[0].rmse);
            assert_eq!(m.ibv, stage0[0].ibv);
        }
    }
    let rmse0 = |r: usize| {
        report
            .rows
            .iter()
            .find(|m| m.replicate == r && m.stage == 0)
            .unwrap()
            .rmse
            .clone()
    };
    assert_ne!(rmse0(0), rmse0(1));
}

#[test]
fn report_round_trips_through_json() {
    let (scenario, mut cfg) = small();
    cfg.replicates = 2;
    let report = run_replicates(&scenario, &cfg, &all_strategies(4)[3..5]).unwrap();
    let text = serde_json::to_string(&report).unwrap();
    let back: ReplicateReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report, back);
}

#[test]
fn static_runs_hold_at_the_boundary() {
    let (scenario, mut cfg) = small();
    let cols = scenario.plan.graph.cols;
    cfg.start_node = cols - 3;
    cfg.stages = 5;
    cfg.strategy = StrategyConfig::of(StrategyKind::StaticEast);
    let truth = sample_truth(&scenario.prior, &scenario.grid, 1).unwrap();
    let out = run_survey(&scenario, &truth, &cfg, 0).unwrap();
    assert_eq!(out.trajectory, vec![cols - 3, cols - 2, cols - 1, cols - 1, cols - 1, cols - 1]);
    let distance: Vec<f64> = out.metrics.iter().map(|m| m.distance).collect();
    assert_eq!(distance, vec![0.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    // Holding still adds measurements.
    assert_eq!(out.posterior.history().len(), 5);
    assert_eq!(out.metrics[0].wall_time_criterion, 0.0);
    for m in &out.metrics[1..] {
        assert!(m.wall_time_criterion >= 0.0 && m.wall_time_criterion < 1.0);
    }
}

#[test]
fn trajectory_is_a_walk_on_the_lattice() {
    let (scenario, mut cfg) = small();
    let truth = sample_truth(&scenario.prior, &scenario.grid, 2).unwrap();
    for kind in [StrategyKind::Naive, StrategyKind::Myopic, StrategyKind::Lookahead] {
        cfg.strategy = StrategyConfig {
            kind,
            lookahead_samples: 4,
            prune_revisits: true,
        };
        let out = run_survey(&scenario, &truth, &cfg, 0).unwrap();
        assert_eq!(out.trajectory.len(), cfg.stages + 1);
        assert_eq!(out.trajectory[0], cfg.start_node);
        for w in out.trajectory.windows(2) {
            assert!(scenario.plan.graph.neighbors(w[0]).contains(&w[1]), "{kind:?} {w:?}");
        }
        let stages: Vec<usize> = out.metrics.iter().map(|m| m.stage).collect();
        assert_eq!(stages, (0..=cfg.stages).collect::<Vec<_>>());
    }
}

#[test]
fn exhaustive_observation_resolves_the_field() {
    let (scenario, _) = small();
    let truth = sample_truth(&scenario.prior, &scenario.grid, 3).unwrap();
    let prior = PosteriorState::from_prior(&scenario.prior, &scenario.grid).unwrap();
    let xs = prior.grid_locations().to_vec();
    let values: Vec<f64> = xs.iter().map(|x| truth.value(x)).collect();
    let post = prior
        .update(&ObservationBatch::with_diagonal_noise(xs, values, &[1e-3, 1e-3]).unwrap())
        .unwrap();
    let before = rmse_and_r2(prior.mean(), truth.values()).unwrap();
    let after = rmse_and_r2(post.mean(), truth.values()).unwrap();
    for (b, a) in before.iter().zip(&after) {
        assert!(a.0 < 1e-2 * b.0, "rmse {} -> {}", b.0, a.0);
        assert!(a.1 > 0.999);
    }
    let plan = &scenario.plan;
    let v0 = ibv(&prior, &plan.spec, &plan.weights, &plan.cdf).unwrap();
    let v1 = ibv(&post, &plan.spec, &plan.weights, &plan.cdf).unwrap();
    assert!(v1 < 0.05 * v0.max(1e-12) || v1 < 1e-6, "ibv {v0} -> {v1}");
}

#[test]
fn leg_noise_streams_are_keyed_by_leg() {
    let s = replicate_seed(7, 0);
    assert_eq!(leg_noise_seed(s, 1, 2, 3), leg_noise_seed(s, 1, 2, 3));
    assert_ne!(leg_noise_seed(s, 1, 2, 3), leg_noise_seed(s, 1, 3, 2));
    assert_ne!(leg_noise_seed(s, 1, 2, 3), leg_noise_seed(s, 2, 2, 3));
    assert_ne!(leg_noise_seed(s, 1, 2, 3), leg_noise_seed(replicate_seed(7, 1), 1, 2, 3));
}
