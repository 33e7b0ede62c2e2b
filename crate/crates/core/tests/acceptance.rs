//! Acceptance run: one PASS/FAIL line per criterion and a summary. Pass
//! criterion numbers as arguments to run a subset. Failures only set the
//! exit status when `ACCEPTANCE_STRICT=1`, so the report does not stop the
//! rest of `cargo test`.

mod common;

use common::{
    direct_posterior, field_draws, in_excursion, mean_and_se, random_batch, random_design, random_prior, random_spec,
    random_state, rng, round_trip_ok, simulated_eibv, survey_positions, survey_prior,
};
use grf_excursion::calibration::{calibrate, chi2_diagnostic, synthetic_dataset};
use grf_excursion::cokriging::{condition_batch, ObservationBatch, PosteriorState};
use grf_excursion::commands::run_pointwise_table;
use grf_excursion::config::RunConfig;
use grf_excursion::criteria::{eibv, expected_phi_power, expected_phi_product, PhiTerm};
use grf_excursion::excursion::{emv, excursion_moment, MeasureWeights};
use grf_excursion::gaussian::{bvn_cdf, mvn_sample, normal, CdfOptions, QmcConfig};
use grf_excursion::grf::{Extent, GridDomain};
use grf_excursion::planner::{StrategyConfig, StrategyKind};
use grf_excursion::simulator::{run_replicates, ReplicateReport};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn table_reproduction() -> Outcome {
    let started = Instant::now();
    let table = run_pointwise_table(&RunConfig::default()).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let (ok, total) = table.score();
    outcome(
        ok == 24 && total == 24 && secs < 10.0,
        format!("{ok}/{total} within 0.005 in {secs:.2} s"),
    )
}

fn bivariate_exactness() -> Outcome {
    let worst = (-9..=9)
        .map(|k| {
            let rho = k as f64 / 10.0;
            (bvn_cdf(0.0, 0.0, rho) - (0.25 + rho.asin() / (2.0 * std::f64::consts::PI))).abs()
        })
        .fold(0.0, f64::max);
    outcome(worst <= 1e-10, format!("19 correlations, max error {worst:.2e}"))
}

fn random_spd(r: &mut rand_chacha::ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.2
}

/// `Φ_p(x; C)` for `p ≤ 2` straight from the univariate and bivariate
/// normal CDFs.
fn phi_small(x: &[f64], c: &DMatrix<f64>) -> f64 {
    match x.len() {
        1 => normal::cdf(x[0] / c[(0, 0)].sqrt()),
        _ => {
            let (s0, s1) = (c[(0, 0)].sqrt(), c[(1, 1)].sqrt());
            bvn_cdf(x[0] / s0, x[1] / s1, c[(0, 1)] / (s0 * s1))
        }
    }
}

fn phi_oracle() -> Outcome {
    let mut r = rng(3003);
    let opts = CdfOptions {
        qmc: QmcConfig {
            sample_count: 1 << 16,
            ..QmcConfig::default()
        },
        ..CdfOptions::default()
    };
    let draws = 1_000_000;
    let mut passed = 0;
    for case in 0..50u64 {
        let q = r.random_range(1..=3);
        let g = r.random_range(1..=2);
        let terms: Vec<PhiTerm> = (0..g)
            .map(|_| {
                let p = r.random_range(1..=2);
                PhiTerm {
                    a: (0..p).map(|_| r.random_range(-1.0..1.0)).collect(),
                    b: DMatrix::from_fn(p, q, |_, _| r.random_range(-0.7..0.7)),
                    c: random_spd(&mut r, p),
                    h: r.random_range(1..=2),
                }
            })
            .collect();
        let c_v = random_spd(&mut r, q);
        let closed = if g == 1 {
            let t = &terms[0];
            expected_phi_power(&t.a, &t.b, &t.c, &c_v, t.h, &opts)
        } else {
            expected_phi_product(&terms, &c_v, &opts)
        }
        .unwrap();
        let v = mvn_sample(&vec![0.0; q], &c_v, draws, 40_000 + case).unwrap();
        let mut x = [0.0; 2];
        let samples: Vec<f64> = (0..draws)
            .map(|d| {
                terms
                    .iter()
                    .map(|t| {
                        let p = t.a.len();
                        for i in 0..p {
                            x[i] = t.a[i] + (0..q).map(|j| t.b[(i, j)] * v[(d, j)]).sum::<f64>();
                        }
                        phi_small(&x[..p], &t.c).powi(t.h as i32)
                    })
                    .product()
            })
            .collect();
        let (m, se) = mean_and_se(&samples);
        let combined = (se * se + closed.std_error * closed.std_error).sqrt();
        if (closed.probability - m).abs() <= 3.0 * combined + 1e-12 {
            passed += 1;
        }
    }
    outcome(passed >= 48, format!("{passed}/50 within 3 combined SE of 1e6-draw Monte Carlo"))
}

fn eibv_oracle() -> Outcome {
    let started = Instant::now();
    let mut r = rng(4004);
    let opts = CdfOptions::default();
    let mut passed = 0;
    for case in 0..20u64 {
        let n = r.random_range(3..=7);
        let state = random_state(&mut r, n);
        let spec = random_spec(&mut r, &state);
        let q = r.random_range(1..=3);
        let design = random_design(&mut r, q);
        let w = MeasureWeights::uniform(n * n, 1.0 / (n * n) as f64);
        let closed = eibv(&state, &design, &spec, &w, &opts).unwrap().expected_ibv;
        let (m, se) = simulated_eibv(&state, &design, &spec, &w, 10_000, 50_000 + case);
        if (closed - m).abs() <= 3.0 * se + 1e-12 {
            passed += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        passed >= 18 && secs < 300.0,
        format!("{passed}/20 within 3 SE of 1e4-draw simulation in {secs:.1} s"),
    )
}

fn sequential_vs_batch() -> Outcome {
    let mut r = rng(5005);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let prior = random_prior(&mut r);
        let grid = GridDomain::unit(r.random_range(3..=6));
        let batches: Vec<ObservationBatch> = (0..r.random_range(2..=5))
            .map(|_| {
                let q = r.random_range(1..=4);
                random_batch(&mut r, q, 2)
            })
            .collect();
        let mut seq = PosteriorState::from_prior(&prior, &grid).unwrap();
        for b in &batches {
            seq = seq.update(b).unwrap();
        }
        let once = condition_batch(&prior, &grid, &batches).unwrap();
        let (mean, cov) = direct_posterior(&prior, &grid, &batches);
        worst = worst
            .max((seq.mean() - once.mean()).amax())
            .max((seq.cov() - once.cov()).amax())
            .max((seq.mean() - mean.column(0)).amax())
            .max((seq.cov() - &cov).amax());
    }
    outcome(worst <= 1e-8, format!("100 sequences, max abs difference {worst:.2e}"))
}

fn study_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.grid.nx = 21;
    cfg.grid.ny = 21;
    cfg.survey.stages = 10;
    cfg.survey.replicates = 20;
    cfg.survey.lookahead_samples = 30;
    cfg
}

fn run_study() -> (ReplicateReport, f64) {
    let cfg = study_config();
    let scenario = cfg.scenario().unwrap();
    let strategies: Vec<StrategyConfig> = StrategyKind::ALL.iter().map(|&k| cfg.survey.strategy_config(k)).collect();
    let started = Instant::now();
    let report = run_replicates(&scenario, &cfg.survey.survey_config(), &strategies).unwrap();
    (report, started.elapsed().as_secs_f64())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn study_ordering(report: &ReplicateReport, secs: f64) -> Outcome {
    let stages = study_config().survey.stages;
    let fin = |k| report.values(k, stages, "ibv");
    let (myopic, naive, east, lookahead) = (
        fin(StrategyKind::Myopic),
        fin(StrategyKind::Naive),
        fin(StrategyKind::StaticEast),
        fin(StrategyKind::Lookahead),
    );
    let diff: Vec<f64> = naive.iter().zip(&myopic).map(|(n, m)| n - m).collect();
    let (d, se) = mean_and_se(&diff);
    let t = d / se;
    let crit = StudentsT::new(0.0, 1.0, (diff.len() - 1) as f64).unwrap().inverse_cdf(0.95);
    let (mm, mn, me, ml) = (mean(&myopic), mean(&naive), mean(&east), mean(&lookahead));
    let rel = (ml - mm).abs() / mm;
    let gap: Vec<f64> = lookahead.iter().zip(&myopic).map(|(l, m)| l - m).collect();
    let (_, gap_se) = mean_and_se(&gap);
    let pass = t > crit && mm <= me && rel <= 0.05 && secs < 1800.0;
    outcome(
        pass,
        format!(
            "final IBV myopic {mm:.5}, naive {mn:.5}, static_east {me:.5}, lookahead {ml:.5}; \
             paired t {t:.2} vs {crit:.2}; lookahead off myopic by {:.1}% (paired SE {:.1}%); {secs:.0} s",
            100.0 * rel,
            100.0 * gap_se / mm
        ),
    )
}

fn timing_ordering(report: &ReplicateReport) -> Outcome {
    let stages = study_config().survey.stages;
    let per_stage = |kinds: &[StrategyKind]| {
        let v: Vec<f64> = kinds
            .iter()
            .flat_map(|&k| (1..=stages).flat_map(move |s| report.values(k, s, "wall_time_criterion")))
            .collect();
        mean(&v)
    };
    let stat = per_stage(&[StrategyKind::StaticNorth, StrategyKind::StaticEast, StrategyKind::StaticZigzag]);
    let naive = per_stage(&[StrategyKind::Naive]);
    let myopic = per_stage(&[StrategyKind::Myopic]);
    let lookahead = per_stage(&[StrategyKind::Lookahead]);
    let ratio = naive / stat;
    let pass = (0.5..=2.0).contains(&ratio) && naive < myopic && stat < myopic && myopic < lookahead && lookahead >= 5.0 * myopic;
    outcome(
        pass,
        format!(
            "seconds per stage: static {stat:.2e}, naive {naive:.2e}, myopic {myopic:.2e}, lookahead {lookahead:.2e} \
             ({:.1}x myopic)",
            lookahead / myopic
        ),
    )
}

fn calibration_round_trip() -> Outcome {
    let prior = survey_prior();
    let passed = (0..20u64)
        .filter(|&seed| {
            let data = synthetic_dataset(&prior, &survey_positions(500, 100 + seed), &[0.0, 0.0], seed).unwrap();
            round_trip_ok(&calibrate(&data, None).unwrap(), &prior)
        })
        .count();
    // Well-specified residuals: iid draws from the model's zero-lag law.
    let mut r = rng(8008);
    let sigma = &prior.cov.sigma;
    let gamma = prior.cov.gamma[(0, 1)];
    let mut residuals = DMatrix::zeros(1000, 2);
    for i in 0..1000 {
        let a: f64 = StandardNormal.sample(&mut r);
        let b: f64 = StandardNormal.sample(&mut r);
        residuals[(i, 0)] = sigma[0] * a;
        residuals[(i, 1)] = sigma[1] * (gamma * a + (1.0 - gamma * gamma).sqrt() * b);
    }
    let ks = chi2_diagnostic(&residuals, &prior.cov).unwrap().ks_distance;
    outcome(
        passed >= 18 && ks < 0.05,
        format!("{passed}/20 seeds within tolerance; KS distance {ks:.4} at n = 1000"),
    )
}

fn moment_oracle() -> Outcome {
    let opts = CdfOptions::default();
    let weights = MeasureWeights(vec![1.0; 3]);
    let grid = GridDomain::new(3, 1, Extent { y_max: 0.3, ..Extent::UNIT }).unwrap();
    let mut passed = 0;
    let cases = 5;
    for seed in 0..cases {
        let mut r = rng(9009 + seed);
        let prior = random_prior(&mut r);
        let state = PosteriorState::from_prior(&prior, &grid).unwrap();
        let spec = random_spec(&mut r, &state);
        let draws = field_draws(&state, 100_000, 90_000 + seed);
        let vols: Vec<f64> = (0..draws.nrows())
            .map(|d| {
                let row = draws.row(d).transpose();
                (0..3).filter(|&n| in_excursion(row.as_slice(), n, 2, &spec)).count() as f64
            })
            .collect();
        let sq: Vec<f64> = vols.iter().map(|v| v * v).collect();
        let (m2, se2) = mean_and_se(&sq);
        let (m1, _) = mean_and_se(&vols);
        let centred: Vec<f64> = vols.iter().map(|v| (v - m1).powi(2)).collect();
        let (var, se_var) = mean_and_se(&centred);
        let moment = excursion_moment(&state, &spec, &weights, 2, &opts).unwrap();
        let volume_var = emv(&state, &spec, &weights, &opts).unwrap();
        if (moment - m2).abs() <= 3.0 * se2 + 1e-12 && (volume_var - var).abs() <= 3.0 * se_var + 1e-12 {
            passed += 1;
        }
    }
    outcome(
        passed == cases,
        format!("{passed}/{cases} toy problems with EMV and second moment within 3 SE of 1e5 draws"),
    )
}

fn main() {
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);

    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |k: usize, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        if run(k) {
            let o = f();
            println!("criterion {k} ({name}): {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            results.push((k, name, o));
        }
    };
    record(1, "single-location table", &mut table_reproduction);
    record(2, "bivariate CDF exactness", &mut bivariate_exactness);
    record(3, "expected CDF power/product oracle", &mut phi_oracle);
    record(4, "EIBV oracle", &mut eibv_oracle);
    record(5, "sequential vs batch co-kriging", &mut sequential_vs_batch);
    if run(6) || run(7) {
        let (report, secs) = run_study();
        record(6, "simulation study ordering", &mut || study_ordering(&report, secs));
        record(7, "criterion timing ordering", &mut || timing_ordering(&report));
    }
    record(8, "calibration round trip", &mut calibration_round_trip);
    record(9, "EMV and moment oracle", &mut moment_oracle);

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        if std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
