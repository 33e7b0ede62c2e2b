//! The command-line subcommands as library functions.
//!
//! Each `run_*` function computes its result; each `cmd_*` function also
//! writes the result tables and a manifest into an output directory.

use crate::calibration::{calibrate, FittedModel, SurveyDataset, VariogramBins};
use crate::cokriging::{condition_batch, ObservationBatch, PosteriorState};
use crate::config::{GraphSection, GridSection, ModelSection, OutputFormat, RunConfig};
use crate::criteria::{eibv, CandidateDesign};
use crate::error::{Error, Result};
use crate::excursion::{bernoulli_variance, excursion_probability_field, ExcursionSpec, MeasureWeights};
use crate::grf::{
    derive_seed, isotopic, sample_truth, GeneralizedLocation, GridDomain, GrfPrior, SeparableCovariance, TrendModel, Truth,
};
use crate::planner::{
    lookahead_step, myopic_step, naive_step, static_path, CandidateScore, Decision, StrategyKind, SurveyState,
};
use crate::simulator::{
    metric_names, metric_value, replicate_seed, run_replicates, run_survey_observed, strategy_seed, ReplicateReport,
    Scenario, StageMetrics, SurveyOutcome,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// A rectangular result table written as CSV or JSON lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Writes `<dir>/<stem>.csv` or `<dir>/<stem>.jsonl`.
    pub fn write(&self, dir: &Path, stem: &str, format: OutputFormat) -> Result<PathBuf> {
        match format {
            OutputFormat::Csv => {
                let path = dir.join(format!("{stem}.csv"));
                let mut w = csv::Writer::from_path(&path).map_err(csv_io)?;
                w.write_record(&self.columns).map_err(csv_io)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(cell)).map_err(csv_io)?;
                }
                w.flush()?;
                Ok(path)
            }
            OutputFormat::Jsonl => {
                let path = dir.join(format!("{stem}.jsonl"));
                let mut text = String::new();
                for row in &self.rows {
                    let obj: serde_json::Map<String, Value> =
                        self.columns.iter().cloned().zip(row.iter().cloned()).collect();
                    text.push_str(&Value::Object(obj).to_string());
                    text.push('\n');
                }
                std::fs::write(&path, text)?;
                Ok(path)
            }
        }
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Files written by a command and a short human-readable summary.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join("manifest.toml");
    std::fs::write(&path, cfg.to_toml_string()?)?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// pointwise-table

/// Published single-location values per `(sigma, gamma)`: excursion
/// probability, Bernoulli variance, expected Bernoulli variance after
/// observing both responses and after observing temperature only.
pub const REFERENCE_TABLE: [(f64, f64, [f64; 4]); 6] = [
    (1.0, 0.2, [0.28, 0.20, 0.092, 0.151]),
    (1.0, 0.6, [0.35, 0.23, 0.089, 0.138]),
    (1.0, 0.8, [0.40, 0.24, 0.085, 0.123]),
    (2.0, 0.2, [0.28, 0.20, 0.052, 0.137]),
    (2.0, 0.6, [0.35, 0.23, 0.051, 0.114]),
    (2.0, 0.8, [0.40, 0.24, 0.049, 0.093]),
];

pub const POINTWISE_QUANTITIES: [&str; 4] = ["p", "bernoulli_variance", "ebv_both", "ebv_temperature"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseEntry {
    pub sigma: f64,
    pub gamma: f64,
    pub quantity: String,
    pub value: f64,
    pub reference: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseTable {
    pub entries: Vec<PointwiseEntry>,
}

impl PointwiseTable {
    /// Entries with a reference value, and how many of them pass.
    pub fn score(&self) -> (usize, usize) {
        let compared: Vec<bool> = self.entries.iter().filter_map(|e| e.pass).collect();
        (compared.iter().filter(|p| **p).count(), compared.len())
    }

    pub fn value(&self, sigma: f64, gamma: f64, quantity: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.sigma == sigma && e.gamma == gamma && e.quantity == quantity)
            .map(|e| e.value)
    }
}

/// Posterior of a single location with zero mean and the given marginal
/// standard deviation and cross-correlation.
pub fn pointwise_state(gamma: f64, sigma: f64) -> Result<PosteriorState> {
    let prior = GrfPrior::new(
        TrendModel::constant(vec![0.0, 0.0]),
        SeparableCovariance::bivariate([sigma, sigma], gamma, 1.0),
    )?;
    PosteriorState::from_prior(&prior, &GridDomain::unit(1))
}

pub fn run_pointwise_table(cfg: &RunConfig) -> Result<PointwiseTable> {
    let pw = &cfg.pointwise;
    let spec = ExcursionSpec::below(vec![0.0, 0.0]);
    let w = MeasureWeights(vec![1.0]);
    let mut entries = Vec::new();
    for &sigma in &pw.sigmas {
        for &gamma in &pw.gammas {
            let state = pointwise_state(gamma, sigma)?;
            let u = state.grid().location(0);
            let both = CandidateDesign {
                xs: isotopic(u, 2),
                noise: DMatrix::identity(2, 2) * pw.noise_sd.powi(2),
            };
            let temp = CandidateDesign {
                xs: vec![GeneralizedLocation::new(u, 0)],
                noise: DMatrix::identity(1, 1) * pw.noise_sd.powi(2),
            };
            let e_both = eibv(&state, &both, &spec, &w, &cfg.cdf)?;
            let e_temp = eibv(&state, &temp, &spec, &w, &cfg.cdf)?;
            let p = crate::excursion::node_probability(&state, 0, &spec, &cfg.cdf)?;
            let values = [p, bernoulli_variance(p), e_both.expected_ibv, e_temp.expected_ibv];
            let reference = REFERENCE_TABLE
                .iter()
                .find(|(s, g, _)| *s == sigma && *g == gamma && pw.noise_sd == 0.5)
                .map(|r| r.2);
            for (k, q) in POINTWISE_QUANTITIES.iter().enumerate() {
                let r = reference.map(|r| r[k]);
                entries.push(PointwiseEntry {
                    sigma,
                    gamma,
                    quantity: q.to_string(),
                    value: values[k],
                    reference: r,
                    pass: r.map(|r| (values[k] - r).abs() <= pw.tolerance),
                });
            }
        }
    }
    Ok(PointwiseTable { entries })
}

pub fn cmd_pointwise_table(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> Result<CommandOutput> {
    prepare_dir(dir)?;
    let table = run_pointwise_table(cfg)?;
    let mut t = Table::new(&["sigma", "gamma", "quantity", "value", "reference", "abs_error", "pass"]);
    for e in &table.entries {
        t.push(vec![
            json!(e.sigma),
            json!(e.gamma),
            json!(e.quantity),
            json!(e.value),
            json!(e.reference),
            json!(e.reference.map(|r| (e.value - r).abs())),
            json!(e.pass),
        ]);
    }
    let files = vec![t.write(dir, "pointwise_table", format)?, write_manifest(cfg, dir)?];
    let (ok, n) = table.score();
    let mut summary = String::from("sigma gamma            p        p(1-p)   EBV both  EBV temp\n");
    for &sigma in &cfg.pointwise.sigmas {
        for &gamma in &cfg.pointwise.gammas {
            let v: Vec<String> = POINTWISE_QUANTITIES
                .iter()
                .map(|q| format!("{:8.4}", table.value(sigma, gamma, q).unwrap_or(f64::NAN)))
                .collect();
            summary.push_str(&format!("{sigma:5.1} {gamma:5.2}  {}\n", v.join("  ")));
        }
    }
    summary.push_str(&format!(
        "{ok}/{n} values within ±{} of the reference table: {}",
        cfg.pointwise.tolerance,
        if ok == n { "PASS" } else { "FAIL" }
    ));
    Ok(CommandOutput { files, summary })
}

// ---------------------------------------------------------------------------
// Snapshots and plan-step

/// Serializable survey state: the observation history from which the
/// posterior is rebuilt, plus the vehicle's position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub stage: usize,
    pub current_node: usize,
    pub visited: Vec<usize>,
    pub history: Vec<ObservationBatch>,
}

impl Snapshot {
    pub fn of(state: &SurveyState) -> Self {
        Self {
            stage: state.stage,
            current_node: state.current_node,
            visited: state.visited.clone(),
            history: state.posterior.history().to_vec(),
        }
    }

    pub fn state(&self, prior: &GrfPrior, grid: &GridDomain) -> Result<SurveyState> {
        Ok(SurveyState {
            current_node: self.current_node,
            visited: self.visited.clone(),
            posterior: condition_batch(prior, grid, &self.history)?,
            stage: self.stage,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("invalid snapshot {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Decision of the configured strategy at a snapshot. `node` overrides the
/// snapshot's current node.
pub fn run_plan_step(cfg: &RunConfig, snapshot: &Snapshot, node: Option<usize>) -> Result<Decision> {
    let scenario = cfg.scenario()?;
    let mut state = snapshot.state(&scenario.prior, &scenario.grid)?;
    if let Some(n) = node {
        scenario.plan.graph.check_node(n)?;
        state.current_node = n;
    }
    decide(cfg, &scenario, &state)
}

/// Next node of the configured strategy from `state`. Look-ahead draws use
/// the seed the simulator uses for replicate 0 at the same stage.
pub fn decide(cfg: &RunConfig, scenario: &Scenario, state: &SurveyState) -> Result<Decision> {
    scenario.plan.graph.check_node(state.current_node)?;
    let kind = cfg.survey.strategy;
    let strat = cfg.survey.strategy_config(kind);
    let stage = state.stage + 1;
    match kind {
        StrategyKind::Naive => naive_step(state, &scenario.plan, &strat),
        StrategyKind::Myopic => myopic_step(state, &scenario.plan, &strat),
        StrategyKind::Lookahead => {
            let seed = derive_seed(&[strategy_seed(cfg.survey.seed, 0, kind), stage as u64]);
            lookahead_step(state, &scenario.plan, &strat, seed)
        }
        _ => {
            let path = static_path(kind, &scenario.plan.graph, cfg.survey.start_node, stage);
            let chosen = path.get(stage - 1).copied().unwrap_or(state.current_node);
            Ok(Decision {
                chosen,
                table: vec![CandidateScore {
                    node: chosen,
                    score: 0.0,
                }],
            })
        }
    }
}

pub fn cmd_plan_step(
    cfg: &RunConfig,
    snapshot_path: &Path,
    node: Option<usize>,
    format: OutputFormat,
) -> Result<(Decision, String)> {
    let snapshot = Snapshot::load(snapshot_path)?;
    let decision = run_plan_step(cfg, &snapshot, node)?;
    let graph = cfg.graph()?;
    let from = node.unwrap_or(snapshot.current_node);
    let text = match format {
        OutputFormat::Jsonl => {
            let mut s = String::new();
            for c in &decision.table {
                s.push_str(
                    &json!({
                        "node": c.node,
                        "direction": graph.direction(from, c.node).map(|d| format!("{d:?}")),
                        "score": c.score,
                        "chosen": c.node == decision.chosen,
                    })
                    .to_string(),
                );
                s.push('\n');
            }
            s
        }
        OutputFormat::Csv => {
            let mut s = String::from("node,direction,score,chosen\n");
            for c in &decision.table {
                let dir = graph.direction(from, c.node).map(|d| format!("{d:?}")).unwrap_or_default();
                s.push_str(&format!("{},{dir},{},{}\n", c.node, c.score, c.node == decision.chosen));
            }
            s
        }
    };
    Ok((decision, text))
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub truth: Truth,
    pub outcome: SurveyOutcome,
    /// Excursion probability per node after each stage (stage 0 first).
    pub ep_fields: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
}

/// One survey of the configured strategy on the replicate-0 truth.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulationRun> {
    let scenario = cfg.scenario()?;
    let survey = cfg.survey.survey_config();
    let truth = sample_truth(&scenario.prior, &scenario.grid, replicate_seed(survey.seed, 0))?;
    let mut ep_fields = Vec::new();
    let mut snapshots = Vec::new();
    let spec = scenario.plan.spec.clone();
    let opts = scenario.plan.cdf;
    let outcome = run_survey_observed(&scenario, &truth, &survey, 0, &mut |state| {
        ep_fields.push(excursion_probability_field(&state.posterior, &spec, &opts)?);
        snapshots.push(Snapshot::of(state));
        Ok(())
    })?;
    Ok(SimulationRun {
        truth,
        outcome,
        ep_fields,
        snapshots,
    })
}

fn metrics_table(rows: &[StageMetrics], p: usize) -> Table {
    let names = metric_names(p);
    let mut cols = vec!["strategy", "replicate", "stage", "node"];
    cols.extend(names.iter().map(|s| s.as_str()));
    let mut t = Table::new(&cols);
    for r in rows {
        let mut row = vec![json!(r.strategy.name()), json!(r.replicate), json!(r.stage), json!(r.node)];
        row.extend(names.iter().map(|m| json!(metric_value(r, m))));
        t.push(row);
    }
    t
}

pub fn cmd_simulate(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> Result<CommandOutput> {
    prepare_dir(dir)?;
    let run = run_simulate(cfg)?;
    let grid = cfg.grid()?;
    let graph = cfg.graph()?;
    let p = cfg.model.sigma.len();
    let mut files = Vec::new();

    let mut traj = Table::new(&["stage", "node", "x", "y"]);
    // The trajectory starts with the start node.
    for (stage, &n) in run.outcome.trajectory.iter().enumerate() {
        let [x, y] = graph.position(n);
        traj.push(vec![json!(stage), json!(n), json!(x), json!(y)]);
    }
    files.push(traj.write(dir, "trajectory", format)?);
    files.push(metrics_table(&run.outcome.metrics, p).write(dir, "metrics", format)?);

    let mut fields = Table::new(&["stage", "node", "x", "y", "ep", "bernoulli_variance"]);
    for (stage, ep) in run.ep_fields.iter().enumerate() {
        for (node, &e) in ep.iter().enumerate() {
            let [x, y] = grid.location(node);
            fields.push(vec![
                json!(stage),
                json!(node),
                json!(x),
                json!(y),
                json!(e),
                json!(bernoulli_variance(e)),
            ]);
        }
    }
    files.push(fields.write(dir, "ep_fields", format)?);

    let spec = cfg.spec()?;
    let mut cols = vec!["node".to_string(), "x".into(), "y".into()];
    cols.extend((0..p).map(|l| format!("value_{l}")));
    cols.push("in_excursion".into());
    let mut truth = Table {
        columns: cols,
        rows: Vec::new(),
    };
    for node in 0..grid.len() {
        let [x, y] = grid.location(node);
        let vals: Vec<f64> = (0..p).map(|l| run.truth.values()[(node, l)]).collect();
        let inside = spec.margin(&vals).iter().all(|m| *m >= 0.0);
        let mut row = vec![json!(node), json!(x), json!(y)];
        row.extend(vals.iter().map(|v| json!(v)));
        row.push(json!(inside));
        truth.rows.push(row);
    }
    files.push(truth.write(dir, "truth", format)?);

    let snap_dir = dir.join("snapshots");
    prepare_dir(&snap_dir)?;
    for s in &run.snapshots {
        let path = snap_dir.join(format!("stage_{:03}.json", s.stage));
        s.save(&path)?;
        files.push(path);
    }
    files.push(write_manifest(cfg, dir)?);

    let last = run.outcome.metrics.last().expect("stage-0 row always present");
    let summary = format!(
        "{} survey of {} stages from node {}: path {:?}, final IBV {:.6}, RMSE {:?}",
        cfg.survey.strategy.name(),
        cfg.survey.stages,
        cfg.survey.start_node,
        run.outcome.trajectory,
        last.ibv,
        last.rmse
    );
    Ok(CommandOutput { files, summary })
}

// ---------------------------------------------------------------------------
// replicate

pub fn run_replicate(cfg: &RunConfig) -> Result<ReplicateReport> {
    let scenario = cfg.scenario()?;
    let survey = cfg.survey.survey_config();
    let strategies: Vec<_> = cfg.survey.strategies.iter().map(|k| cfg.survey.strategy_config(*k)).collect();
    run_replicates(&scenario, &survey, &strategies)
}

pub fn cmd_replicate(cfg: &RunConfig, dir: &Path, format: OutputFormat) -> Result<CommandOutput> {
    prepare_dir(dir)?;
    let report = run_replicate(cfg)?;
    let p = cfg.model.sigma.len();
    let mut files = vec![metrics_table(&report.rows, p).write(dir, "replicate_metrics", format)?];

    let mut agg = Table::new(&["strategy", "stage", "metric", "mean", "sd", "min", "max"]);
    for a in &report.aggregates {
        agg.push(vec![
            json!(a.strategy.name()),
            json!(a.stage),
            json!(a.metric),
            json!(a.mean),
            json!(a.sd),
            json!(a.min),
            json!(a.max),
        ]);
    }
    files.push(agg.write(dir, "aggregates", format)?);

    let mut seeds = Table::new(&["replicate", "truth_seed"]);
    for (r, s) in report.truth_seeds.iter().enumerate() {
        seeds.push(vec![json!(r), json!(s.to_string())]);
    }
    files.push(seeds.write(dir, "seeds", format)?);
    files.push(write_manifest(cfg, dir)?);

    let mut summary = format!("{} replicates, {} stages\nstrategy        final IBV mean (sd)\n", cfg.survey.replicates, cfg.survey.stages);
    for k in &cfg.survey.strategies {
        if let Some(a) = report
            .aggregates
            .iter()
            .find(|a| a.strategy == *k && a.stage == cfg.survey.stages && a.metric == "ibv")
        {
            summary.push_str(&format!("{:15} {:.6} ({:.6})\n", k.name(), a.mean, a.sd));
        }
    }
    Ok(CommandOutput {
        files,
        summary: summary.trim_end().to_string(),
    })
}

// ---------------------------------------------------------------------------
// calibrate

/// Config fragment holding a fitted model, loadable with `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFragment {
    pub model: ModelSection,
    pub grid: GridSection,
    pub graph: GraphSection,
}

pub fn run_calibrate(cfg: &RunConfig, data: &SurveyDataset) -> Result<FittedModel> {
    let bins = match (cfg.calibration.max_lag, cfg.calibration.bin_count) {
        (None, None) => None,
        (lag, count) => {
            let auto = VariogramBins::for_positions(&data.positions());
            Some(VariogramBins {
                max_lag: lag.unwrap_or(auto.max_lag),
                count: count.unwrap_or(auto.count),
            })
        }
    };
    calibrate(data, bins)
}

/// Fragment for a fitted model: the grid covers the data's bounding box at
/// the configured resolution and the lattice keeps 21 columns across it.
pub fn model_fragment(cfg: &RunConfig, fit: &FittedModel, data: &SurveyDataset) -> ModelFragment {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for r in &data.rows {
        lo = [lo[0].min(r.x), lo[1].min(r.y)];
        hi = [hi[0].max(r.x), hi[1].max(r.y)];
    }
    ModelFragment {
        model: ModelSection::from_prior(&GrfPrior {
            trend: fit.trend.clone(),
            cov: fit.cov.clone(),
        }),
        grid: GridSection {
            nx: cfg.grid.nx,
            ny: cfg.grid.ny,
            extent: [lo[0], hi[0], lo[1], hi[1]],
        },
        graph: GraphSection {
            pitch: (hi[0] - lo[0]) / 21.0,
        },
    }
}

pub fn cmd_calibrate(cfg: &RunConfig, csv_path: &Path, dir: &Path, format: OutputFormat) -> Result<CommandOutput> {
    let data = SurveyDataset::from_path(csv_path)?;
    prepare_dir(dir)?;
    let fit = run_calibrate(cfg, &data)?;
    let fragment = model_fragment(cfg, &fit, &data);
    let frag_path = dir.join("fitted_model.toml");
    std::fs::write(
        &frag_path,
        toml::to_string_pretty(&fragment).map_err(|e| Error::Config(e.to_string()))?,
    )?;
    let mut files = vec![frag_path];

    let mut vt = Table::new(&["response", "bin", "lag", "semivariance", "pairs", "empty", "fitted"]);
    for (l, (v, f)) in fit.variograms.iter().zip(&fit.fits).enumerate() {
        for (b, bin) in v.bins.iter().enumerate() {
            let model = f.sill * (1.0 - crate::grf::matern32(bin.lag, f.eta).unwrap_or(0.0));
            vt.push(vec![
                json!(l),
                json!(b),
                json!(bin.lag),
                json!(if bin.empty { None } else { Some(bin.semivariance) }),
                json!(bin.pairs),
                json!(bin.empty),
                json!(model),
            ]);
        }
    }
    files.push(vt.write(dir, "variogram", format)?);

    let mut ct = Table::new(&["row", "quadratic_form"]);
    for (i, q) in fit.chi2.quadratic_forms.iter().enumerate() {
        ct.push(vec![json!(i), json!(q)]);
    }
    files.push(ct.write(dir, "chi2", format)?);

    let diag_path = dir.join("diagnostics.json");
    std::fs::write(
        &diag_path,
        serde_json::to_string_pretty(&json!({
            "source": data.source,
            "rows": data.len(),
            "gamma": fit.cross.gamma,
            "residual_variances": fit.cross.variances,
            "fits": fit.fits,
            "pooled_eta": fit.pooled_eta,
            "effective_range": fit.effective_range,
            "ks_distance": fit.chi2.ks_distance,
            "variogram_residual_norm": fit.variogram_residual_norm(),
        }))
        .map_err(|e| Error::Config(e.to_string()))?,
    )?;
    files.push(diag_path);
    files.push(write_manifest(cfg, dir)?);

    let mut summary = format!(
        "{} rows; gamma {:.3}; pooled eta {:.4} (effective range {:.4}); chi2 KS distance {:.4}",
        data.len(),
        fit.cross.gamma,
        fit.pooled_eta,
        fit.effective_range,
        fit.chi2.ks_distance
    );
    for (l, f) in fit.fits.iter().enumerate() {
        summary.push_str(&format!(
            "\nresponse {l}: sill {:.4}, eta {:.4}, nugget {:.4} (noise variance guidance)",
            f.sill, f.eta, f.nugget
        ));
    }
    Ok(CommandOutput { files, summary })
}
