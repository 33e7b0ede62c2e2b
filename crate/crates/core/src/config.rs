//! TOML run configuration.
//!
//! Every section and key is optional; missing values take the defaults of
//! the bivariate temperature/salinity example. Unknown keys are rejected.
//! The manifest written next to each command's outputs is a complete
//! `RunConfig` and can be passed back with `--config`.

use crate::error::{Error, Result};
use crate::excursion::{ExcursionSpec, MeasureWeights, Orientation};
use crate::gaussian::CdfOptions;
use crate::grf::{Extent, GridDomain, GrfPrior, SeparableCovariance, TrendModel};
use crate::planner::graph::{build_graph, WaypointGraph};
use crate::planner::{PlanContext, StrategyConfig, StrategyKind};
use crate::simulator::{Scenario, SurveyConfig};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub excursion: ExcursionSection,
    pub grid: GridSection,
    pub graph: GraphSection,
    pub survey: SurveySection,
    pub cdf: CdfOptions,
    pub pointwise: PointwiseSection,
    pub calibration: CalibrationSection,
    pub output: OutputSection,
}

/// Cross-correlation given either as the single off-diagonal entry of a
/// bivariate model or as a full correlation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correlation {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub beta0: Vec<f64>,
    /// Per-response `(x, y)` slopes.
    pub beta1: Vec<[f64; 2]>,
    pub sigma: Vec<f64>,
    pub gamma: Correlation,
    pub eta: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::from_prior(&GrfPrior::default())
    }
}

impl ModelSection {
    pub fn from_prior(prior: &GrfPrior) -> Self {
        let g = &prior.cov.gamma;
        let gamma = if g.nrows() == 2 {
            Correlation::Scalar(g[(0, 1)])
        } else {
            Correlation::Matrix(g.row_iter().map(|r| r.iter().copied().collect()).collect())
        };
        Self {
            beta0: prior.trend.beta0.clone(),
            beta1: prior.trend.beta1.clone(),
            sigma: prior.cov.sigma.clone(),
            gamma,
            eta: prior.cov.eta,
        }
    }

    pub fn prior(&self) -> Result<GrfPrior> {
        let p = self.sigma.len();
        let gamma = match &self.gamma {
            Correlation::Scalar(g) => {
                if p != 2 {
                    return Err(Error::Config(format!(
                        "scalar gamma needs exactly two responses, sigma has {p}"
                    )));
                }
                DMatrix::from_row_slice(2, 2, &[1.0, *g, *g, 1.0])
            }
            Correlation::Matrix(rows) => {
                if rows.len() != p || rows.iter().any(|r| r.len() != p) {
                    return Err(Error::Config(format!("gamma must be a {p}×{p} matrix")));
                }
                DMatrix::from_fn(p, p, |i, j| rows[i][j])
            }
        };
        let prior = GrfPrior {
            trend: TrendModel {
                beta0: self.beta0.clone(),
                beta1: self.beta1.clone(),
            },
            cov: SeparableCovariance {
                sigma: self.sigma.clone(),
                gamma,
                eta: self.eta,
            },
        };
        prior.validate().map_err(config_error)?;
        Ok(prior)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcursionSection {
    pub thresholds: Vec<f64>,
    pub orientation: Vec<Orientation>,
}

impl Default for ExcursionSection {
    fn default() -> Self {
        Self {
            thresholds: vec![2.3, 22.0],
            orientation: vec![Orientation::Above, Orientation::Above],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    /// `[x_min, x_max, y_min, y_max]`.
    pub extent: [f64; 4],
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            nx: 31,
            ny: 31,
            extent: [0.0, 1.0, 0.0, 1.0],
        }
    }
}

impl GridSection {
    pub fn extent(&self) -> Extent {
        let [x_min, x_max, y_min, y_max] = self.extent;
        Extent {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphSection {
    pub pitch: f64,
}

impl Default for GraphSection {
    fn default() -> Self {
        Self { pitch: 1.0 / 21.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurveySection {
    pub stages: usize,
    pub replicates: usize,
    pub measurements_per_leg: usize,
    pub noise_sd: Vec<f64>,
    pub start_node: usize,
    pub seed: u64,
    /// Strategy of `simulate` and `plan-step`.
    pub strategy: StrategyKind,
    /// Strategies compared by `replicate`.
    pub strategies: Vec<StrategyKind>,
    pub lookahead_samples: usize,
    pub prune_revisits: bool,
}

impl Default for SurveySection {
    fn default() -> Self {
        let s = SurveyConfig::default();
        Self {
            stages: s.stages,
            replicates: s.replicates,
            measurements_per_leg: s.measurements_per_leg,
            noise_sd: s.noise_sd,
            start_node: s.start_node,
            seed: s.seed,
            strategy: s.strategy.kind,
            strategies: StrategyKind::ALL.to_vec(),
            lookahead_samples: s.strategy.lookahead_samples,
            prune_revisits: s.strategy.prune_revisits,
        }
    }
}

impl SurveySection {
    pub fn strategy_config(&self, kind: StrategyKind) -> StrategyConfig {
        StrategyConfig {
            kind,
            lookahead_samples: self.lookahead_samples,
            prune_revisits: self.prune_revisits,
        }
    }

    pub fn survey_config(&self) -> SurveyConfig {
        SurveyConfig {
            stages: self.stages,
            replicates: self.replicates,
            measurements_per_leg: self.measurements_per_leg,
            noise_sd: self.noise_sd.clone(),
            start_node: self.start_node,
            strategy: self.strategy_config(self.strategy),
            seed: self.seed,
        }
    }
}

/// Single-location study with zero means and an excursion below zero
/// in both responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointwiseSection {
    pub gammas: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub noise_sd: f64,
    pub tolerance: f64,
}

impl Default for PointwiseSection {
    fn default() -> Self {
        Self {
            gammas: vec![0.2, 0.6, 0.8],
            sigmas: vec![1.0, 2.0],
            noise_sd: 0.5,
            tolerance: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSection {
    /// Largest lag binned; half the data's bounding-box diagonal when unset.
    pub max_lag: Option<f64>,
    pub bin_count: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub format: OutputFormat,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            format: OutputFormat::Csv,
        }
    }
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let prior = self.model.prior()?;
        self.spec()?;
        self.grid()?;
        let graph = self.graph()?;
        graph.check_node(self.survey.start_node)?;
        let survey = self.survey.survey_config();
        survey.validate()?;
        if survey.noise_sd.len() != prior.p() {
            return Err(Error::Config(format!(
                "{} noise levels for {} responses",
                survey.noise_sd.len(),
                prior.p()
            )));
        }
        if self.survey.strategies.is_empty() {
            return Err(Error::Config("survey.strategies is empty".into()));
        }
        self.cdf.validate()?;
        let pw = &self.pointwise;
        if pw.gammas.iter().any(|g| !(-1.0..=1.0).contains(g))
            || pw.sigmas.iter().any(|s| !(*s > 0.0))
            || !(pw.noise_sd >= 0.0)
            || !(pw.tolerance > 0.0)
        {
            return Err(Error::Config("invalid pointwise section".into()));
        }
        if let Some(l) = self.calibration.max_lag {
            if !(l > 0.0) {
                return Err(Error::Config(format!("calibration.max_lag must be > 0, got {l}")));
            }
        }
        if self.calibration.bin_count == Some(0) {
            return Err(Error::Config("calibration.bin_count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn prior(&self) -> Result<GrfPrior> {
        self.model.prior()
    }

    pub fn spec(&self) -> Result<ExcursionSpec> {
        let spec = ExcursionSpec {
            thresholds: self.excursion.thresholds.clone(),
            orientation: self.excursion.orientation.clone(),
        };
        spec.validate(self.model.sigma.len()).map_err(config_error)?;
        Ok(spec)
    }

    pub fn grid(&self) -> Result<GridDomain> {
        GridDomain::new(self.grid.nx, self.grid.ny, self.grid.extent()).map_err(config_error)
    }

    pub fn graph(&self) -> Result<WaypointGraph> {
        build_graph(&self.grid.extent(), self.graph.pitch).map_err(config_error)
    }

    /// Prior, grid and planning context for the simulator and planner.
    pub fn scenario(&self) -> Result<Scenario> {
        let grid = self.grid()?;
        let survey = self.survey.survey_config();
        Ok(Scenario {
            prior: self.prior()?,
            plan: PlanContext {
                graph: self.graph()?,
                spec: self.spec()?,
                weights: MeasureWeights::uniform(grid.len(), grid.cell_area()),
                noise_sd: survey.noise_sd,
                measurements_per_leg: survey.measurements_per_leg,
                cdf: self.cdf,
            },
            grid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.prior().unwrap(), GrfPrior::default());
    }

    #[test]
    fn round_trip_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.survey.seed = 77;
        cfg.survey.strategies = vec![StrategyKind::Naive, StrategyKind::Myopic];
        cfg.output.format = OutputFormat::Jsonl;
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml_str("[model]\nbogus = 1\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml_str("[nonsense]\n"), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml_str("[model]\neta = -1.0\n").is_err());
        assert!(RunConfig::from_toml_str("[model]\ngamma = 1.5\n").is_err());
        assert!(RunConfig::from_toml_str("[survey]\nstart_node = 100000\n").is_err());
        assert!(RunConfig::from_toml_str("[excursion]\nthresholds = [1.0]\n").is_err());
    }

    #[test]
    fn matrix_gamma_is_accepted() {
        let cfg = RunConfig::from_toml_str("[model]\ngamma = [[1.0, 0.3], [0.3, 1.0]]\n").unwrap();
        assert!((cfg.prior().unwrap().cov.gamma[(1, 0)] - 0.3).abs() < 1e-15);
    }
}
