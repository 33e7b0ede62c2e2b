//! Model calibration from survey data: trend regression, residual
//! cross-correlation, empirical variogram with a Matérn-3/2 fit, and a χ²₂
//! goodness-of-fit diagnostic.

use crate::error::{Error, Result};
use crate::gaussian::mvn_sample;
use crate::grf::{isotopic, matern32, prior_cov, prior_mean, GeneralizedLocation, GrfPrior, SeparableCovariance, TrendModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::io::Read;

/// Minimum number of rows for any fit.
pub const MIN_ROWS: usize = 30;

/// Minimum number of non-empty variogram bins for a Matérn fit.
pub const MIN_BINS: usize = 4;

/// `η·h` at which the Matérn-3/2 correlation falls to 0.05.
pub const EFFECTIVE_RANGE_FACTOR: f64 = 4.743_864_518_390_579;

pub const CSV_HEADER: [&str; 6] = ["t", "x", "y", "depth", "temperature", "salinity"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub depth: f64,
    pub temperature: f64,
    pub salinity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SurveyDataset {
    pub rows: Vec<SurveyRow>,
    pub source: String,
}

impl SurveyDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn positions(&self) -> Vec<[f64; 2]> {
        self.rows.iter().map(|r| [r.x, r.y]).collect()
    }

    /// `n × 2` matrix of (temperature, salinity).
    pub fn responses(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), 2, |i, j| {
            if j == 0 {
                self.rows[i].temperature
            } else {
                self.rows[i].salinity
            }
        })
    }

    /// Parses `t,x,y,depth,temperature,salinity` CSV.
    ///
    /// Line numbers in errors count the header as line 1.
    pub fn from_reader<R: Read>(reader: R, source: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut records = rdr.records();
        let header = match records.next() {
            Some(h) => h.map_err(|e| schema_from_csv(e, 1))?,
            None => {
                return Err(Error::Schema {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        };
        let names: Vec<&str> = header.iter().collect();
        if names != CSV_HEADER {
            return Err(Error::Schema {
                line: 1,
                message: format!("expected header `{}`, found `{}`", CSV_HEADER.join(","), names.join(",")),
            });
        }
        let mut rows = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (k, rec) in records.enumerate() {
            let line = k as u64 + 2;
            let rec = rec.map_err(|e| schema_from_csv(e, line))?;
            if rec.len() != CSV_HEADER.len() {
                return Err(Error::Schema {
                    line,
                    message: format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()),
                });
            }
            let mut v = [0.0; 6];
            for (i, field) in rec.iter().enumerate() {
                let parsed: f64 = field.parse().map_err(|_| Error::Schema {
                    line,
                    message: format!("field `{}` is not a number: `{field}`", CSV_HEADER[i]),
                })?;
                if !parsed.is_finite() {
                    return Err(Error::Schema {
                        line,
                        message: format!("field `{}` is not finite", CSV_HEADER[i]),
                    });
                }
                v[i] = parsed;
            }
            if v[0] < last_t {
                return Err(Error::Schema {
                    line,
                    message: format!("timestamp {} precedes the previous row's {last_t}", v[0]),
                });
            }
            last_t = v[0];
            rows.push(SurveyRow {
                t: v[0],
                x: v[1],
                y: v[2],
                depth: v[3],
                temperature: v[4],
                salinity: v[5],
            });
        }
        Ok(Self {
            rows,
            source: source.to_string(),
        })
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(CSV_HEADER).map_err(io)?;
        for r in &self.rows {
            w.write_record(
                [r.t, r.x, r.y, r.depth, r.temperature, r.salinity].map(|v| v.to_string()),
            )
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn schema_from_csv(e: csv::Error, line: u64) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(line);
    Error::Schema {
        line,
        message: e.to_string(),
    }
}

/// Ordinary least squares of each response column on `(1, x, y)`.
/// Returns the trend and the `n × p` residuals.
pub fn fit_trend_values(positions: &[[f64; 2]], values: &DMatrix<f64>) -> Result<(TrendModel, DMatrix<f64>)> {
    let n = positions.len();
    if values.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} positions with {} value rows",
            values.nrows()
        )));
    }
    if n < 3 {
        return Err(Error::RankDeficient);
    }
    let x = DMatrix::from_fn(n, 3, |i, j| if j == 0 { 1.0 } else { positions[i][j - 1] });
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax * (n as f64).sqrt() {
        return Err(Error::RankDeficient);
    }
    let coef = svd.solve(values, 0.0).map_err(|_| Error::RankDeficient)?;
    let residuals = values - &x * &coef;
    let p = values.ncols();
    let trend = TrendModel {
        beta0: (0..p).map(|l| coef[(0, l)]).collect(),
        beta1: (0..p).map(|l| [coef[(1, l)], coef[(2, l)]]).collect(),
    };
    Ok((trend, residuals))
}

pub fn fit_trend(data: &SurveyDataset) -> Result<(TrendModel, DMatrix<f64>)> {
    fit_trend_values(&data.positions(), &data.responses())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub gamma: f64,
    pub variances: Vec<f64>,
}

/// Pearson correlation between the two residual columns, and the
/// empirical variance of each.
pub fn residual_cross_corr(residuals: &DMatrix<f64>) -> Result<CrossCorrelation> {
    let n = residuals.nrows();
    if n < MIN_ROWS {
        return Err(Error::InsufficientData { needed: MIN_ROWS, got: n });
    }
    if residuals.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "cross-correlation needs two residual columns, got {}",
            residuals.ncols()
        )));
    }
    let centred: Vec<DVector<f64>> = (0..2)
        .map(|l| {
            let c = residuals.column(l);
            c.add_scalar(-c.mean())
        })
        .collect();
    let v0 = centred[0].norm_squared() / (n as f64 - 1.0);
    let v1 = centred[1].norm_squared() / (n as f64 - 1.0);
    let cov = centred[0].dot(&centred[1]) / (n as f64 - 1.0);
    let gamma = if v0 > 0.0 && v1 > 0.0 {
        (cov / (v0 * v1).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(CrossCorrelation {
        gamma,
        variances: vec![v0, v1],
    })
}

/// Equal-width lag bins on `[0, max_lag]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramBins {
    pub max_lag: f64,
    pub count: usize,
}

impl VariogramBins {
    /// Half the diagonal of the data's bounding box, split into 15 bins.
    pub fn for_positions(positions: &[[f64; 2]]) -> Self {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in positions {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let diag = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        Self {
            max_lag: 0.5 * diag,
            count: 15,
        }
    }

    pub fn width(&self) -> f64 {
        self.max_lag / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariogramBin {
    /// Mean pair distance in the bin (bin centre when empty).
    pub lag: f64,
    pub semivariance: f64,
    pub pairs: usize,
    pub empty: bool,
}

/// Binned empirical semivariances of one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variogram {
    pub bins: Vec<VariogramBin>,
}

impl Variogram {
    pub fn non_empty(&self) -> impl Iterator<Item = &VariogramBin> {
        self.bins.iter().filter(|b| !b.empty)
    }
}

/// Matheron estimator `γ(h) = Σ (r_i − r_j)² / (2·N(h))` per bin, one
/// variogram per residual column.
pub fn empirical_variogram(residuals: &DMatrix<f64>, positions: &[[f64; 2]], bins: &VariogramBins) -> Result<Vec<Variogram>> {
    let n = positions.len();
    if residuals.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} positions with {} residual rows",
            residuals.nrows()
        )));
    }
    if !(bins.max_lag > 0.0) || bins.count == 0 {
        return Err(Error::Config(format!("invalid variogram bins {bins:?}")));
    }
    let p = residuals.ncols();
    let width = bins.width();
    let mut sums = vec![vec![0.0; bins.count]; p];
    let mut lag_sum = vec![0.0; bins.count];
    let mut counts = vec![0usize; bins.count];
    for i in 0..n {
        for j in (i + 1)..n {
            let h = (positions[i][0] - positions[j][0]).hypot(positions[i][1] - positions[j][1]);
            if h > bins.max_lag {
                continue;
            }
            let b = ((h / width) as usize).min(bins.count - 1);
            counts[b] += 1;
            lag_sum[b] += h;
            for l in 0..p {
                let d = residuals[(i, l)] - residuals[(j, l)];
                sums[l][b] += d * d;
            }
        }
    }
    Ok((0..p)
        .map(|l| Variogram {
            bins: (0..bins.count)
                .map(|b| {
                    let c = counts[b];
                    VariogramBin {
                        lag: if c > 0 { lag_sum[b] / c as f64 } else { (b as f64 + 0.5) * width },
                        semivariance: if c > 0 { sums[l][b] / (2.0 * c as f64) } else { f64::NAN },
                        pairs: c,
                        empty: c == 0,
                    }
                })
                .collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternFit {
    pub sill: f64,
    pub eta: f64,
    /// Nugget from a refit with an additive constant at the same `eta`,
    /// reported for guidance on the measurement-noise level.
    pub nugget: f64,
    /// Weighted residual norm of the fit.
    pub residual_norm: f64,
}

impl MaternFit {
    pub fn effective_range(&self) -> f64 {
        effective_range(self.eta)
    }
}

/// Lag at which the Matérn-3/2 correlation with inverse range `eta` drops
/// to 0.05.
pub fn effective_range(eta: f64) -> f64 {
    EFFECTIVE_RANGE_FACTOR / eta
}

/// Count-weighted least squares of `sill·(1 − matern32(h; η))`; the sill
/// is profiled out in closed form and `η` found by a bracketed search in
/// `log η`.
pub fn fit_matern(variogram: &Variogram) -> Result<MaternFit> {
    let pts: Vec<(f64, f64, f64)> = variogram
        .non_empty()
        .map(|b| (b.lag, b.semivariance, b.pairs as f64))
        .collect();
    if pts.len() < MIN_BINS {
        return Err(Error::FitDiverged(format!(
            "{} non-empty bins, need at least {MIN_BINS}",
            pts.len()
        )));
    }
    let h_min = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).max(1e-12);
    let h_max = pts.iter().map(|p| p.0).fold(0.0, f64::max);
    if !(h_max > h_min) {
        return Err(Error::FitDiverged("all lags coincide".into()));
    }
    if pts.iter().all(|p| p.1 == 0.0) {
        return Ok(MaternFit {
            sill: 0.0,
            eta: f64::NAN,
            nugget: 0.0,
            residual_norm: 0.0,
        });
    }

    let shape = |h: f64, eta: f64| 1.0 - matern32(h, eta).unwrap_or(0.0);
    let profile = |log_eta: f64| -> (f64, f64) {
        let eta = log_eta.exp();
        let (mut num, mut den) = (0.0, 0.0);
        for &(h, g, w) in &pts {
            let s = shape(h, eta);
            num += w * g * s;
            den += w * s * s;
        }
        let sill = if den > 0.0 { num / den } else { 0.0 };
        let sse = pts.iter().map(|&(h, g, w)| w * (g - sill * shape(h, eta)).powi(2)).sum::<f64>();
        (sse, sill)
    };

    // Inverse ranges whose effective range spans the binned lags.
    let lo = (EFFECTIVE_RANGE_FACTOR / (4.0 * h_max)).ln();
    let hi = (EFFECTIVE_RANGE_FACTOR / (0.25 * h_min)).ln();
    let steps = 200;
    let mut best = (f64::INFINITY, 0usize);
    for k in 0..=steps {
        let x = lo + (hi - lo) * k as f64 / steps as f64;
        let sse = profile(x).0;
        if sse < best.0 {
            best = (sse, k);
        }
    }
    if best.1 == 0 || best.1 == steps {
        return Err(Error::FitDiverged(format!(
            "inverse range at the search bound ({})",
            (lo + (hi - lo) * best.1 as f64 / steps as f64).exp()
        )));
    }
    // Golden-section refinement inside the bracketing grid cell.
    let cell = (hi - lo) / steps as f64;
    let (mut a, mut b) = (lo + (best.1 as f64 - 1.0) * cell, lo + (best.1 as f64 + 1.0) * cell);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..100 {
        if profile(c).0 < profile(d).0 {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
        if (b - a).abs() < 1e-13 {
            break;
        }
    }
    let log_eta = 0.5 * (a + b);
    let (sse, sill) = profile(log_eta);
    let eta = log_eta.exp();
    if !(sill > 0.0) {
        return Err(Error::FitDiverged(format!("non-positive sill {sill}")));
    }

    // Nugget + partial sill at the fitted inverse range.
    let (mut sw, mut ss, mut sss, mut sg, mut sgs) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(h, gv, w) in &pts {
        let s = shape(h, eta);
        sw += w;
        ss += w * s;
        sss += w * s * s;
        sg += w * gv;
        sgs += w * gv * s;
    }
    let det = sw * sss - ss * ss;
    let nugget = if det.abs() > 1e-300 {
        ((sg * sss - ss * sgs) / det).max(0.0)
    } else {
        0.0
    };
    let total_w: f64 = pts.iter().map(|p| p.2).sum();
    Ok(MaternFit {
        sill,
        eta,
        nugget,
        residual_norm: (sse / total_w).sqrt(),
    })
}

/// Count-weighted mean of the per-response inverse ranges.
pub fn pooled_eta(fits: &[MaternFit], variograms: &[Variogram]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (f, v) in fits.iter().zip(variograms) {
        let w: f64 = v.non_empty().map(|b| b.pairs as f64).sum();
        num += w * f.eta;
        den += w;
    }
    num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chi2Diagnostic {
    pub quadratic_forms: Vec<f64>,
    pub ks_distance: f64,
}

/// `q_i = r_iᵀ Σ⁻¹ r_i` with `Σ` the zero-lag covariance of `cov`, and the
/// Kolmogorov–Smirnov distance of the `q_i` to the χ²₂ law.
pub fn chi2_diagnostic(residuals: &DMatrix<f64>, cov: &SeparableCovariance) -> Result<Chi2Diagnostic> {
    let sigma = cov.cross();
    if sigma.shape() != (2, 2) || residuals.ncols() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "χ²₂ diagnostic needs two responses, got {:?} residuals and {:?} covariance",
            residuals.shape(),
            sigma.shape()
        )));
    }
    let det = sigma[(0, 0)] * sigma[(1, 1)] - sigma[(0, 1)] * sigma[(1, 0)];
    let tr = sigma.trace();
    if !(det > 1e-12 * tr * tr) || !(tr > 0.0) {
        return Err(Error::SingularCovariance);
    }
    let inv = sigma.try_inverse().ok_or(Error::SingularCovariance)?;
    let q: Vec<f64> = residuals
        .row_iter()
        .map(|r| {
            let r = r.transpose();
            (r.transpose() * &inv * &r)[(0, 0)].max(0.0)
        })
        .collect();
    let ks = ks_distance_chi2_2(&mut q.clone());
    Ok(Chi2Diagnostic {
        quadratic_forms: q,
        ks_distance: ks,
    })
}

/// Kolmogorov–Smirnov distance between the sample and `1 − exp(−q/2)`.
fn ks_distance_chi2_2(sample: &mut [f64]) -> f64 {
    sample.sort_by(|a, b| a.total_cmp(b));
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &q)| {
            let f = 1.0 - (-0.5 * q).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Result of the full calibration workflow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub trend: TrendModel,
    pub cov: SeparableCovariance,
    pub cross: CrossCorrelation,
    pub fits: Vec<MaternFit>,
    pub pooled_eta: f64,
    pub effective_range: f64,
    pub variograms: Vec<Variogram>,
    pub chi2: Chi2Diagnostic,
}

impl FittedModel {
    pub fn variogram_residual_norm(&self) -> f64 {
        self.fits.iter().map(|f| f.residual_norm).sum()
    }
}

/// Trend, cross-correlation, variogram fits and χ² diagnostic.
pub fn calibrate(data: &SurveyDataset, bins: Option<VariogramBins>) -> Result<FittedModel> {
    if data.len() < MIN_ROWS {
        return Err(Error::InsufficientData {
            needed: MIN_ROWS,
            got: data.len(),
        });
    }
    let positions = data.positions();
    let (trend, residuals) = fit_trend(data)?;
    let cross = residual_cross_corr(&residuals)?;
    let bins = bins.unwrap_or_else(|| VariogramBins::for_positions(&positions));
    let variograms = empirical_variogram(&residuals, &positions, &bins)?;
    let fits = variograms.iter().map(fit_matern).collect::<Result<Vec<_>>>()?;
    let eta = pooled_eta(&fits, &variograms);
    let cov = SeparableCovariance::bivariate([fits[0].sill.sqrt(), fits[1].sill.sqrt()], cross.gamma, eta);
    let chi2 = chi2_diagnostic(&residuals, &cov)?;
    Ok(FittedModel {
        trend,
        cov,
        cross,
        fits,
        pooled_eta: eta,
        effective_range: effective_range(eta),
        variograms,
        chi2,
    })
}

/// Draws a synthetic survey from `prior` at `positions`, adding independent
/// measurement noise with per-response standard deviations `noise_sd`.
/// Rows are time-stamped in input order at a fixed depth of 0.5.
pub fn synthetic_dataset(prior: &GrfPrior, positions: &[[f64; 2]], noise_sd: &[f64], seed: u64) -> Result<SurveyDataset> {
    prior.validate()?;
    if prior.p() != 2 || noise_sd.len() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "survey data carries two responses; prior has {} and noise has {}",
            prior.p(),
            noise_sd.len()
        )));
    }
    let xs: Vec<GeneralizedLocation> = positions.iter().flat_map(|&u| isotopic(u, 2)).collect();
    let mut cov = prior_cov(&xs, &xs, &prior.cov);
    for (i, x) in xs.iter().enumerate() {
        cov[(i, i)] += noise_sd[x.response].powi(2);
    }
    let mean = prior_mean(&xs, &prior.trend);
    let draw = mvn_sample(mean.as_slice(), &cov, 1, seed)?;
    let rows = positions
        .iter()
        .enumerate()
        .map(|(i, u)| SurveyRow {
            t: i as f64,
            x: u[0],
            y: u[1],
            depth: 0.5,
            temperature: draw[(0, 2 * i)],
            salinity: draw[(0, 2 * i + 1)],
        })
        .collect();
    Ok(SurveyDataset {
        rows,
        source: format!("synthetic(seed={seed})"),
    })
}
