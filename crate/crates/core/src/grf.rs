//! Prior model for the vector-valued field: generalized locations, linear
//! trend, separable Matérn-3/2 covariance, the grid discretization and
//! ground-truth realizations.

use crate::error::{Error, Result};
use crate::gaussian::{robust_cholesky, CholeskyFactor};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// A spatial point paired with a response index (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneralizedLocation {
    pub point: [f64; 2],
    pub response: usize,
}

impl GeneralizedLocation {
    pub fn new(point: [f64; 2], response: usize) -> Self {
        Self { point, response }
    }
}

/// All `p` responses at one point, in response order.
pub fn isotopic(point: [f64; 2], p: usize) -> Vec<GeneralizedLocation> {
    (0..p).map(|l| GeneralizedLocation::new(point, l)).collect()
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Linear trend `μ(u) = β₀ + β₁ u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendModel {
    pub beta0: Vec<f64>,
    /// One row `(∂/∂x, ∂/∂y)` per response.
    pub beta1: Vec<[f64; 2]>,
}

impl TrendModel {
    pub fn constant(beta0: Vec<f64>) -> Self {
        let beta1 = vec![[0.0; 2]; beta0.len()];
        Self { beta0, beta1 }
    }

    pub fn p(&self) -> usize {
        self.beta0.len()
    }

    pub fn at(&self, x: &GeneralizedLocation) -> f64 {
        let b = &self.beta1[x.response];
        self.beta0[x.response] + b[0] * x.point[0] + b[1] * x.point[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta1.len() != self.beta0.len() {
            return Err(Error::DimensionMismatch(format!(
                "beta0 has {} responses, beta1 {}",
                self.beta0.len(),
                self.beta1.len()
            )));
        }
        if self.beta0.iter().chain(self.beta1.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Config("trend coefficients must be finite".into()));
        }
        Ok(())
    }
}

/// Matérn 3/2 correlation `(1 + ηh)·exp(−ηh)`.
pub fn matern32(h: f64, eta: f64) -> Result<f64> {
    if h < 0.0 || h.is_nan() {
        return Err(Error::NegativeDistance(h));
    }
    Ok(matern32_unchecked(h, eta))
}

#[inline]
fn matern32_unchecked(h: f64, eta: f64) -> f64 {
    let s = eta * h;
    (1.0 + s) * (-s).exp()
}

/// `K(u, u') = matern32(‖u − u'‖) · diag(σ) Γ diag(σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparableCovariance {
    pub sigma: Vec<f64>,
    pub gamma: DMatrix<f64>,
    pub eta: f64,
}

impl SeparableCovariance {
    /// Two responses with cross-correlation `gamma`.
    pub fn bivariate(sigma: [f64; 2], gamma: f64, eta: f64) -> Self {
        Self {
            sigma: sigma.to_vec(),
            gamma: DMatrix::from_row_slice(2, 2, &[1.0, gamma, gamma, 1.0]),
            eta,
        }
    }

    pub fn p(&self) -> usize {
        self.sigma.len()
    }

    /// The `p×p` cross-response covariance at zero lag.
    pub fn cross(&self) -> DMatrix<f64> {
        let p = self.p();
        DMatrix::from_fn(p, p, |i, j| self.gamma[(i, j)] * self.sigma[i] * self.sigma[j])
    }

    pub fn spatial(&self, h: f64) -> f64 {
        matern32_unchecked(h, self.eta)
    }

    pub fn k(&self, a: &GeneralizedLocation, b: &GeneralizedLocation) -> f64 {
        let (i, j) = (a.response, b.response);
        self.spatial(distance(a.point, b.point)) * self.gamma[(i, j)] * self.sigma[i] * self.sigma[j]
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.gamma.shape() != (p, p) {
            return Err(Error::DimensionMismatch(format!(
                "sigma has {p} entries, gamma is {:?}",
                self.gamma.shape()
            )));
        }
        if self.sigma.iter().any(|&s| !(s >= 0.0) || !s.is_finite()) {
            return Err(Error::Config("sigma must be finite and non-negative".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config(format!("eta must be positive, got {}", self.eta)));
        }
        for i in 0..p {
            if (self.gamma[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Config("gamma must have a unit diagonal".into()));
            }
            for j in 0..i {
                if (self.gamma[(i, j)] - self.gamma[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Config("gamma must be symmetric".into()));
                }
            }
        }
        if p > 0 && self.gamma.clone().symmetric_eigenvalues().min() < -1e-10 * p as f64 {
            return Err(Error::Config("gamma must be positive semi-definite".into()));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub const UNIT: Extent = Extent {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    };

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, u: [f64; 2], tol: f64) -> bool {
        u[0] >= self.x_min - tol && u[0] <= self.x_max + tol && u[1] >= self.y_min - tol && u[1] <= self.y_max + tol
    }
}

impl Default for Extent {
    fn default() -> Self {
        Self::UNIT
    }
}

/// Regular grid of cell centers, numbered row-major from the south-west
/// corner (`index = row·nx + col`, rows along +y).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDomain {
    pub nx: usize,
    pub ny: usize,
    pub extent: Extent,
}

impl GridDomain {
    pub fn new(nx: usize, ny: usize, extent: Extent) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::DegenerateExtent(format!("grid of {nx}x{ny} cells")));
        }
        if !(extent.width() > 0.0 && extent.height() > 0.0) {
            return Err(Error::DegenerateExtent(format!("{extent:?}")));
        }
        Ok(Self { nx, ny, extent })
    }

    pub fn unit(n: usize) -> Self {
        Self::new(n, n, Extent::UNIT).expect("positive grid size")
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.extent.width() / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.extent.height() / self.ny as f64
    }

    /// Cell area δ.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dy()
    }

    pub fn location(&self, node: usize) -> [f64; 2] {
        let (row, col) = (node / self.nx, node % self.nx);
        [
            self.extent.x_min + (col as f64 + 0.5) * self.dx(),
            self.extent.y_min + (row as f64 + 0.5) * self.dy(),
        ]
    }

    pub fn locations(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.location(i)).collect()
    }

    /// Generalized locations of all grid nodes, interleaved
    /// `index = node·p + response`.
    pub fn generalized_locations(&self, p: usize) -> Vec<GeneralizedLocation> {
        (0..self.len())
            .flat_map(|i| isotopic(self.location(i), p))
            .collect()
    }

    /// Cell containing `u` (clamped to the grid).
    pub fn nearest_node(&self, u: [f64; 2]) -> usize {
        let col = ((u[0] - self.extent.x_min) / self.dx()).floor();
        let row = ((u[1] - self.extent.y_min) / self.dy()).floor();
        let col = (col.max(0.0) as usize).min(self.nx - 1);
        let row = (row.max(0.0) as usize).min(self.ny - 1);
        row * self.nx + col
    }

    /// The node whose center is `u`, if any (to `1e-9` of the cell size).
    pub fn node_at(&self, u: [f64; 2]) -> Option<usize> {
        let node = self.nearest_node(u);
        let c = self.location(node);
        let tol = 1e-9 * self.dx().min(self.dy());
        ((c[0] - u[0]).abs() <= tol && (c[1] - u[1]).abs() <= tol).then_some(node)
    }

    /// Like [`node_at`](Self::node_at) but failing with `OffGridLocation`.
    pub fn require_node(&self, u: [f64; 2]) -> Result<usize> {
        self.node_at(u)
            .ok_or_else(|| Error::OffGridLocation(format!("({}, {})", u[0], u[1])))
    }
}

/// Prior: trend plus separable covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrfPrior {
    pub trend: TrendModel,
    pub cov: SeparableCovariance,
}

impl GrfPrior {
    pub fn new(trend: TrendModel, cov: SeparableCovariance) -> Result<Self> {
        let prior = Self { trend, cov };
        prior.validate()?;
        Ok(prior)
    }

    pub fn p(&self) -> usize {
        self.trend.p()
    }

    pub fn validate(&self) -> Result<()> {
        self.trend.validate()?;
        self.cov.validate()?;
        if self.trend.p() != self.cov.p() {
            return Err(Error::DimensionMismatch(format!(
                "trend has {} responses, covariance {}",
                self.trend.p(),
                self.cov.p()
            )));
        }
        Ok(())
    }

    pub fn check_locations(&self, xs: &[GeneralizedLocation]) -> Result<()> {
        for x in xs {
            if x.response >= self.p() {
                return Err(Error::DimensionMismatch(format!(
                    "response index {} with p = {}",
                    x.response,
                    self.p()
                )));
            }
            if !x.point.iter().all(|v| v.is_finite()) {
                return Err(Error::DimensionMismatch("non-finite coordinate".into()));
            }
        }
        Ok(())
    }
}

impl Default for GrfPrior {
    /// Temperature/salinity-style bivariate field on the unit square.
    fn default() -> Self {
        Self {
            trend: TrendModel {
                beta0: vec![5.8, 24.0],
                beta1: vec![[0.0, -4.0], [0.0, -3.8]],
            },
            cov: SeparableCovariance::bivariate([2.5, 2.25], 0.2, 3.5),
        }
    }
}

/// Trend evaluated at each location.
pub fn prior_mean(xs: &[GeneralizedLocation], trend: &TrendModel) -> DVector<f64> {
    DVector::from_iterator(xs.len(), xs.iter().map(|x| trend.at(x)))
}

/// Cross-covariance block `k(xs, xs2)`.
pub fn prior_cov(xs: &[GeneralizedLocation], xs2: &[GeneralizedLocation], cov: &SeparableCovariance) -> DMatrix<f64> {
    DMatrix::from_fn(xs.len(), xs2.len(), |i, j| cov.k(&xs[i], &xs2[j]))
}

/// Spatial correlation matrix between two point sets.
fn spatial_corr(a: &[[f64; 2]], b: &[[f64; 2]], eta: f64) -> DMatrix<f64> {
    DMatrix::from_fn(a.len(), b.len(), |i, j| matern32_unchecked(distance(a[i], b[j]), eta))
}

/// One realization of the prior on a grid.
///
/// Values off the grid are produced by conditional simulation given the
/// grid draw: the simple-Kriging predictor from the grid nodes plus an
/// independent residual with the Kriging variance, seeded from the
/// realization seed and the point's coordinates.
#[derive(Debug, Clone)]
pub struct Truth {
    grid: GridDomain,
    prior: GrfPrior,
    /// `N × p`, row per node.
    values: DMatrix<f64>,
    /// Spatial correlation factor on the grid.
    spatial: CholeskyFactor,
    /// `K_s⁻¹ (Z − μ)`, one column per response.
    alpha: DMatrix<f64>,
    cross_lower: DMatrix<f64>,
    seed: u64,
}

/// Draws a ground-truth field on the grid.
pub fn sample_truth(prior: &GrfPrior, grid: &GridDomain, seed: u64) -> Result<Truth> {
    prior.validate()?;
    let p = prior.p();
    let n = grid.len();
    let locs = grid.locations();
    let spatial = robust_cholesky(&spatial_corr(&locs, &locs, prior.cov.eta))?;
    let cross_lower = robust_cholesky(&prior.cov.cross())?.into_lower();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(&mut rng));
    let anomaly = spatial.lower() * w * cross_lower.transpose();
    let mut values = anomaly.clone();
    for i in 0..n {
        for l in 0..p {
            values[(i, l)] += prior.trend.at(&GeneralizedLocation::new(locs[i], l));
        }
    }
    let alpha = spatial.solve(&anomaly);
    Ok(Truth {
        grid: grid.clone(),
        prior: prior.clone(),
        values,
        spatial,
        alpha,
        cross_lower,
        seed,
    })
}

impl Truth {
    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Grid values, one row per node.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Interleaved `N·p` vector matching the posterior layout.
    pub fn interleaved(&self) -> DVector<f64> {
        let p = self.values.ncols();
        DVector::from_fn(self.values.len(), |k, _| self.values[(k / p, k % p)])
    }

    /// All responses at an arbitrary point.
    pub fn values_at(&self, u: [f64; 2]) -> DVector<f64> {
        if let Some(node) = self.grid.node_at(u) {
            return self.values.row(node).transpose();
        }
        let p = self.values.ncols();
        let locs = self.grid.locations();
        let k = spatial_corr(&locs, &[u], self.prior.cov.eta);
        let kriged = self.alpha.transpose() * &k;
        let v = self.spatial.forward_solve(&k);
        let resid_var = (1.0 - v.norm_squared()).max(0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(point_seed(self.seed, u));
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let resid = &self.cross_lower * z * resid_var.sqrt();
        DVector::from_fn(p, |l, _| {
            self.prior.trend.at(&GeneralizedLocation::new(u, l)) + kriged[l] + resid[l]
        })
    }

    pub fn value(&self, x: &GeneralizedLocation) -> f64 {
        self.values_at(x.point)[x.response]
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combines seed components into one stream seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243f_6a88_85a3_08d3, |acc, &p| mix_seed(acc ^ mix_seed(p)))
}

fn point_seed(seed: u64, u: [f64; 2]) -> u64 {
    derive_seed(&[seed, u[0].to_bits(), u[1].to_bits()])
}
