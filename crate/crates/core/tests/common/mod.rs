//! Shared fixtures and Monte Carlo oracles for the integration tests.
#![allow(dead_code)]

use grf_excursion::cokriging::{ObservationBatch, PosteriorState};
use grf_excursion::criteria::CandidateDesign;
use grf_excursion::excursion::{ibv, ExcursionSpec, MeasureWeights, Orientation};
use grf_excursion::gaussian::{mvn_sample, CdfOptions};
use grf_excursion::grf::{prior_cov, prior_mean, GeneralizedLocation, GridDomain, GrfPrior, SeparableCovariance, TrendModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_prior(rng: &mut ChaCha8Rng) -> GrfPrior {
    let trend = TrendModel {
        beta0: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        beta1: vec![
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        ],
    };
    let cov = SeparableCovariance::bivariate(
        [rng.random_range(0.5..2.0), rng.random_range(0.5..2.0)],
        rng.random_range(-0.8..0.8),
        rng.random_range(2.0..6.0),
    );
    GrfPrior::new(trend, cov).unwrap()
}

pub fn random_point(rng: &mut ChaCha8Rng) -> [f64; 2] {
    [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]
}

/// Heterotopic batch of `q` observations at random points.
pub fn random_batch(rng: &mut ChaCha8Rng, q: usize, p: usize) -> ObservationBatch {
    let xs: Vec<GeneralizedLocation> = (0..q)
        .map(|_| GeneralizedLocation::new(random_point(rng), rng.random_range(0..p)))
        .collect();
    let values = (0..q).map(|_| rng.random_range(-2.0..2.0)).collect();
    let sds: Vec<f64> = (0..p).map(|_| rng.random_range(0.2..1.0)).collect();
    ObservationBatch::with_diagonal_noise(xs, values, &sds).unwrap()
}

/// Posterior on an `n × n` unit grid after a few random observations.
pub fn random_state(rng: &mut ChaCha8Rng, n: usize) -> PosteriorState {
    let prior = random_prior(rng);
    let mut state = PosteriorState::from_prior(&prior, &GridDomain::unit(n)).unwrap();
    let batches = rng.random_range(0..3);
    for _ in 0..batches {
        let q = rng.random_range(1..4);
        state = state.update(&random_batch(rng, q, 2)).unwrap();
    }
    state
}

/// Thresholds within one standard deviation of the mean field's centre,
/// with random orientations.
pub fn random_spec(rng: &mut ChaCha8Rng, state: &PosteriorState) -> ExcursionSpec {
    let centre = state.grid().len() / 2;
    let (m, k) = state.node_marginal(centre);
    let thresholds = (0..2).map(|l| m[l] + rng.random_range(-1.0..1.0) * k[(l, l)].sqrt()).collect();
    let orientation = (0..2)
        .map(|_| if rng.random_bool(0.5) { Orientation::Above } else { Orientation::Below })
        .collect();
    ExcursionSpec { thresholds, orientation }
}

pub fn random_design(rng: &mut ChaCha8Rng, q: usize) -> CandidateDesign {
    let xs: Vec<GeneralizedLocation> = (0..q)
        .map(|_| GeneralizedLocation::new(random_point(rng), rng.random_range(0..2)))
        .collect();
    let noise = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        q,
        (0..q).map(|_| rng.random_range(0.05..0.5)),
    ));
    CandidateDesign { xs, noise }
}

pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws hypothetical data at the design from the current predictive,
/// conditions on it and recomputes the IBV; returns the mean and standard
/// error over `draws`.
pub fn simulated_eibv(
    state: &PosteriorState,
    design: &CandidateDesign,
    spec: &ExcursionSpec,
    weights: &MeasureWeights,
    draws: usize,
    seed: u64,
) -> (f64, f64) {
    let mean = state.mean_at(&design.xs).unwrap();
    let cov = state.cov_at(&design.xs, &design.xs).unwrap() + &design.noise;
    let ys = mvn_sample(mean.as_slice(), &cov, draws, seed).unwrap();
    let opts = CdfOptions::default();
    let samples: Vec<f64> = (0..draws)
        .map(|d| {
            let values: Vec<f64> = ys.row(d).iter().copied().collect();
            let batch = ObservationBatch::new(design.xs.clone(), values, design.noise.clone()).unwrap();
            let post = state.update(&batch).unwrap();
            ibv(&post, spec, weights, &opts).unwrap()
        })
        .collect();
    mean_and_se(&samples)
}

/// Draws of the grid field (node-major, responses interleaved) from the
/// posterior; one row per draw.
pub fn field_draws(state: &PosteriorState, draws: usize, seed: u64) -> DMatrix<f64> {
    mvn_sample(state.mean().as_slice(), state.cov(), draws, seed).unwrap()
}

/// Whether every response of `node` lies in the target orthant.
pub fn in_excursion(row: &[f64], node: usize, p: usize, spec: &ExcursionSpec) -> bool {
    (0..p).all(|l| {
        let v = row[node * p + l];
        match spec.orientation[l] {
            Orientation::Above => v >= spec.thresholds[l],
            Orientation::Below => v <= spec.thresholds[l],
        }
    })
}

/// Temperature/salinity-style survey model on a 2 × 2 km square:
/// variances 0.20 and 5.76, cross-correlation 0.5 and effective range
/// 0.15 km.
pub fn survey_prior() -> GrfPrior {
    let eta = grf_excursion::calibration::EFFECTIVE_RANGE_FACTOR / 0.15;
    let trend = TrendModel {
        beta0: vec![5.8, 24.0],
        beta1: vec![[0.1, -0.3], [0.2, -0.5]],
    };
    GrfPrior::new(trend, SeparableCovariance::bivariate([0.20f64.sqrt(), 2.4], 0.5, eta)).unwrap()
}

/// `n` uniform positions on the 2 × 2 km survey square.
pub fn survey_positions(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| [r.random_range(0.0..2.0), r.random_range(0.0..2.0)])
        .collect()
}

/// Whether a fit meets the round-trip tolerances: correlation within 0.1,
/// sills within 25 % and effective range within 30 %.
pub fn round_trip_ok(fit: &grf_excursion::calibration::FittedModel, prior: &GrfPrior) -> bool {
    let truth_range = grf_excursion::calibration::effective_range(prior.cov.eta);
    let sills_ok = fit
        .fits
        .iter()
        .zip(&prior.cov.sigma)
        .all(|(f, s)| (f.sill / (s * s) - 1.0).abs() <= 0.25);
    (fit.cross.gamma - 0.5).abs() <= 0.1 && sills_ok && (fit.effective_range / truth_range - 1.0).abs() <= 0.3
}

/// Textbook conditioning of the grid on all batches at once via an LU
/// solve, independent of the library's factor-and-update path.
pub fn direct_posterior(prior: &GrfPrior, grid: &GridDomain, batches: &[ObservationBatch]) -> (DMatrix<f64>, DMatrix<f64>) {
    let g = grid.generalized_locations(prior.p());
    let h: Vec<GeneralizedLocation> = batches.iter().flat_map(|b| b.xs.clone()).collect();
    let z: Vec<f64> = batches.iter().flat_map(|b| b.values.clone()).collect();
    let n = h.len();
    let mut a = prior_cov(&h, &h, &prior.cov);
    let mut off = 0;
    for b in batches {
        let q = b.len();
        let mut v = a.view_mut((off, off), (q, q));
        v += &b.noise;
        off += q;
    }
    let kgh = prior_cov(&g, &h, &prior.cov);
    let lu = a.lu();
    let resid = DMatrix::from_iterator(n, 1, z.iter().zip(prior_mean(&h, &prior.trend).iter()).map(|(z, m)| z - m));
    let mean = DMatrix::from_iterator(g.len(), 1, prior_mean(&g, &prior.trend).iter().copied())
        + &kgh * lu.solve(&resid).unwrap();
    let cov = prior_cov(&g, &g, &prior.cov) - &kgh * lu.solve(&kgh.transpose()).unwrap();
    (mean, cov)
}
