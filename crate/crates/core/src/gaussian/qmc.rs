//! Randomized quasi-Monte Carlo orthant probabilities (Genz separation of
//! variables with Genz–Bretz variable prioritization).

use super::cholesky::{JITTER_MAX, JITTER_START};
use super::normal;
use super::QmcConfig;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Square roots of the first primes, used as Richtmyer lattice generators.
const PRIMES: [f64; 24] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0,
    59.0, 61.0, 67.0, 71.0, 73.0, 79.0, 83.0, 89.0,
];

/// Relative pivot size below which a conditional variance is treated as zero.
const ZERO_PIVOT: f64 = 1e-12;

/// Reordered, pivoted Cholesky factor of the problem.
struct Reordered {
    lower: Vec<Vec<f64>>,
    bound: Vec<f64>,
    /// `true` where the conditional standard deviation vanished.
    degenerate: Vec<bool>,
}

fn reorder(b: &[f64], cov: &DMatrix<f64>, jitter: f64) -> Option<Reordered> {
    let d = b.len();
    let scale = cov.trace().max(f64::MIN_POSITIVE);
    let mut a: Vec<Vec<f64>> = (0..d)
        .map(|i| (0..d).map(|j| cov[(i, j)] + if i == j { jitter } else { 0.0 }).collect())
        .collect();
    let mut bound = b.to_vec();
    let mut lower = vec![vec![0.0; d]; d];
    let mut degenerate = vec![false; d];
    let mut expected = vec![0.0; d];

    for k in 0..d {
        // Pick the remaining variable with the smallest conditional
        // probability given the expected values of those already placed.
        let mut best = k;
        let mut best_p = f64::INFINITY;
        for i in k..d {
            let var = a[i][i] - (0..k).map(|j| lower[i][j] * lower[i][j]).sum::<f64>();
            if var <= ZERO_PIVOT * scale {
                continue;
            }
            let shift: f64 = (0..k).map(|j| lower[i][j] * expected[j]).sum();
            let p = normal::cdf((bound[i] - shift) / var.sqrt());
            if p < best_p {
                best_p = p;
                best = i;
            }
        }
        if best != k {
            a.swap(k, best);
            for row in a.iter_mut() {
                row.swap(k, best);
            }
            bound.swap(k, best);
            lower.swap(k, best);
        }
        let var = a[k][k] - (0..k).map(|j| lower[k][j] * lower[k][j]).sum::<f64>();
        if var < -ZERO_PIVOT * scale {
            return None;
        }
        if var <= ZERO_PIVOT * scale {
            degenerate[k] = true;
            lower[k][k] = 0.0;
            for i in (k + 1)..d {
                lower[i][k] = 0.0;
            }
            expected[k] = 0.0;
            continue;
        }
        let l_kk = var.sqrt();
        lower[k][k] = l_kk;
        for i in (k + 1)..d {
            let s: f64 = (0..k).map(|j| lower[i][j] * lower[k][j]).sum();
            lower[i][k] = (a[i][k] - s) / l_kk;
        }
        let shift: f64 = (0..k).map(|j| lower[k][j] * expected[j]).sum();
        let z = (bound[k] - shift) / l_kk;
        let pz = normal::cdf(z);
        expected[k] = if pz > 1e-300 { -normal::pdf(z) / pz } else { z };
    }
    Some(Reordered {
        lower,
        bound,
        degenerate,
    })
}

/// Integrand value at a point `w ∈ [0,1]^(d-1)`.
fn integrand(r: &Reordered, w: &[f64], y: &mut [f64]) -> f64 {
    let d = r.bound.len();
    let mut value = 1.0;
    for k in 0..d {
        let shift: f64 = (0..k).map(|j| r.lower[k][j] * y[j]).sum();
        let slack = r.bound[k] - shift;
        if r.degenerate[k] {
            if slack < 0.0 {
                return 0.0;
            }
            y[k] = 0.0;
            continue;
        }
        let e = normal::cdf(slack / r.lower[k][k]);
        value *= e;
        if value == 0.0 {
            return 0.0;
        }
        if k + 1 < d {
            let u = (w[k] * e).clamp(1e-300, 1.0 - 1e-16);
            y[k] = normal::quantile(u);
        }
    }
    value
}

/// `P(X ≤ b)` for centred `X ~ N(0, cov)`; returns `(estimate, std_error)`.
pub(crate) fn orthant_qmc(b: &[f64], cov: &DMatrix<f64>, cfg: &QmcConfig) -> Result<(f64, f64)> {
    let d = b.len();
    if d > PRIMES.len() + 1 {
        return Err(Error::DimensionCap {
            dim: d,
            cap: PRIMES.len() + 1,
        });
    }
    let scale = cov.trace();
    let mut reordered = reorder(b, cov, 0.0);
    let mut rel = JITTER_START;
    while reordered.is_none() && rel <= JITTER_MAX * (1.0 + 1e-9) {
        reordered = reorder(b, cov, rel * scale);
        rel *= 10.0;
    }
    let r = reordered.ok_or(Error::NotPsd {
        max_jitter: JITTER_MAX * scale,
    })?;

    let shifts = cfg.randomization_count;
    let per_shift = (cfg.sample_count / shifts).max(1);
    let generators: Vec<f64> = PRIMES.iter().take(d.saturating_sub(1)).map(|p| p.sqrt()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut w = vec![0.0; d];
    let mut y = vec![0.0; d];
    let mut means = Vec::with_capacity(shifts);
    for _ in 0..shifts {
        let shift: Vec<f64> = (0..generators.len()).map(|_| rng.random::<f64>()).collect();
        let mut acc = 0.0;
        for i in 1..=per_shift {
            for (k, (g, s)) in generators.iter().zip(&shift).enumerate() {
                let x = (i as f64 * g + s).fract();
                w[k] = 1.0 - (2.0 * x - 1.0).abs();
            }
            acc += integrand(&r, &w, &mut y);
        }
        means.push(acc / per_shift as f64);
    }
    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean.clamp(0.0, 1.0), (var / n).sqrt()))
}
