//! Deterministic orthant probabilities in three and four dimensions.
//!
//! The variables are split into a leading pair `A = {0, 1}` and the rest
//! `B`. Scaling the cross-block correlations by `t ∈ [0, 1]` moves from the
//! block-independent problem (a product of univariate/bivariate CDFs) to the
//! target one, and by Plackett's identity
//!
//! ```text
//! dF/dt = Σ_{i∈A, j∈B} ρ_ij · φ₂(b_i, b_j; t·ρ_ij) · P(X_rest ≤ b_rest | X_i = b_i, X_j = b_j)
//! ```
//!
//! where the conditional term is at most bivariate and therefore exact. The
//! path integral is done with adaptive Gauss–Kronrod after the substitution
//! `t = 1 − u²`, which removes the inverse-square-root blow-up of `φ₂` when a
//! cross correlation reaches ±1 at the end of the path.

use super::bvn::{bvn_cdf, bvn_cdf_cov, uvn_cdf_var};
use super::normal;
use std::f64::consts::PI;

const VAR_FLOOR: f64 = 1e-14;
const TOL: f64 = 1e-10;
const MAX_DEPTH: u32 = 12;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Standardized problem: bounds `z`, correlation `r`, dimension `d ≤ 4`.
struct Standardized {
    z: [f64; 4],
    r: [[f64; 4]; 4],
    d: usize,
}

impl Standardized {
    /// Correlation along the homotopy path.
    #[inline]
    fn corr(&self, a: usize, b: usize, t: f64) -> f64 {
        if (a < 2) != (b < 2) {
            t * self.r[a][b]
        } else {
            self.r[a][b]
        }
    }

    /// `φ₂(z_i, z_j) · P(rest | X_i = z_i, X_j = z_j)` at path position `t`.
    fn pair_density(&self, i: usize, j: usize, t: f64) -> f64 {
        let rho = self.corr(i, j, t);
        let det = 1.0 - rho * rho;
        if det <= 0.0 {
            return 0.0;
        }
        let (zi, zj) = (self.z[i], self.z[j]);
        let expo = -(zi * zi - 2.0 * rho * zi * zj + zj * zj) / (2.0 * det);
        if expo < -700.0 {
            return 0.0;
        }
        let density = expo.exp() / (2.0 * PI * det.sqrt());

        let mut rest = [0usize; 2];
        let mut n_rest = 0;
        for k in 0..self.d {
            if k != i && k != j {
                rest[n_rest] = k;
                n_rest += 1;
            }
        }
        // alpha_r = Σ_ss⁻¹ c_r, with c_r the covariances of the rest variable r
        // with (X_i, X_j).
        let mut alpha = [[0.0; 2]; 2];
        let mut c = [[0.0; 2]; 2];
        let mut shifted = [0.0; 2];
        for (slot, &r) in rest[..n_rest].iter().enumerate() {
            let (ci, cj) = (self.corr(r, i, t), self.corr(r, j, t));
            c[slot] = [ci, cj];
            alpha[slot] = [(ci - rho * cj) / det, (cj - rho * ci) / det];
            shifted[slot] = self.z[r] - (alpha[slot][0] * zi + alpha[slot][1] * zj);
        }
        let cond = if n_rest == 1 {
            let v = 1.0 - (alpha[0][0] * c[0][0] + alpha[0][1] * c[0][1]);
            uvn_cdf_var(shifted[0], v, VAR_FLOOR)
        } else {
            let (r0, r1) = (rest[0], rest[1]);
            let v00 = 1.0 - (alpha[0][0] * c[0][0] + alpha[0][1] * c[0][1]);
            let v11 = 1.0 - (alpha[1][0] * c[1][0] + alpha[1][1] * c[1][1]);
            let v01 = self.corr(r0, r1, t) - (alpha[0][0] * c[1][0] + alpha[0][1] * c[1][1]);
            bvn_cdf_cov(shifted, [[v00, v01], [v01, v11]], VAR_FLOOR)
        };
        density * cond
    }
}

/// Adaptive Gauss–Kronrod (7, 15) on `[a, b]`; returns `(value, error estimate)`.
fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for k in 0..7 {
        let dx = half * XGK[k];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[k] * s;
        if k % 2 == 1 {
            gauss += WG[k / 2] * s;
        }
    }
    let (kronrod, gauss) = (kronrod * half, gauss * half);
    let err = (kronrod - gauss).abs();
    if err <= tol || depth >= MAX_DEPTH {
        return (kronrod, err);
    }
    let (l, el) = gauss_kronrod(f, a, center, 0.5 * tol, depth + 1);
    let (r, er) = gauss_kronrod(f, center, b, 0.5 * tol, depth + 1);
    (l + r, el + er)
}

/// Integrates the homotopy derivative over the listed cross pairs
/// `(i, j, multiplicity)` starting from `start = F(0)`.
fn integrate_path(p: &Standardized, pairs: &[(usize, usize, f64)], start: f64) -> (f64, f64) {
    let active: Vec<(usize, usize, f64)> = pairs
        .iter()
        .filter(|&&(i, j, _)| p.r[i][j] != 0.0)
        .copied()
        .collect();
    if active.is_empty() {
        return (start, 0.0);
    }
    let integrand = |u: f64| {
        let t = 1.0 - u * u;
        let mut g = 0.0;
        for &(i, j, mult) in &active {
            g += mult * p.r[i][j] * p.pair_density(i, j, t);
        }
        2.0 * u * g
    };
    let (value, err) = gauss_kronrod(&integrand, 0.0, 1.0, TOL, 0);
    ((start + value).clamp(0.0, 1.0), err)
}

fn standardize(b: &[f64], cov: impl Fn(usize, usize) -> f64) -> Standardized {
    let d = b.len();
    let mut s = [0.0; 4];
    let mut z = [0.0; 4];
    for i in 0..d {
        s[i] = cov(i, i).sqrt();
        z[i] = b[i] / s[i];
    }
    let mut r = [[0.0; 4]; 4];
    for i in 0..d {
        r[i][i] = 1.0;
        for j in 0..i {
            let v = (cov(i, j) / (s[i] * s[j])).clamp(-1.0, 1.0);
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    Standardized { z, r, d }
}

/// `P(X ≤ b)` for a centred Gaussian of dimension 1 to 4 whose variances
/// are all strictly positive. Returns `(probability, error estimate)`.
pub(crate) fn orthant_low_dim(b: &[f64], cov: impl Fn(usize, usize) -> f64) -> (f64, f64) {
    let p = standardize(b, cov);
    match p.d {
        0 => (1.0, 0.0),
        1 => (normal::cdf(p.z[0]), 0.0),
        2 => (bvn_cdf(p.z[0], p.z[1], p.r[0][1]), 0.0),
        3 => {
            let start = bvn_cdf(p.z[0], p.z[1], p.r[0][1]) * normal::cdf(p.z[2]);
            integrate_path(&p, &[(0, 2, 1.0), (1, 2, 1.0)], start)
        }
        4 => {
            let start = bvn_cdf(p.z[0], p.z[1], p.r[0][1]) * bvn_cdf(p.z[2], p.z[3], p.r[2][3]);
            integrate_path(&p, &[(0, 2, 1.0), (0, 3, 1.0), (1, 2, 1.0), (1, 3, 1.0)], start)
        }
        d => panic!("orthant_low_dim called with dimension {d}"),
    }
}

/// `P(X ≤ (a, a))` for `X ~ N(0, [[K, D], [D, K]])` with 2×2 blocks, the
/// structure of the squared-excursion-probability expectations.
///
/// `k_marginal` is `Φ₂(a; K)` when already known; it is the homotopy's
/// starting point squared. Exchangeability of the two blocks makes the
/// `(0, 3)` and `(1, 2)` cross terms equal.
pub(crate) fn repeated_pair_orthant(
    a: [f64; 2],
    k: [[f64; 2]; 2],
    d: [[f64; 2]; 2],
    k_marginal: Option<f64>,
) -> (f64, f64) {
    let b = [a[0], a[1], a[0], a[1]];
    let full = |i: usize, j: usize| -> f64 {
        let (bi, bj) = (i / 2, j / 2);
        let (ri, rj) = (i % 2, j % 2);
        if bi == bj {
            k[ri][rj]
        } else {
            0.5 * (d[ri][rj] + d[rj][ri])
        }
    };
    let p = standardize(&b, full);
    let marginal = k_marginal.unwrap_or_else(|| bvn_cdf(p.z[0], p.z[1], p.r[0][1]));
    integrate_path(&p, &[(0, 2, 1.0), (1, 3, 1.0), (0, 3, 2.0)], marginal * marginal)
}
