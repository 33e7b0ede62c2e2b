//! Bivariate normal orthant probabilities.
//!
//! Drezner–Wesolowsky / Genz Gauss–Legendre scheme, accurate to roughly
//! double precision for all correlations in [-1, 1].

use super::normal;
use std::f64::consts::PI;

const TWO_PI: f64 = 2.0 * PI;

const W6: [f64; 3] = [0.171_324_492_379_170_5, 0.360_761_573_048_138_4, 0.467_913_934_572_690_4];
const X6: [f64; 3] = [0.932_469_514_203_152_2, 0.661_209_386_466_264_7, 0.238_619_186_083_197_0];

const W12: [f64; 6] = [
    0.047_175_336_386_511_77,
    0.106_939_325_995_318_3,
    0.160_078_328_543_346_4,
    0.203_167_426_723_065_9,
    0.233_492_536_538_354_7,
    0.249_147_045_813_402_9,
];
const X12: [f64; 6] = [
    0.981_560_634_246_719_1,
    0.904_117_256_370_475_0,
    0.769_902_674_194_305_0,
    0.587_317_954_286_617_1,
    0.367_831_498_998_180_2,
    0.125_233_408_511_469_2,
];

const W20: [f64; 10] = [
    0.017_614_007_139_152_12,
    0.040_601_429_800_386_94,
    0.062_672_048_334_109_06,
    0.083_276_741_576_704_75,
    0.101_930_119_817_240_4,
    0.118_194_531_961_518_4,
    0.131_688_638_449_176_6,
    0.142_096_109_318_382_1,
    0.149_172_986_472_603_7,
    0.152_753_387_130_725_9,
];
const X20: [f64; 10] = [
    0.993_128_599_185_094_9,
    0.963_971_927_277_913_8,
    0.912_234_428_251_325_9,
    0.839_116_971_822_218_8,
    0.746_331_906_460_150_8,
    0.636_053_680_726_515_0,
    0.510_867_001_950_827_1,
    0.373_706_088_715_419_6,
    0.227_785_851_141_645_1,
    0.076_526_521_133_497_33,
];

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
fn upper_orthant(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { normal::cdf(-k) };
    }
    if k == f64::NEG_INFINITY {
        return normal::cdf(-h);
    }
    if r == 0.0 {
        return normal::cdf(-h) * normal::cdf(-k);
    }
    let (w, x): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&W6, &X6)
    } else if r.abs() < 0.75 {
        (&W12, &X12)
    } else {
        (&W20, &X20)
    };

    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin() / 2.0;
        for (wi, xi) in w.iter().zip(x) {
            for node in [1.0 - xi, 1.0 + xi] {
                let sn = (asr * node).sin();
                bvn += wi * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / TWO_PI + normal::cdf(-h) * normal::cdf(-k);
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let as_ = 1.0 - r * r;
            let mut a = as_.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 80.0;
            let asr = -(bs / as_ + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
            }
            if hk > -100.0 {
                let b = bs.sqrt();
                let sp = TWO_PI.sqrt() * normal::cdf(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
            }
            a /= 2.0;
            let mut sum = 0.0;
            for (wi, xi) in w.iter().zip(x) {
                for node in [1.0 - xi, 1.0 + xi] {
                    let xs = (a * node) * (a * node);
                    let asr = -(bs / xs + hk) / 2.0;
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                        let rs = (1.0 - xs).sqrt();
                        let ep = (-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                        sum += wi * asr.exp() * (sp - ep);
                    }
                }
            }
            bvn = (a * sum - bvn) / TWO_PI;
        }
        if r > 0.0 {
            bvn += normal::cdf(-h.max(k));
        } else if h >= k {
            bvn = -bvn;
        } else {
            let l = if h < 0.0 {
                normal::cdf(k) - normal::cdf(h)
            } else {
                normal::cdf(-h) - normal::cdf(-k)
            };
            bvn = l - bvn;
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// `P(X ≤ b1, Y ≤ b2)` for standard normals with correlation `rho`.
pub fn bvn_cdf(b1: f64, b2: f64, rho: f64) -> f64 {
    upper_orthant(-b1, -b2, rho.clamp(-1.0, 1.0))
}

/// Bivariate orthant probability for a centred pair with covariance `cov`.
///
/// Margins whose variance is at or below `var_floor` are treated as point
/// masses at zero.
pub(crate) fn bvn_cdf_cov(b: [f64; 2], cov: [[f64; 2]; 2], var_floor: f64) -> f64 {
    let (v0, v1) = (cov[0][0], cov[1][1]);
    match (v0 <= var_floor, v1 <= var_floor) {
        (true, true) => indicator(b[0]) * indicator(b[1]),
        (true, false) => indicator(b[0]) * normal::cdf(b[1] / v1.sqrt()),
        (false, true) => normal::cdf(b[0] / v0.sqrt()) * indicator(b[1]),
        (false, false) => {
            let (s0, s1) = (v0.sqrt(), v1.sqrt());
            bvn_cdf(b[0] / s0, b[1] / s1, cov[0][1] / (s0 * s1))
        }
    }
}

/// Univariate counterpart of [`bvn_cdf_cov`].
pub(crate) fn uvn_cdf_var(b: f64, var: f64, var_floor: f64) -> f64 {
    if var <= var_floor {
        indicator(b)
    } else {
        normal::cdf(b / var.sqrt())
    }
}

fn indicator(b: f64) -> f64 {
    if b >= 0.0 {
        1.0
    } else {
        0.0
    }
}
