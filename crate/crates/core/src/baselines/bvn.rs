//! Standard bivariate normal probabilities.
//!
//! Uses Genz's refinement of the Drezner–Wesolowsky method: Gauss–Legendre
//! quadrature of the Plackett identity for `|rho| < 0.925`, and an expansion
//! around the singular `|rho| = 1` case otherwise. Absolute error is near
//! machine precision.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::normal;

// (weight, abscissa) pairs on [-1, 0); the rule is symmetric
const GL6: [(f64, f64); 3] = [
    (0.171_324_492_379_170_5, -0.932_469_514_203_152_2),
    (0.360_761_573_048_138_4, -0.661_209_386_466_264_7),
    (0.467_913_934_572_690_4, -0.238_619_186_083_197_0),
];

const GL12: [(f64, f64); 6] = [
    (0.047_175_336_386_511_77, -0.981_560_634_246_719_1),
    (0.106_939_325_995_318_3, -0.904_117_256_370_475_0),
    (0.160_078_328_543_346_4, -0.769_902_674_194_305_0),
    (0.203_167_426_723_065_9, -0.587_317_954_286_617_1),
    (0.233_492_536_538_354_7, -0.367_831_498_998_180_2),
    (0.249_147_045_813_402_9, -0.125_233_408_511_469_2),
];

const GL20: [(f64, f64); 10] = [
    (0.017_614_007_139_152_12, -0.993_128_599_185_094_9),
    (0.040_601_429_800_386_94, -0.963_971_927_277_913_8),
    (0.062_672_048_334_109_06, -0.912_234_428_251_325_9),
    (0.083_276_741_576_704_75, -0.839_116_971_822_218_8),
    (0.101_930_119_817_240_4, -0.746_331_906_460_150_8),
    (0.118_194_531_961_518_4, -0.636_053_680_726_515_0),
    (0.131_688_638_449_176_6, -0.510_867_001_950_827_1),
    (0.142_096_109_318_382_1, -0.373_706_088_715_419_6),
    (0.149_172_986_472_603_7, -0.227_785_851_141_645_1),
    (0.152_753_387_130_725_9, -0.076_526_521_133_497_33),
];

/// Largest `|rho|` accepted by the public functions.
pub const MAX_ABS_RHO: f64 = 1.0 - 1e-12;

/// Upper orthant probability `P(X > h, Y > k)`.
fn upper(h: f64, k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY {
            1.0
        } else {
            normal::cdf(-k)
        };
    }
    if k == f64::NEG_INFINITY {
        return normal::cdf(-h);
    }
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        let hs = (h * h + k * k) / 2.0;
        let asr = r.asin();
        for &(w, x) in rule {
            for sn in [
                (asr * (1.0 - x) / 2.0).sin(),
                (asr * (1.0 + x) / 2.0).sin(),
            ] {
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        bvn = bvn * asr / (4.0 * PI) + normal::cdf(-h) * normal::cdf(-k);
    } else {
        let mut k = k;
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_sq = (1.0 - r) * (1.0 + r);
            let mut a = a_sq.sqrt();
            let b_sq = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(b_sq / a_sq + hk) / 2.0;
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (b_sq - a_sq) * (1.0 - d * b_sq / 5.0) / 3.0
                        + c * d * a_sq * a_sq / 5.0);
            }
            if hk > -100.0 {
                let b = b_sq.sqrt();
                bvn -= (-hk / 2.0).exp()
                    * (2.0 * PI).sqrt()
                    * normal::cdf(-b / a)
                    * b
                    * (1.0 - c * b_sq * (1.0 - d * b_sq / 5.0) / 3.0);
            }
            a /= 2.0;
            for &(w, x) in rule {
                for sign in [-1.0, 1.0] {
                    let xs = (a * (sign * x + 1.0)).powi(2);
                    let rs = (1.0 - xs).sqrt();
                    let asr = -(b_sq / xs + hk) / 2.0;
                    if asr > -100.0 {
                        bvn += a
                            * w
                            * asr.exp()
                            * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                                - (1.0 + c * xs * (1.0 + d * xs)));
                    }
                }
            }
            bvn = -bvn / (2.0 * PI);
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

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() <= MAX_ABS_RHO) {
        return Err(Error::InvalidArgument(format!(
            "|rho| must not exceed 1 - 1e-12, got {rho}"
        )));
    }
    Ok(())
}

/// `P(X <= x, Y <= y)` for the standard bivariate normal; infinite limits allowed.
pub fn bivariate_normal_cdf(x: f64, y: f64, rho: f64) -> Result<f64> {
    check_rho(rho)?;
    Ok(cdf_unchecked(x, y, rho))
}

pub(crate) fn cdf_unchecked(x: f64, y: f64, rho: f64) -> f64 {
    if x == f64::NEG_INFINITY || y == f64::NEG_INFINITY {
        return 0.0;
    }
    if x == f64::INFINITY {
        return normal::cdf(y);
    }
    if y == f64::INFINITY {
        return normal::cdf(x);
    }
    upper(-x, -y, rho)
}

/// Probability of the rectangle `(lower.0, upper.0] x (lower.1, upper.1]`.
pub fn bivariate_normal_rect(lower: (f64, f64), upper: (f64, f64), rho: f64) -> Result<f64> {
    check_rho(rho)?;
    if !(lower.0 < upper.0 && lower.1 < upper.1) {
        return Err(Error::InvalidArgument(format!(
            "rectangle limits must satisfy lower < upper, got {lower:?} and {upper:?}"
        )));
    }
    let p = cdf_unchecked(upper.0, upper.1, rho) - cdf_unchecked(lower.0, upper.1, rho)
        - cdf_unchecked(upper.0, lower.1, rho)
        + cdf_unchecked(lower.0, lower.1, rho);
    Ok(p.max(0.0))
}
