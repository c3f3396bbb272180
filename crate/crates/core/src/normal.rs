//! Standard normal helpers shared by the baselines and interval code.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

pub(crate) const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, accurate in both tails.
pub fn cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / SQRT_2)
    }
}

/// Standard normal quantile function.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        f64::NEG_INFINITY
    } else if p >= 1.0 {
        f64::INFINITY
    } else {
        -SQRT_2 * erfc_inv(2.0 * p)
    }
}

/// Density of the standard bivariate normal with correlation `rho`.
pub fn bivariate_pdf(x: f64, y: f64, rho: f64) -> f64 {
    let one_minus = 1.0 - rho * rho;
    let q = (x * x - 2.0 * rho * x * y + y * y) / one_minus;
    (-0.5 * q).exp() / (2.0 * PI * one_minus.sqrt())
}
