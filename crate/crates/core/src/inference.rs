//! Confidence intervals: Fisher-transformed intervals for rho and
//! parametric-bootstrap BCa intervals for every parameter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{check_identified, fit, fit_with_starts, FitOptions, FitResult};
use crate::model::OrdinalDataset;
use crate::normal;
use crate::simulate::{replicate_seed, sample_replicate};
use crate::stats::quantile_sorted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalMethod {
    Fisher,
    Bca,
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherOptions {
    /// Subtract the small-sample mean shift `rho / (2 (n - 1))` on the
    /// transformed scale.
    pub mean_correction: bool,
}

impl Default for FisherOptions {
    fn default() -> Self {
        Self {
            mean_correction: true,
        }
    }
}

/// Interval for a correlation from `atanh(rho_hat) ~ N(atanh(rho) + rho / (2(n-1)), 1 / (n-3))`.
pub fn fisher_interval(rho_hat: f64, n: usize, level: f64, opts: &FisherOptions) -> Result<Interval> {
    check_level(level)?;
    if !(rho_hat.abs() < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "|rho_hat| must be below 1, got {rho_hat}"
        )));
    }
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "Fisher interval needs n >= 4, got {n}"
        )));
    }
    let z = normal::quantile(0.5 + level / 2.0);
    let eta = rho_hat.atanh();
    let half = z / ((n - 3) as f64).sqrt();
    let shift = if opts.mean_correction {
        rho_hat / (2.0 * (n - 1) as f64)
    } else {
        0.0
    };
    Ok(Interval {
        lower: (eta - half - shift).tanh(),
        upper: (eta + half - shift).tanh(),
        level,
        method: IntervalMethod::Fisher,
    })
}

/// Plain percentile interval of bootstrap replicates.
pub fn percentile_interval(replicates: &[f64], level: f64) -> Result<Interval> {
    check_level(level)?;
    if replicates.is_empty() {
        return Err(Error::InvalidArgument("no replicates".into()));
    }
    let mut v = replicates.to_vec();
    v.sort_by(f64::total_cmp);
    let a = (1.0 - level) / 2.0;
    Ok(Interval {
        lower: quantile_sorted(&v, a),
        upper: quantile_sorted(&v, 1.0 - a),
        level,
        method: IntervalMethod::Percentile,
    })
}

/// Jackknife acceleration `sum d^3 / (6 (sum d^2)^1.5)` with `d = mean - theta_i`.
/// Zero when the jackknife values do not vary.
pub fn acceleration(jackknife: &[f64]) -> f64 {
    if jackknife.is_empty() {
        return 0.0;
    }
    let m = jackknife.iter().sum::<f64>() / jackknife.len() as f64;
    let (s2, s3) = jackknife.iter().fold((0.0, 0.0), |(s2, s3), t| {
        let d = m - t;
        (s2 + d * d, s3 + d * d * d)
    });
    if s2 <= 0.0 {
        0.0
    } else {
        s3 / (6.0 * s2.powf(1.5))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BcaDetails {
    pub interval: Interval,
    pub z0: f64,
    pub acceleration: f64,
    /// Adjusted lower and upper quantile levels.
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    /// All replicates fell on one side of the original; `z0` was clamped.
    pub clamped: bool,
}

/// BCa interval with an explicit acceleration constant.
pub fn bca_with_acceleration(
    replicates: &[f64],
    original: f64,
    accel: f64,
    level: f64,
) -> Result<BcaDetails> {
    check_level(level)?;
    let mut v = replicates.to_vec();
    v.sort_by(f64::total_cmp);
    if v.len() < 2 || v[0] == v[v.len() - 1] {
        return Err(Error::Degenerate(
            "bootstrap replicates need at least two distinct values".into(),
        ));
    }
    let b = v.len() as f64;
    let below = v.iter().filter(|&&t| t < original).count() as f64;
    let clamped = below == 0.0 || below == b;
    let frac = (below / b).clamp(0.5 / b, 1.0 - 0.5 / b);
    let z0 = normal::quantile(frac);
    let adjust = |p: f64| {
        let z = normal::quantile(p);
        let w = z0 + z;
        normal::cdf(z0 + w / (1.0 - accel * w))
    };
    let a = (1.0 - level) / 2.0;
    let alpha_lower = adjust(a);
    let alpha_upper = adjust(1.0 - a);
    Ok(BcaDetails {
        interval: Interval {
            lower: quantile_sorted(&v, alpha_lower),
            upper: quantile_sorted(&v, alpha_upper),
            level,
            method: IntervalMethod::Bca,
        },
        z0,
        acceleration: accel,
        alpha_lower,
        alpha_upper,
        clamped,
    })
}

/// Bias-corrected and accelerated bootstrap interval. The acceleration is
/// estimated from leave-one-out `jackknife` estimates.
pub fn bca_interval(replicates: &[f64], jackknife: &[f64], original: f64, level: f64) -> Result<Interval> {
    Ok(bca_details(replicates, jackknife, original, level)?.interval)
}

pub fn bca_details(replicates: &[f64], jackknife: &[f64], original: f64, level: f64) -> Result<BcaDetails> {
    bca_with_acceleration(replicates, original, acceleration(jackknife), level)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOptions {
    pub level: f64,
    /// Estimate the BCa acceleration by leave-one-out refits; otherwise `a = 0`.
    pub jackknife: bool,
    pub fit: FitOptions,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            jackknife: true,
            fit: FitOptions {
                n_starts: 3,
                covariance: false,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub b: usize,
    pub seed: u64,
    pub parameter_names: Vec<String>,
    pub original: Vec<f64>,
    /// Successful replicate estimates, one row per replicate (natural layout).
    pub estimates: Vec<Vec<f64>>,
    pub failed_replicates: usize,
    pub bias: Vec<f64>,
    /// BCa interval per parameter; `None` when the replicates are degenerate.
    pub intervals: Vec<Option<Interval>>,
    pub z0: Vec<f64>,
    pub acceleration: Vec<f64>,
    /// Leave-one-out estimates used for the acceleration (rows = observations).
    pub jackknife: Vec<Vec<f64>>,
    /// More than 20% of replicates failed.
    pub unreliable: bool,
}

impl BootstrapReport {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.estimates.iter().map(|r| r[k]).collect()
    }
}

/// Refits from the original estimate, then falls back to a full multi-start.
fn refit(data: &OrdinalDataset, fitted: &FitResult, opts: &FitOptions, seed: u64) -> Option<Vec<f64>> {
    check_identified(data).ok()?;
    let single = FitOptions {
        n_starts: 1,
        covariance: false,
        ..*opts
    };
    match fit_with_starts(data, std::slice::from_ref(&fitted.params), &single) {
        Ok(f) if f.converged => return Some(f.params.to_natural()),
        _ => {}
    }
    let multi = FitOptions {
        seed,
        covariance: false,
        ..*opts
    };
    match fit(data, &multi) {
        Ok(f) if f.converged => Some(f.params.to_natural()),
        _ => None,
    }
}

fn map_indexed<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Parametric bootstrap: `b` datasets drawn from the fitted model, each
/// refitted. Replicate `r` uses the stream derived from `(seed, r)`, so the
/// report does not depend on the degree of parallelism.
pub fn parametric_bootstrap(
    data: &OrdinalDataset,
    fitted: &FitResult,
    b: usize,
    seed: u64,
    opts: &BootstrapOptions,
) -> Result<BootstrapReport> {
    check_level(opts.level)?;
    if b < 2 {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least 2 replicates, got {b}"
        )));
    }
    if !fitted.converged {
        return Err(Error::InvalidArgument(
            "bootstrap requires a converged fit".into(),
        ));
    }
    let cfg = *data.config();
    fitted.params.validate(&cfg)?;
    let n = data.n();

    let rows: Vec<Option<Vec<f64>>> = map_indexed(b, |r| {
        let sample = sample_replicate(&fitted.params, &cfg, n, seed, r as u64).ok()?;
        refit(&sample, fitted, &opts.fit, replicate_seed(seed ^ 0xb00, r as u64))
    });
    let estimates: Vec<Vec<f64>> = rows.into_iter().flatten().collect();
    let failed_replicates = b - estimates.len();

    let jackknife: Vec<Vec<f64>> = if opts.jackknife {
        map_indexed(n, |i| {
            refit(&data.without(i), fitted, &opts.fit, replicate_seed(seed ^ 0x1ac, i as u64))
        })
        .into_iter()
        .flatten()
        .collect()
    } else {
        Vec::new()
    };

    let original = fitted.params.to_natural();
    let k = original.len();
    let mut bias = Vec::with_capacity(k);
    let mut intervals = Vec::with_capacity(k);
    let mut z0 = Vec::with_capacity(k);
    let mut accel = Vec::with_capacity(k);
    for j in 0..k {
        let col: Vec<f64> = estimates.iter().map(|r| r[j]).collect();
        let mean = if col.is_empty() {
            f64::NAN
        } else {
            col.iter().sum::<f64>() / col.len() as f64
        };
        bias.push(mean - original[j]);
        let jk: Vec<f64> = jackknife.iter().map(|r| r[j]).collect();
        match bca_details(&col, &jk, original[j], opts.level) {
            Ok(d) => {
                intervals.push(Some(d.interval));
                z0.push(d.z0);
                accel.push(d.acceleration);
            }
            Err(_) => {
                intervals.push(None);
                z0.push(f64::NAN);
                accel.push(f64::NAN);
            }
        }
    }

    Ok(BootstrapReport {
        b,
        seed,
        parameter_names: cfg.param_names(),
        original,
        estimates,
        failed_replicates,
        bias,
        intervals,
        z0,
        acceleration: accel,
        jackknife,
        unreliable: failed_replicates as f64 > 0.2 * b as f64,
    })
}
