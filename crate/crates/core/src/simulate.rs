//! Sampling from the fitted or true model and the Monte Carlo harness.
//!
//! Every observation draws from its own ChaCha stream addressed by
//! `(seed, replicate, observation)`; within the stream the two latent normals
//! come first, then one uniform per variable in column order. Datasets and
//! Monte Carlo reports therefore do not depend on execution order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit, FitOptions};
use crate::inference::{fisher_interval, FisherOptions};
use crate::model::{linear_predictor, logistic, LatentPoint, ModelConfig, OrdinalDataset, ParameterSet, Thresholds};
use crate::stats::{quantile_sorted, Summary};

pub const S1_THRESHOLDS: [f64; 4] = [-4.60, -2.94, 0.85, 4.60];
pub const S2_THRESHOLDS: [f64; 4] = [-2.19, -1.39, 1.39, 2.19];
pub const SCENARIO_LOADINGS_X: [f64; 5] = [1.60, 1.75, 1.70, 1.30, 1.50];
pub const SCENARIO_LOADINGS_Y: [f64; 5] = [5.00, 9.00, 9.00, 5.00, 6.00];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub n: usize,
    pub n_reps: usize,
}

/// Built-in simulation designs: `"S1"` or `"S2"` thresholds with the shared
/// five-plus-five loading pattern, `n = 30` and 500 replicates.
pub fn builtin_scenario(name: &str, rho: f64) -> Result<Scenario> {
    let thresholds = match name.to_ascii_uppercase().as_str() {
        "S1" => S1_THRESHOLDS,
        "S2" => S2_THRESHOLDS,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "unknown scenario {name:?} (expected S1 or S2)"
            )))
        }
    };
    let config = ModelConfig::new(5, 5, 5, true)?;
    let params = ParameterSet {
        thresholds: Thresholds::Shared(thresholds.to_vec()),
        loadings_x: SCENARIO_LOADINGS_X.to_vec(),
        loadings_y: SCENARIO_LOADINGS_Y.to_vec(),
        rho,
    };
    params.validate(&config)?;
    Ok(Scenario {
        name: name.to_ascii_uppercase(),
        config,
        params,
        n: 30,
        n_reps: 500,
    })
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of replicate `replicate` derived from a master seed.
pub fn replicate_seed(seed: u64, replicate: u64) -> u64 {
    mix(mix(seed) ^ replicate.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

/// Draws `n` observations from the model.
pub fn sample_dataset(
    params: &ParameterSet,
    config: &ModelConfig,
    n: usize,
    seed: u64,
) -> Result<OrdinalDataset> {
    params.validate(config)?;
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let base = mix(seed);
    let q = config.q;
    let mut cells = Vec::with_capacity(n * config.n_vars());
    let scale = (1.0 - params.rho * params.rho).sqrt();
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(base);
        rng.set_stream(i as u64);
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let f = LatentPoint::new(z1, params.rho * z1 + scale * z2);
        for l in 0..config.n_vars() {
            let u: f64 = rng.random();
            let eta = linear_predictor(params, l, &f);
            let cuts = params.thresholds.for_variable(l);
            let k = cuts
                .iter()
                .position(|a| u < logistic(a + eta))
                .unwrap_or(q - 1);
            cells.push(k as u8);
        }
    }
    Ok(OrdinalDataset::from_zero_based(*config, cells))
}

/// Samples replicate `replicate` of a design with master seed `seed`.
pub fn sample_replicate(
    params: &ParameterSet,
    config: &ModelConfig,
    n: usize,
    seed: u64,
    replicate: u64,
) -> Result<OrdinalDataset> {
    sample_dataset(params, config, n, replicate_seed(seed, replicate))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub converged: bool,
    pub error: Option<String>,
    /// Natural-layout estimates; empty when the fit failed.
    pub estimates: Vec<f64>,
    pub fisher_lower: Option<f64>,
    pub fisher_upper: Option<f64>,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSummary {
    pub parameter: String,
    pub truth: f64,
    /// Summary of `estimate - truth` over successful replicates.
    pub bias: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub level: f64,
    pub parameter_names: Vec<String>,
    pub replicates: Vec<ReplicateRecord>,
    pub rho_hat: Vec<f64>,
    pub bias: Vec<BiasSummary>,
    pub coverage: f64,
    pub failures: usize,
    /// Set when more than 5% of replicates failed.
    pub suspect: bool,
}

impl McReport {
    pub fn rho_bias(&self) -> &BiasSummary {
        self.bias.last().expect("rho is always summarized")
    }

    /// One row per successful replicate and parameter:
    /// `replicate,parameter,truth,estimate,bias`.
    pub fn replicates_csv(&self) -> String {
        let truth = self.scenario.params.to_natural();
        let mut out = String::from("replicate,parameter,truth,estimate,bias\n");
        for r in self.replicates.iter().filter(|r| r.error.is_none()) {
            for ((name, t), e) in self.parameter_names.iter().zip(&truth).zip(&r.estimates) {
                out.push_str(&format!("{},{},{:?},{:?},{:?}\n", r.replicate, name, t, e, e - t));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub fit: FitOptions,
    pub level: f64,
    pub fisher: FisherOptions,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            fit: FitOptions {
                covariance: false,
                ..FitOptions::default()
            },
            level: 0.95,
            fisher: FisherOptions::default(),
        }
    }
}

fn run_replicate(scenario: &Scenario, seed: u64, r: usize, opts: &McOptions) -> ReplicateRecord {
    let failed = |e: String| ReplicateRecord {
        replicate: r,
        converged: false,
        error: Some(e),
        estimates: Vec::new(),
        fisher_lower: None,
        fisher_upper: None,
        covered: None,
    };
    let data = match sample_replicate(&scenario.params, &scenario.config, scenario.n, seed, r as u64) {
        Ok(d) => d,
        Err(e) => return failed(e.to_string()),
    };
    let mut fit_opts = opts.fit;
    fit_opts.seed = replicate_seed(seed ^ 0xf17, r as u64);
    let fitted = match fit(&data, &fit_opts) {
        Ok(f) if f.converged => f,
        Ok(f) => return failed(format!("not converged (gradient {:.3e})", f.gradient_norm)),
        Err(e) => return failed(e.to_string()),
    };
    let rho_hat = fitted.params.rho;
    let ci = fisher_interval(rho_hat, scenario.n, opts.level, &opts.fisher).ok();
    let truth = scenario.params.rho;
    ReplicateRecord {
        replicate: r,
        converged: true,
        error: None,
        estimates: fitted.params.to_natural(),
        fisher_lower: ci.map(|c| c.lower),
        fisher_upper: ci.map(|c| c.upper),
        covered: ci.map(|c| c.lower <= truth && truth <= c.upper),
    }
}

/// Runs `scenario.n_reps` replicates of sample-then-fit with default options.
pub fn run_monte_carlo(scenario: &Scenario, seed: u64) -> Result<McReport> {
    run_monte_carlo_with(scenario, seed, &McOptions::default())
}

pub fn run_monte_carlo_with(scenario: &Scenario, seed: u64, opts: &McOptions) -> Result<McReport> {
    scenario.params.validate(&scenario.config)?;
    if scenario.n_reps == 0 || scenario.n < 4 {
        return Err(Error::InvalidArgument(
            "Monte Carlo needs at least one replicate and n >= 4".into(),
        ));
    }
    let run = |r: usize| run_replicate(scenario, seed, r, opts);
    #[cfg(feature = "parallel")]
    let replicates: Vec<ReplicateRecord> = {
        use rayon::prelude::*;
        (0..scenario.n_reps).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let replicates: Vec<ReplicateRecord> = (0..scenario.n_reps).map(run).collect();

    let names = scenario.config.param_names();
    let truth = scenario.params.to_natural();
    let ok: Vec<&ReplicateRecord> = replicates.iter().filter(|r| r.error.is_none()).collect();
    let failures = replicates.len() - ok.len();
    let bias = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut b: Vec<f64> = ok.iter().map(|r| r.estimates[k] - truth[k]).collect();
            b.sort_by(f64::total_cmp);
            BiasSummary {
                parameter: name.clone(),
                truth: truth[k],
                bias: Summary::from_sorted(&b),
            }
        })
        .collect();
    let covered: Vec<bool> = ok.iter().filter_map(|r| r.covered).collect();
    let coverage = if covered.is_empty() {
        f64::NAN
    } else {
        covered.iter().filter(|&&c| c).count() as f64 / covered.len() as f64
    };
    Ok(McReport {
        scenario: scenario.clone(),
        seed,
        level: opts.level,
        parameter_names: names,
        rho_hat: ok.iter().map(|r| *r.estimates.last().unwrap()).collect(),
        replicates,
        bias,
        coverage,
        failures,
        suspect: failures as f64 > 0.05 * scenario.n_reps as f64,
    })
}

/// Median of a sample (used in tests and reports).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}
