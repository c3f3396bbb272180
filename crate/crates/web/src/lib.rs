//! Browser bindings for three interactive views: category probability
//! curves, simulate-and-fit with a Fisher interval, and the Fisher interval
//! as a function of the estimate and sample size.

use ordlatent::estimator::{fit, FitOptions};
use ordlatent::inference::{fisher_interval, FisherOptions};
use ordlatent::model::{category_prob, LatentPoint, ModelConfig, ParameterSet, Thresholds};
use ordlatent::simulate::{builtin_scenario, sample_dataset};
use wasm_bindgen::prelude::*;

/// Category probabilities of one variable on a grid of factor values.
///
/// Returns `points` rows of `[f, p_1, ..., p_q]`, flattened.
pub fn category_curve_rows(
    thresholds: &[f64],
    loading: f64,
    f_min: f64,
    f_max: f64,
    points: usize,
) -> ordlatent::Result<Vec<f64>> {
    let q = thresholds.len() + 1;
    let config = ModelConfig::new(1, 1, q, true)?;
    let params = ParameterSet {
        thresholds: Thresholds::Shared(thresholds.to_vec()),
        loadings_x: vec![loading],
        loadings_y: vec![0.0],
        rho: 0.0,
    };
    params.validate(&config)?;
    let points = points.max(2);
    let mut out = Vec::with_capacity(points * (q + 1));
    for k in 0..points {
        let f = f_min + (f_max - f_min) * k as f64 / (points - 1) as f64;
        out.push(f);
        for s in 1..=q {
            out.push(category_prob(0, s, &LatentPoint::new(f, 0.0), &params)?);
        }
    }
    Ok(out)
}

/// Outcome of one simulate-and-fit round.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct FitSummary {
    pub rho_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    scores: Vec<f64>,
}

#[wasm_bindgen]
impl FitSummary {
    /// Latent scores as `[f_x, f_y]` pairs, flattened.
    pub fn scores(&self) -> Vec<f64> {
        self.scores.clone()
    }
}

/// Samples a panel from a built-in design and fits it.
pub fn simulate_and_fit_summary(
    scenario: &str,
    rho: f64,
    n: usize,
    seed: u64,
    level: f64,
) -> ordlatent::Result<FitSummary> {
    let design = builtin_scenario(scenario, rho)?;
    let data = sample_dataset(&design.params, &design.config, n, seed)?;
    let opts = FitOptions {
        covariance: false,
        seed,
        ..FitOptions::default()
    };
    let fitted = fit(&data, &opts)?;
    let rho_hat = fitted.params.rho;
    let ci = fisher_interval(rho_hat, n, level, &FisherOptions::default())?;
    Ok(FitSummary {
        rho_hat,
        lower: ci.lower,
        upper: ci.upper,
        log_likelihood: fitted.log_likelihood,
        converged: fitted.converged,
        iterations: fitted.iterations,
        scores: fitted.scores.iter().flat_map(|f| [f.f_x, f.f_y]).collect(),
    })
}

/// Fisher interval endpoints `[lower, upper]`.
pub fn fisher_endpoints(rho_hat: f64, n: usize, level: f64, mean_correction: bool) -> ordlatent::Result<[f64; 2]> {
    let ci = fisher_interval(rho_hat, n, level, &FisherOptions { mean_correction })?;
    Ok([ci.lower, ci.upper])
}

fn js_error(e: ordlatent::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = categoryCurves)]
pub fn category_curves(
    thresholds: Vec<f64>,
    loading: f64,
    f_min: f64,
    f_max: f64,
    points: usize,
) -> Result<Vec<f64>, JsError> {
    category_curve_rows(&thresholds, loading, f_min, f_max, points).map_err(js_error)
}

#[wasm_bindgen(js_name = simulateAndFit)]
pub fn simulate_and_fit(scenario: &str, rho: f64, n: usize, seed: u32, level: f64) -> Result<FitSummary, JsError> {
    simulate_and_fit_summary(scenario, rho, n, u64::from(seed), level).map_err(js_error)
}

#[wasm_bindgen(js_name = fisherInterval)]
pub fn fisher(rho_hat: f64, n: usize, level: f64, mean_correction: bool) -> Result<Vec<f64>, JsError> {
    fisher_endpoints(rho_hat, n, level, mean_correction)
        .map(|e| e.to_vec())
        .map_err(js_error)
}
