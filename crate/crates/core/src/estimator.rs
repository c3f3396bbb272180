//! Maximization of the Laplace-approximated log-likelihood and the sandwich
//! covariance of the estimator.
//!
//! The optimizer works on an unconstrained vector laid out as
//! `[thresholds.., loadings_x.., loadings_y.., atanh(rho)]`. Each threshold
//! sequence is stored as its first cut followed by the logs of the successive
//! increments, which keeps every sequence strictly increasing.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::laplace::{evaluate, observation_gradient_natural, SolverOptions};
use crate::model::{LatentPoint, ModelConfig, OrdinalDataset, ParameterSet, Thresholds};
use crate::optim::{minimize, BfgsOptions};

/// Box on the unconstrained coordinates during optimization.
pub const COORDINATE_BOUND: f64 = 50.0;

/// Loadings below this magnitude count as zero for the identification check.
pub const FLAT_LOADING: f64 = 1e-4;

/// Maps parameters to the unconstrained coordinates. No sign convention is
/// applied; the map is the inverse of [`from_unconstrained_raw`].
pub fn to_unconstrained(params: &ParameterSet) -> Vec<f64> {
    to_unconstrained_raw(params)
}

pub(crate) fn to_unconstrained_raw(params: &ParameterSet) -> Vec<f64> {
    let mut u = Vec::new();
    let mut push_set = |set: &[f64]| {
        u.push(set[0]);
        for w in set.windows(2) {
            u.push((w[1] - w[0]).ln());
        }
    };
    match &params.thresholds {
        Thresholds::Shared(a) => push_set(a),
        Thresholds::PerVariable(v) => v.iter().for_each(|a| push_set(a)),
    }
    u.extend_from_slice(&params.loadings_x);
    u.extend_from_slice(&params.loadings_y);
    u.push(params.rho.atanh());
    u
}

/// Inverse of [`to_unconstrained`] followed by the loading sign convention
/// (see [`ParameterSet::canonicalize`]).
pub fn from_unconstrained(u: &[f64], config: &ModelConfig) -> Result<ParameterSet> {
    let mut p = from_unconstrained_raw(config, u)?;
    p.canonicalize();
    Ok(p)
}

pub(crate) fn from_unconstrained_raw(config: &ModelConfig, u: &[f64]) -> Result<ParameterSet> {
    config.validate()?;
    if u.len() != config.n_params() {
        return Err(Error::InvalidParams(format!(
            "unconstrained vector has length {}, expected {}",
            u.len(),
            config.n_params()
        )));
    }
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("unconstrained coordinate {i}")));
    }
    let k = config.q - 1;
    let nt = config.n_thresholds();
    let mut natural = Vec::with_capacity(u.len());
    for chunk in u[..nt].chunks(k) {
        let mut a = chunk[0];
        natural.push(a);
        for &d in &chunk[1..] {
            a += d.exp();
            natural.push(a);
        }
    }
    natural.extend_from_slice(&u[nt..u.len() - 1]);
    natural.push(u[u.len() - 1].tanh());
    let p = ParameterSet::from_natural(config, &natural)?;
    p.validate(config)?;
    Ok(p)
}

/// Diagonal-block Jacobian `d natural / d unconstrained` applied transposed
/// to a natural-layout gradient.
pub(crate) fn natural_to_unconstrained_gradient(
    config: &ModelConfig,
    u: &[f64],
    g: &[f64],
) -> Vec<f64> {
    let k = config.q - 1;
    let nt = config.n_thresholds();
    let mut out = g.to_vec();
    for start in (0..nt).step_by(k) {
        // alpha_m = u_0 + sum_{j=1..m} exp(u_j)
        let mut tail = 0.0;
        for j in (0..k).rev() {
            tail += g[start + j];
            out[start + j] = if j == 0 {
                tail
            } else {
                tail * u[start + j].exp()
            };
        }
    }
    let last = u.len() - 1;
    let rho = u[last].tanh();
    out[last] = g[last] * (1.0 - rho * rho);
    out
}

/// Full Jacobian `d natural / d unconstrained`.
fn natural_jacobian(config: &ModelConfig, u: &[f64]) -> DMatrix<f64> {
    let n = u.len();
    let k = config.q - 1;
    let nt = config.n_thresholds();
    let mut jac = DMatrix::zeros(n, n);
    for start in (0..nt).step_by(k) {
        for m in 0..k {
            jac[(start + m, start)] = 1.0;
            for j in 1..=m {
                jac[(start + m, start + j)] = u[start + j].exp();
            }
        }
    }
    for i in nt..n - 1 {
        jac[(i, i)] = 1.0;
    }
    let rho = u[n - 1].tanh();
    jac[(n - 1, n - 1)] = 1.0 - rho * rho;
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Convergence threshold on the sup-norm of the gradient of the mean
    /// per-observation log-likelihood, on the unconstrained scale.
    pub outer_tolerance: f64,
    pub max_outer_iterations: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub solver: SolverOptions,
    /// Compute the sandwich covariance after fitting.
    pub covariance: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            outer_tolerance: 1e-6,
            max_outer_iterations: 500,
            n_starts: 3,
            seed: 0x5eed,
            solver: SolverOptions::default(),
            covariance: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    /// Sandwich covariance on the unconstrained scale.
    pub unconstrained: Vec<Vec<f64>>,
    /// Delta-method mapping to (thresholds, loadings, rho).
    pub constrained: Vec<Vec<f64>>,
    /// Inverse observed information on the constrained scale (no sandwich).
    pub inverse_hessian: Vec<Vec<f64>>,
    pub condition_number: f64,
}

impl CovarianceEstimate {
    pub fn standard_errors(&self) -> Vec<f64> {
        (0..self.constrained.len())
            .map(|i| self.constrained[i][i].max(0.0).sqrt())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub config: ModelConfig,
    pub params: ParameterSet,
    pub log_likelihood: f64,
    pub covariance: Option<CovarianceEstimate>,
    pub covariance_error: Option<String>,
    pub scores: Vec<LatentPoint>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    /// Sup-norm of the mean per-observation gradient at the estimate.
    pub gradient_norm: f64,
    /// False when one block's loadings all vanish, leaving rho unidentified.
    pub rho_identified: bool,
    /// Converged starts disagree on the optimum by more than the tolerance.
    pub multimodal: bool,
    pub starts: Vec<StartSummary>,
    /// Log-likelihood after each accepted optimizer step of the winning start.
    pub trace: Vec<f64>,
}

/// Checks the identification preconditions of [`fit`].
pub fn check_identified(data: &OrdinalDataset) -> Result<()> {
    let cfg = data.config();
    if data.n() < 2 {
        return Err(Error::InvalidData(format!(
            "need at least 2 observations, got {}",
            data.n()
        )));
    }
    let mut pooled = vec![false; cfg.q];
    for l in 0..cfg.n_vars() {
        let col = data.column(l);
        let mut seen = vec![false; cfg.q];
        col.iter().for_each(|&c| seen[c as usize] = true);
        if seen.iter().filter(|&&s| s).count() < 2 {
            return Err(Error::Unidentified {
                variable: l,
                reason: "column is constant".into(),
            });
        }
        if !cfg.shared_thresholds {
            if let Some(s) = seen.iter().position(|&s| !s) {
                return Err(Error::Unidentified {
                    variable: l,
                    reason: format!("category {} never observed", s + 1),
                });
            }
        }
        pooled.iter_mut().zip(&seen).for_each(|(p, s)| *p |= s);
    }
    if let Some(s) = pooled.iter().position(|&s| !s) {
        return Err(Error::Unidentified {
            variable: 0,
            reason: format!("category {} never observed in any variable", s + 1),
        });
    }
    Ok(())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// Spearman correlation between the X-block and Y-block mean scores.
pub(crate) fn block_mean_spearman(data: &OrdinalDataset) -> f64 {
    let p_x = data.config().p_x;
    let (mx, my): (Vec<f64>, Vec<f64>) = data
        .rows()
        .map(|r| {
            let x = r[..p_x].iter().map(|&c| c as f64).sum::<f64>() / p_x as f64;
            let y = r[p_x..].iter().map(|&c| c as f64).sum::<f64>() / (r.len() - p_x) as f64;
            (x, y)
        })
        .unzip();
    pearson(&ranks(&mx), &ranks(&my))
}

fn threshold_start(counts: &[usize], total: usize, loading: f64) -> Vec<f64> {
    // logistic-normal attenuation: marginal logit ~ alpha / sqrt(1 + 0.346 beta^2)
    let scale = (1.0 + 0.346 * loading * loading).sqrt();
    let mut cum = 0;
    let mut a: Vec<f64> = counts[..counts.len() - 1]
        .iter()
        .map(|&c| {
            cum += c;
            scale * logit((cum as f64 + 0.5) / (total as f64 + 1.0))
        })
        .collect();
    for i in 1..a.len() {
        if a[i] < a[i - 1] + 0.1 {
            a[i] = a[i - 1] + 0.1;
        }
    }
    a
}

/// Deterministic starting values; `start > 0` perturbs the loadings with
/// noise drawn from `(seed, start)`.
pub fn initial_params(data: &OrdinalDataset, seed: u64, start: usize) -> ParameterSet {
    let cfg = *data.config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(start as u64);
    let loadings: Vec<f64> = (0..cfg.n_vars())
        .map(|_| {
            if start == 0 {
                1.0
            } else {
                let z: f64 = StandardNormal.sample(&mut rng);
                (1.0 + 0.3 * z).max(0.2)
            }
        })
        .collect();
    let count = |vars: std::ops::Range<usize>| {
        let mut c = vec![0usize; cfg.q];
        for r in data.rows() {
            for &k in &r[vars.clone()] {
                c[k as usize] += 1;
            }
        }
        c
    };
    let thresholds = if cfg.shared_thresholds {
        Thresholds::Shared(threshold_start(
            &count(0..cfg.n_vars()),
            data.n() * cfg.n_vars(),
            1.0,
        ))
    } else {
        Thresholds::PerVariable(
            (0..cfg.n_vars())
                .map(|l| threshold_start(&count(l..l + 1), data.n(), loadings[l]))
                .collect(),
        )
    };
    let rho = block_mean_spearman(data).clamp(-0.8, 0.8);
    ParameterSet {
        thresholds,
        loadings_x: loadings[..cfg.p_x].to_vec(),
        loadings_y: loadings[cfg.p_x..].to_vec(),
        rho,
    }
}

struct StartOutcome {
    params: ParameterSet,
    log_likelihood: f64,
    converged: bool,
    iterations: usize,
    evaluations: usize,
    gradient_norm: f64,
    trace: Vec<f64>,
    message: String,
}

fn run_start(data: &OrdinalDataset, start: &ParameterSet, opts: &FitOptions) -> Result<StartOutcome> {
    let cfg = *data.config();
    let warm: RefCell<Vec<LatentPoint>> = RefCell::new(vec![LatentPoint::ORIGIN; data.n()]);
    // the mean keeps the stopping rule independent of n: at large n the
    // summed gradient cannot be driven below rounding of the summed value
    let n = data.n() as f64;
    let objective = |u: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = from_unconstrained_raw(&cfg, u).ok()?;
        let ev = {
            let w = warm.borrow();
            evaluate(data, &p, &opts.solver, Some(&w), true).ok()?
        };
        *warm.borrow_mut() = ev.solutions.iter().map(|s| s.f_hat).collect();
        let g = natural_to_unconstrained_gradient(&cfg, u, &ev.gradient_natural()?);
        Some((-ev.value / n, g.into_iter().map(|v| -v / n).collect()))
    };
    let x0 = to_unconstrained_raw(start);
    let bfgs = BfgsOptions {
        grad_tol: opts.outer_tolerance,
        max_iterations: opts.max_outer_iterations,
        bound: COORDINATE_BOUND,
    };
    let r = minimize(objective, &x0, &bfgs);
    if !r.value.is_finite() {
        return Err(Error::NotConverged(r.message));
    }
    let at_bound = r.x.iter().any(|v| v.abs() >= COORDINATE_BOUND - 1e-6);
    let mut params = from_unconstrained_raw(&cfg, &r.x)?;
    params.canonicalize();
    let gradient_norm = r.gradient.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    let message = if at_bound {
        "parameter reached the coordinate bound".to_string()
    } else {
        r.message
    };
    Ok(StartOutcome {
        params,
        log_likelihood: -r.value * n,
        converged: r.converged && !at_bound,
        iterations: r.iterations,
        evaluations: r.evaluations,
        gradient_norm,
        trace: r.trace.iter().map(|v| -v * n).collect(),
        message,
    })
}

fn map_starts<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
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

/// Fits the model by multi-start quasi-Newton ascent on the approximate
/// log-likelihood and returns the best converged optimum.
pub fn fit(data: &OrdinalDataset, opts: &FitOptions) -> Result<FitResult> {
    check_identified(data)?;
    let n_starts = opts.n_starts.max(1);
    let starts: Vec<ParameterSet> = (0..n_starts)
        .map(|s| initial_params(data, opts.seed, s))
        .collect();
    fit_with_starts(data, &starts, opts)
}

/// Fits from caller-supplied starting values.
pub fn fit_with_starts(
    data: &OrdinalDataset,
    starts: &[ParameterSet],
    opts: &FitOptions,
) -> Result<FitResult> {
    check_identified(data)?;
    if opts.outer_tolerance <= 0.0 || opts.max_outer_iterations == 0 {
        return Err(Error::InvalidArgument(
            "outer tolerance must be positive and iterations at least 1".into(),
        ));
    }
    for s in starts {
        s.validate(data.config())?;
    }
    let outcomes = map_starts(starts.len(), |i| run_start(data, &starts[i], opts));
    let summaries: Vec<StartSummary> = outcomes
        .iter()
        .map(|o| match o {
            Ok(o) => StartSummary {
                log_likelihood: o.log_likelihood,
                converged: o.converged,
                iterations: o.iterations,
                message: o.message.clone(),
            },
            Err(e) => StartSummary {
                log_likelihood: f64::NAN,
                converged: false,
                iterations: 0,
                message: e.to_string(),
            },
        })
        .collect();
    let ok: Vec<&StartOutcome> = outcomes.iter().filter_map(|o| o.as_ref().ok()).collect();
    let best = ok
        .iter()
        .filter(|o| o.converged)
        .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        .or_else(|| {
            ok.iter()
                .max_by(|a, b| a.log_likelihood.total_cmp(&b.log_likelihood))
        })
        .copied()
        .ok_or_else(|| Error::NotConverged("no start could be evaluated".into()))?;

    let scale = best.log_likelihood.abs().max(1.0);
    let multimodal = ok
        .iter()
        .filter(|o| o.converged)
        .any(|o| (o.log_likelihood - best.log_likelihood).abs() > opts.outer_tolerance * scale);

    let final_eval = evaluate(data, &best.params, &opts.solver, None, false)?;
    let rho_identified = [&best.params.loadings_x, &best.params.loadings_y]
        .iter()
        .all(|b| b.iter().any(|v| v.abs() >= FLAT_LOADING));

    let (covariance, covariance_error) = if opts.covariance && best.converged {
        match sandwich_covariance(data, &best.params, &opts.solver) {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, None)
    };

    Ok(FitResult {
        config: *data.config(),
        params: best.params.clone(),
        log_likelihood: final_eval.value,
        covariance,
        covariance_error,
        scores: final_eval.solutions.iter().map(|s| s.f_hat).collect(),
        converged: best.converged,
        iterations: best.iterations,
        evaluations: outcomes
            .iter()
            .filter_map(|o| o.as_ref().ok())
            .map(|o| o.evaluations)
            .sum(),
        gradient_norm: best.gradient_norm,
        rho_identified,
        multimodal,
        starts: summaries,
        trace: best.trace.clone(),
    })
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m = (&*m + t) * 0.5;
}

/// Sandwich covariance `A^-1 B A^-1` where `A` is the negative Hessian of the
/// approximate log-likelihood (central differences of the analytic gradient)
/// and `B` the sum of outer products of per-observation gradients. Both are on
/// the unconstrained scale; the result is also mapped to the natural scale.
pub fn sandwich_covariance(
    data: &OrdinalDataset,
    params: &ParameterSet,
    solver: &SolverOptions,
) -> Result<CovarianceEstimate> {
    let cfg = *data.config();
    params.validate(&cfg)?;
    let u = to_unconstrained_raw(params);
    let np = u.len();

    let grad_at = |u: &[f64]| -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let p = from_unconstrained_raw(&cfg, u)?;
        let ev = evaluate(data, &p, solver, None, true)?;
        let per_obs: Vec<Vec<f64>> = ev
            .gradients
            .expect("requested")
            .iter()
            .map(|g| natural_to_unconstrained_gradient(&cfg, u, g))
            .collect();
        let mut total = vec![0.0; np];
        for g in &per_obs {
            total.iter_mut().zip(g).for_each(|(t, v)| *t += v);
        }
        Ok((total, per_obs))
    };

    let (_, per_obs) = grad_at(&u)?;
    let mut meat = DMatrix::zeros(np, np);
    for g in &per_obs {
        let v = DMatrix::from_column_slice(np, 1, g);
        meat += &v * v.transpose();
    }

    let mut neg_hessian = DMatrix::zeros(np, np);
    for j in 0..np {
        let h = 1e-4 * u[j].abs().max(1.0);
        let mut up = u.clone();
        let mut dn = u.clone();
        up[j] += h;
        dn[j] -= h;
        let (gp, _) = grad_at(&up)?;
        let (gm, _) = grad_at(&dn)?;
        for i in 0..np {
            neg_hessian[(i, j)] = -(gp[i] - gm[i]) / (2.0 * h);
        }
    }
    symmetrize(&mut neg_hessian);

    let eig = SymmetricEigen::new(neg_hessian.clone());
    let max = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > 0.0) || max / min > 1e12 {
        return Err(Error::Singular {
            condition: if min > 0.0 { max / min } else { f64::INFINITY },
        });
    }
    let inv_vals = eig.eigenvalues.map(|v| 1.0 / v);
    let a_inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();

    let mut sandwich = &a_inv * &meat * &a_inv;
    symmetrize(&mut sandwich);
    let jac = natural_jacobian(&cfg, &u);
    let mut constrained = &jac * &sandwich * jac.transpose();
    symmetrize(&mut constrained);
    let mut inv_hess = &jac * &a_inv * jac.transpose();
    symmetrize(&mut inv_hess);

    Ok(CovarianceEstimate {
        unconstrained: to_rows(&sandwich),
        constrained: to_rows(&constrained),
        inverse_hessian: to_rows(&inv_hess),
        condition_number: max / min,
    })
}

/// Per-observation gradients in the unconstrained layout (rows = observations).
pub fn observation_gradients(
    data: &OrdinalDataset,
    params: &ParameterSet,
    solver: &SolverOptions,
) -> Result<Vec<Vec<f64>>> {
    let cfg = *data.config();
    let u = to_unconstrained_raw(params);
    let ev = evaluate(data, params, solver, None, false)?;
    Ok(data
        .rows()
        .zip(&ev.solutions)
        .map(|(r, s)| natural_to_unconstrained_gradient(&cfg, &u, &observation_gradient_natural(r, params, s)))
        .collect())
}
