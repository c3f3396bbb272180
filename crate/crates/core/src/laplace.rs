//! Laplace approximation of the marginal likelihood.
//!
//! For one observation the integrand exponent is
//! `h(F) = sum_l log P(z_l | F) - F' R^-1 F / 2`. Its maximizer `F_hat` is the
//! latent score, and the correction matrix is `Gamma = -H(F_hat)`, which for
//! this model is `R^-1 + diag(D_x, D_y)` with `D_b = -sum_{l in b} beta_l^2 *
//! d2 log P / d eta^2`. Because `log P` is strictly concave in the linear
//! predictor, `h` is strictly concave and the maximizer is unique.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::estimator::{natural_to_unconstrained_gradient, to_unconstrained_raw};
use crate::model::{
    conditional_log_density_unchecked, validate_record, LatentPoint, LinkTerms, OrdinalDataset,
    ParameterSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Bound on the sup-norm of the stationarity residual `dh/dF`, relative
    /// to `1 +` the magnitude of the terms it is computed from.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Relaxation weight of the fixed-point update, in (0, 1].
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 200,
            damping: 1.0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) || self.max_iterations == 0 {
            return Err(Error::InvalidArgument(
                "solver tolerance must be positive and max_iterations at least 1".into(),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentSolution {
    pub f_hat: LatentPoint,
    pub gamma: [[f64; 2]; 2],
    pub iterations: usize,
    pub converged: bool,
    pub residual_norm: f64,
}

impl LatentSolution {
    pub fn log_det_gamma(&self) -> f64 {
        let g = &self.gamma;
        (g[0][0] * g[1][1] - g[0][1] * g[1][0]).ln()
    }
}

/// Gradient of the conditional log-density in `F` and the curvature terms `D`.
struct LocalTerms {
    log_g: f64,
    score: [f64; 2],
    curvature: [f64; 2],
}

fn local_terms(record: &[u8], f: &LatentPoint, params: &ParameterSet) -> LocalTerms {
    let fa = f.as_array();
    let p_x = params.p_x();
    let mut out = LocalTerms {
        log_g: 0.0,
        score: [0.0; 2],
        curvature: [0.0; 2],
    };
    for (l, &k) in record.iter().enumerate() {
        let b = usize::from(l >= p_x);
        let beta = params.loading(l);
        let t = LinkTerms::new(params.thresholds.for_variable(l), k as usize, beta * fa[b]);
        out.log_g += t.log_p;
        out.score[b] += beta * t.d1;
        out.curvature[b] -= beta * beta * t.d2;
    }
    out
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

fn quad_form(m: &[[f64; 2]; 2], v: [f64; 2]) -> f64 {
    let mv = mat_vec(m, v);
    v[0] * mv[0] + v[1] * mv[1]
}

fn gamma_from(r_inv: &[[f64; 2]; 2], curvature: [f64; 2]) -> [[f64; 2]; 2] {
    [
        [r_inv[0][0] + curvature[0], r_inv[0][1]],
        [r_inv[1][0], r_inv[1][1] + curvature[1]],
    ]
}

/// `log det Gamma` in a closed form free of cancellation:
/// `det Gamma = (1 + D_x + D_y + (1 - rho^2) D_x D_y) / (1 - rho^2)`.
pub(crate) fn log_det_gamma(rho: f64, curvature: [f64; 2]) -> f64 {
    let one_minus = 1.0 - rho * rho;
    let [dx, dy] = curvature;
    (1.0 + dx + dy + one_minus * dx * dy).ln() - one_minus.ln()
}

fn h_value(record: &[u8], f: &LatentPoint, params: &ParameterSet, r_inv: &[[f64; 2]; 2]) -> f64 {
    conditional_log_density_unchecked(record, f, params) - 0.5 * quad_form(r_inv, f.as_array())
}

fn residual_at(record: &[u8], f: &LatentPoint, params: &ParameterSet, r_inv: &[[f64; 2]; 2]) -> f64 {
    let t = local_terms(record, f, params);
    let r_f = mat_vec(r_inv, f.as_array());
    (t.score[0] - r_f[0]).abs().max((t.score[1] - r_f[1]).abs())
}

/// Solves the latent-score equation `F = R * dlogg/dF` for one 0-based record,
/// starting from the origin.
pub fn solve_latent_scores(
    record: &[u8],
    params: &ParameterSet,
    opts: &SolverOptions,
) -> Result<LatentSolution> {
    solve_latent_scores_from(record, params, opts, LatentPoint::ORIGIN)
}

/// As [`solve_latent_scores`], warm-started from `start`.
pub fn solve_latent_scores_from(
    record: &[u8],
    params: &ParameterSet,
    opts: &SolverOptions,
    start: LatentPoint,
) -> Result<LatentSolution> {
    validate_record(record, params)?;
    opts.validate()?;
    let sol = solve_unchecked(record, params, opts, start)?;
    if !sol.converged {
        return Err(Error::InnerSolve {
            observation: 0,
            reason: format!(
                "no convergence after {} iterations (residual {:.3e})",
                sol.iterations, sol.residual_norm
            ),
        });
    }
    Ok(sol)
}

#[derive(PartialEq)]
enum Mode {
    FixedPoint,
    Newton,
}

/// Damped fixed-point iteration on the score equation, switching to a
/// backtracking Newton ascent on `h` once the residual stops halving at
/// every step. Returns a solution with `converged == false` instead of
/// an error when the iteration budget runs out.
pub(crate) fn solve_unchecked(
    record: &[u8],
    params: &ParameterSet,
    opts: &SolverOptions,
    start: LatentPoint,
) -> Result<LatentSolution> {
    let r_inv = params.r_inverse();
    let rho = params.rho;
    let r = [[1.0, rho], [rho, 1.0]];
    let mut f = if start.is_finite() {
        start
    } else {
        LatentPoint::ORIGIN
    };
    let mut mode = Mode::FixedPoint;
    let mut prev: Option<(LatentPoint, f64)> = None;
    let mut iterations = 0;

    loop {
        let t = local_terms(record, &f, params);
        let r_f = mat_vec(&r_inv, f.as_array());
        let grad = [t.score[0] - r_f[0], t.score[1] - r_f[1]];
        let residual = grad[0].abs().max(grad[1].abs());
        // the residual is a difference of two terms that grow without bound
        // as |rho| -> 1, so stationarity is judged relative to their size
        let size = |b: usize| {
            t.score[b].abs() + (r_inv[b][0] * f.f_x).abs() + (r_inv[b][1] * f.f_y).abs()
        };
        let scale = 1.0 + size(0).max(size(1));
        let tolerance = opts.tolerance * scale;
        if !residual.is_finite() || !t.log_g.is_finite() {
            return Err(Error::NonFinite(format!(
                "latent score iteration produced a non-finite value at F = ({}, {})",
                f.f_x, f.f_y
            )));
        }
        if residual <= tolerance {
            return Ok(LatentSolution {
                f_hat: f,
                gamma: gamma_from(&r_inv, t.curvature),
                iterations,
                converged: true,
                residual_norm: residual,
            });
        }
        if iterations >= opts.max_iterations {
            return Ok(LatentSolution {
                f_hat: f,
                gamma: gamma_from(&r_inv, t.curvature),
                iterations,
                converged: false,
                residual_norm: residual,
            });
        }
        iterations += 1;

        if mode == Mode::FixedPoint {
            if let Some((prev_f, prev_res)) = prev {
                if residual > 0.5 * prev_res {
                    // stalled or diverging: fall back to Newton from the better point
                    mode = Mode::Newton;
                    if residual > prev_res {
                        f = prev_f;
                        continue;
                    }
                }
            }
        }

        match mode {
            Mode::FixedPoint => {
                prev = Some((f, residual));
                let target = mat_vec(&r, t.score);
                let d = opts.damping;
                f = LatentPoint::new(
                    (1.0 - d) * f.f_x + d * target[0],
                    (1.0 - d) * f.f_y + d * target[1],
                );
            }
            Mode::Newton => {
                let gamma = gamma_from(&r_inv, t.curvature);
                let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
                let step = [
                    (gamma[1][1] * grad[0] - gamma[0][1] * grad[1]) / det,
                    (gamma[0][0] * grad[1] - gamma[1][0] * grad[0]) / det,
                ];
                let slope = grad[0] * step[0] + grad[1] * step[1];
                let h0 = t.log_g - 0.5 * quad_form(&r_inv, f.as_array());
                // near the mode the gain in h drops below its rounding error;
                // a step that keeps h within rounding and shrinks the residual
                // is then accepted as well
                let h_noise = 1e-13 * (1.0 + h0.abs());
                let mut alpha = 1.0;
                let mut next = f;
                for _ in 0..60 {
                    next = LatentPoint::new(f.f_x + alpha * step[0], f.f_y + alpha * step[1]);
                    let h1 = h_value(record, &next, params, &r_inv);
                    if h1 >= h0 + 1e-4 * alpha * slope
                        || (h1 >= h0 - h_noise && residual_at(record, &next, params, &r_inv) < residual)
                    {
                        break;
                    }
                    alpha *= 0.5;
                }
                if next == f {
                    // no representable progress: the residual is at rounding level
                    return Ok(LatentSolution {
                        f_hat: f,
                        gamma,
                        iterations,
                        converged: residual <= tolerance,
                        residual_norm: residual,
                    });
                }
                f = next;
            }
        }
    }
}

/// Negative Hessian of `h` at `f_hat`: `R^-1` plus the diagonal curvature of
/// the conditional log-density. Fails if the result is not positive definite.
pub fn correction_matrix(
    record: &[u8],
    f_hat: &LatentPoint,
    params: &ParameterSet,
) -> Result<[[f64; 2]; 2]> {
    validate_record(record, params)?;
    let t = local_terms(record, f_hat, params);
    let g = gamma_from(&params.r_inverse(), t.curvature);
    let det = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if !(g[0][0] > 0.0 && det > 0.0) {
        return Err(Error::InnerSolve {
            observation: 0,
            reason: "correction matrix is not positive definite".into(),
        });
    }
    Ok(g)
}

/// Generic Laplace formula for `log integral exp(t h(x)) dx` over `R^m`, given
/// the maximum `h(x_hat)` and `log det(-H(x_hat))`.
pub fn laplace_log_integral(h_max: f64, log_det_neg_hessian: f64, m: usize, t: f64) -> f64 {
    let m = m as f64;
    0.5 * m * (2.0 * PI).ln() - 0.5 * log_det_neg_hessian - 0.5 * m * t.ln() + t * h_max
}

/// One observation's Laplace log-likelihood term.
pub(crate) fn observation_term(record: &[u8], params: &ParameterSet, sol: &LatentSolution) -> f64 {
    let f = sol.f_hat;
    let t = local_terms(record, &f, params);
    -0.5 * log_det_gamma(params.rho, t.curvature) - 0.5 * params.log_det_r() + t.log_g
        - 0.5 * quad_form(&params.r_inverse(), f.as_array())
}

/// Gradient of one observation's term with respect to the natural parameters
/// (thresholds, loadings, rho). Accounts for the implicit dependence of the
/// latent score on the parameters, `dF/dtheta = Gamma^-1 d(dh/dF)/dtheta`.
pub(crate) fn observation_gradient_natural(
    record: &[u8],
    params: &ParameterSet,
    sol: &LatentSolution,
) -> Vec<f64> {
    let config = params.config();
    let np = config.n_params();
    let nt = config.n_thresholds();
    let fa = sol.f_hat.as_array();
    let p_x = params.p_x();

    let mut direct = vec![0.0; np];
    let mut mixed = vec![[0.0; 2]; np];
    let mut d_direct = vec![[0.0; 2]; np];
    let mut curvature = [0.0; 2];
    let mut third = [0.0; 2];

    for (l, &k) in record.iter().enumerate() {
        let b = usize::from(l >= p_x);
        let beta = params.loading(l);
        let t = LinkTerms::new(params.thresholds.for_variable(l), k as usize, beta * fa[b]);
        curvature[b] -= beta * beta * t.d2;
        third[b] -= beta * beta * beta * t.d3;
        let off = params.thresholds.offset(l);
        if let Some(j) = t.hi {
            direct[off + j] += t.dlogp_dhi;
            mixed[off + j][b] += beta * t.dd1_dhi;
            d_direct[off + j][b] -= beta * beta * t.dd2_dhi;
        }
        if let Some(j) = t.lo {
            direct[off + j] += t.dlogp_dlo;
            mixed[off + j][b] += beta * t.dd1_dlo;
            d_direct[off + j][b] -= beta * beta * t.dd2_dlo;
        }
        let bi = nt + l;
        direct[bi] = t.d1 * fa[b];
        mixed[bi][b] = t.d1 + beta * t.d2 * fa[b];
        d_direct[bi][b] = -(2.0 * beta * t.d2 + beta * beta * t.d3 * fa[b]);
    }

    let rho = params.rho;
    let one_minus = 1.0 - rho * rho;
    let diag = 2.0 * rho / (one_minus * one_minus);
    let off = -(1.0 + rho * rho) / (one_minus * one_minus);
    let d_r_inv = [[diag, off], [off, diag]];
    let ri = np - 1;
    direct[ri] = -0.5 * quad_form(&d_r_inv, fa) + rho / one_minus;
    let dr_f = mat_vec(&d_r_inv, fa);
    mixed[ri] = [-dr_f[0], -dr_f[1]];

    let gamma = gamma_from(&params.r_inverse(), curvature);
    let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
    let g_inv = [
        [gamma[1][1] / det, -gamma[0][1] / det],
        [-gamma[1][0] / det, gamma[0][0] / det],
    ];

    (0..np)
        .map(|k| {
            let df = mat_vec(&g_inv, mixed[k]);
            let dd = [
                d_direct[k][0] + third[0] * df[0],
                d_direct[k][1] + third[1] * df[1],
            ];
            let mut trace = g_inv[0][0] * dd[0] + g_inv[1][1] * dd[1];
            if k == ri {
                trace += g_inv[0][0] * d_r_inv[0][0]
                    + 2.0 * g_inv[0][1] * d_r_inv[0][1]
                    + g_inv[1][1] * d_r_inv[1][1];
            }
            direct[k] - 0.5 * trace
        })
        .collect()
}

/// Result of evaluating the approximate log-likelihood over a dataset.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub solutions: Vec<LatentSolution>,
    /// Per-observation gradients in the natural layout, when requested.
    pub gradients: Option<Vec<Vec<f64>>>,
}

impl Evaluation {
    pub fn gradient_natural(&self) -> Option<Vec<f64>> {
        let g = self.gradients.as_ref()?;
        let mut total = vec![0.0; g.first().map_or(0, Vec::len)];
        for row in g {
            for (t, v) in total.iter_mut().zip(row) {
                *t += v;
            }
        }
        Some(total)
    }
}

/// Evaluates the approximate log-likelihood, optionally warm-starting each
/// inner solve and collecting per-observation gradients.
pub fn evaluate(
    data: &OrdinalDataset,
    params: &ParameterSet,
    opts: &SolverOptions,
    warm: Option<&[LatentPoint]>,
    with_gradient: bool,
) -> Result<Evaluation> {
    params.validate(data.config())?;
    opts.validate()?;
    let mut value = 0.0;
    let mut solutions = Vec::with_capacity(data.n());
    let mut gradients = with_gradient.then(|| Vec::with_capacity(data.n()));
    for (i, record) in data.rows().enumerate() {
        let start = warm.and_then(|w| w.get(i).copied()).unwrap_or_default();
        let sol = solve_unchecked(record, params, opts, start).map_err(|e| match e {
            Error::NonFinite(reason) => Error::InnerSolve {
                observation: i,
                reason,
            },
            other => other,
        })?;
        if !sol.converged {
            return Err(Error::InnerSolve {
                observation: i,
                reason: format!(
                    "no convergence after {} iterations (residual {:.3e})",
                    sol.iterations, sol.residual_norm
                ),
            });
        }
        value += observation_term(record, params, &sol);
        if let Some(g) = gradients.as_mut() {
            g.push(observation_gradient_natural(record, params, &sol));
        }
        solutions.push(sol);
    }
    if !value.is_finite() {
        return Err(Error::NonFinite("approximate log-likelihood".into()));
    }
    Ok(Evaluation {
        value,
        solutions,
        gradients,
    })
}

/// Laplace-approximated log-likelihood of `data` at `params`.
pub fn approx_log_likelihood(
    data: &OrdinalDataset,
    params: &ParameterSet,
    opts: &SolverOptions,
) -> Result<f64> {
    Ok(evaluate(data, params, opts, None, false)?.value)
}

/// Gradient of [`approx_log_likelihood`] with respect to the unconstrained
/// parameter vector (see [`crate::estimator::to_unconstrained`]).
///
/// With the `fd-gradient` feature this is computed by central differences.
pub fn approx_log_likelihood_gradient(
    data: &OrdinalDataset,
    params: &ParameterSet,
    opts: &SolverOptions,
) -> Result<Vec<f64>> {
    #[cfg(feature = "fd-gradient")]
    {
        finite_difference_gradient(data, params, opts, 1e-5)
    }
    #[cfg(not(feature = "fd-gradient"))]
    {
        let eval = evaluate(data, params, opts, None, true)?;
        let natural = eval.gradient_natural().expect("gradients were requested");
        let u = to_unconstrained_raw(params);
        Ok(natural_to_unconstrained_gradient(&data.config().clone(), &u, &natural))
    }
}

/// Central finite differences of [`approx_log_likelihood`] in the
/// unconstrained coordinates.
pub fn finite_difference_gradient(
    data: &OrdinalDataset,
    params: &ParameterSet,
    opts: &SolverOptions,
    step: f64,
) -> Result<Vec<f64>> {
    use crate::estimator::from_unconstrained_raw;
    let config = *data.config();
    let u = to_unconstrained_raw(params);
    let mut g = vec![0.0; u.len()];
    for j in 0..u.len() {
        let mut up = u.clone();
        let mut dn = u.clone();
        up[j] += step;
        dn[j] -= step;
        let fp = approx_log_likelihood(data, &from_unconstrained_raw(&config, &up)?, opts)?;
        let fm = approx_log_likelihood(data, &from_unconstrained_raw(&config, &dn)?, opts)?;
        g[j] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}
