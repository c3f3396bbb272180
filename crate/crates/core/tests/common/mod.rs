//! Test oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use ordlatent::laplace::{solve_latent_scores, SolverOptions};
use ordlatent::model::{conditional_log_density, LatentPoint, ModelConfig, ParameterSet, Thresholds};
use ordlatent::OrdinalDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gauss–Hermite rule for weight `exp(-x^2)` by the Golub–Welsch eigenvalue method.
/// Returns `(node, log weight)` pairs.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            (i.max(j) as f64 / 2.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut rule: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], 0.5 * std::f64::consts::PI.ln() + 2.0 * v0.abs().ln())
        })
        .collect();
    rule.sort_by(|a, b| a.0.total_cmp(&b.0));
    rule
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// `h(F) = log g(z | F) - F' R^-1 F / 2` for a 0-based record.
pub fn h(record: &[u8], f: &LatentPoint, params: &ParameterSet) -> f64 {
    let ri = params.r_inverse();
    let q = ri[0][0] * f.f_x * f.f_x + 2.0 * ri[0][1] * f.f_x * f.f_y + ri[1][1] * f.f_y * f.f_y;
    conditional_log_density(record, f, params).unwrap() - 0.5 * q
}

/// Exact marginal log-likelihood of one record,
/// `log integral g(z | F) phi_2(F; R) dF`, by adaptive Gauss–Hermite
/// quadrature centred at the mode with the Laplace curvature as scale.
pub fn exact_record_log_likelihood(record: &[u8], params: &ParameterSet, nodes: usize) -> f64 {
    let sol = solve_latent_scores(record, params, &SolverOptions::default()).unwrap();
    let g = sol.gamma;
    let cov = DMatrix::from_row_slice(2, 2, &[g[0][0], g[0][1], g[1][0], g[1][1]])
        .try_inverse()
        .unwrap();
    let l = cov.cholesky().unwrap().l();
    let log_jac = (2.0 * l[(0, 0)] * l[(1, 1)]).ln();
    let rule = gauss_hermite(nodes);
    let log_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * params.log_det_r();
    let mut terms = Vec::with_capacity(nodes * nodes);
    for &(x1, w1) in &rule {
        for &(x2, w2) in &rule {
            let s = std::f64::consts::SQRT_2;
            let f = LatentPoint::new(
                sol.f_hat.f_x + s * l[(0, 0)] * x1,
                sol.f_hat.f_y + s * (l[(1, 0)] * x1 + l[(1, 1)] * x2),
            );
            terms.push(w1 + w2 + x1 * x1 + x2 * x2 + h(record, &f, params));
        }
    }
    log_norm + log_jac + log_sum_exp(&terms)
}

pub fn exact_log_likelihood(data: &OrdinalDataset, params: &ParameterSet, nodes: usize) -> f64 {
    data.rows()
        .map(|r| exact_record_log_likelihood(r, params, nodes))
        .sum()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid parameters with moderate loadings.
pub fn random_params(rng: &mut ChaCha8Rng, config: &ModelConfig, max_loading: f64) -> ParameterSet {
    let cuts = |rng: &mut ChaCha8Rng| {
        let mut c = vec![rng.random_range(-3.0..-0.5)];
        for _ in 1..config.q - 1 {
            let last = *c.last().unwrap();
            c.push(last + rng.random_range(0.3..2.0));
        }
        c
    };
    let thresholds = if config.shared_thresholds {
        Thresholds::Shared(cuts(rng))
    } else {
        Thresholds::PerVariable((0..config.n_vars()).map(|_| cuts(rng)).collect())
    };
    let mut loads = |p: usize| -> Vec<f64> {
        (0..p)
            .map(|_| rng.random_range(-max_loading..max_loading))
            .collect()
    };
    let loadings_x = loads(config.p_x);
    let loadings_y = loads(config.p_y);
    ParameterSet {
        thresholds,
        loadings_x,
        loadings_y,
        rho: rng.random_range(-0.9..0.9),
    }
}

pub fn random_record(rng: &mut ChaCha8Rng, config: &ModelConfig) -> Vec<u8> {
    (0..config.n_vars())
        .map(|_| rng.random_range(0..config.q as u8))
        .collect()
}

/// Random dataset (1-based codes) in which every category appears in every column.
pub fn random_dataset(rng: &mut ChaCha8Rng, config: ModelConfig, n: usize) -> OrdinalDataset {
    assert!(n >= config.q);
    let rows: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..config.n_vars())
                .map(|_| {
                    if i < config.q {
                        i + 1
                    } else {
                        rng.random_range(1..=config.q)
                    }
                })
                .collect()
        })
        .collect();
    OrdinalDataset::from_codes(config, &rows).unwrap()
}

pub type Case = (f64, f64, f64, f64, f64, [(usize, usize); 5], f64);

// Exact marginal log-likelihoods from direct numerical integration with
// scipy (tests/data/oracles.py). Fields: two shared thresholds, the two
// loadings, rho, five (x, y) records with 1-based codes, exact value.
pub const QUADRATURE_CASES: [Case; 5] = [
    (-1.0, 1.2, 1.2, 1.0, 0.4, [(1, 1), (2, 3), (3, 3), (2, 2), (3, 1)], -11.225392594067088),
    (-0.5, 0.7, 0.8, 1.5, -0.6, [(1, 2), (2, 2), (3, 1), (1, 1), (3, 3)], -11.391870061998748),
    (-2.0, 0.0, 1.0, 1.0, 0.0, [(2, 2), (3, 3), (1, 3), (2, 1), (3, 2)], -10.75749953115486),
    (-1.5, 1.5, 1.4, 1.4, 0.8, [(1, 1), (3, 3), (2, 2), (1, 3), (2, 3)], -11.560830115083617),
    (0.3, 2.1, 0.5, 1.3, 0.2, [(3, 3), (3, 2), (1, 1), (2, 3), (3, 1)], -14.06914893787789),
];

// Single indicators with loadings of 2 to 4; the posterior of each factor is
// then close to a truncated normal and the Laplace error grows.
pub const STEEP_CASES: [Case; 3] = [
    (-1.0, 1.2, 1.5, 2.0, 0.4, [(1, 1), (2, 3), (3, 3), (2, 2), (3, 1)], -10.779776359169077),
    (-0.5, 0.7, 0.8, 3.0, -0.6, [(1, 2), (2, 2), (3, 1), (1, 1), (3, 3)], -12.044869851575248),
    (0.3, 2.1, 0.5, 4.0, 0.2, [(3, 3), (3, 2), (1, 1), (2, 3), (3, 1)], -13.45283739688982),
];

pub fn build_case(case: &Case) -> (OrdinalDataset, ParameterSet, f64) {
    let &(a1, a2, bx, by, rho, rows, exact) = case;
    let config = ModelConfig::new(1, 1, 3, true).unwrap();
    let rows: Vec<Vec<usize>> = rows.iter().map(|&(x, y)| vec![x, y]).collect();
    let data = OrdinalDataset::from_codes(config, &rows).unwrap();
    let params = ParameterSet {
        thresholds: Thresholds::Shared(vec![a1, a2]),
        loadings_x: vec![bx],
        loadings_y: vec![by],
        rho,
    };
    (data, params, exact)
}
