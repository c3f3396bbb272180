//! Polychoric correlation of a two-way ordinal table.

use serde::{Deserialize, Serialize};

use super::bvn::cdf_unchecked;
use crate::error::{Error, Result};
use crate::normal;
use crate::optim::{self, BfgsOptions};

/// Correlations are kept inside `[-RHO_GUARD, RHO_GUARD]`.
pub const RHO_GUARD: f64 = 0.999;

/// Two-way table of counts, rows indexed by the X categories.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.is_empty() || cols == 0 || counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidData(
                "contingency table must be a non-empty rectangle".into(),
            ));
        }
        let table = Self { counts };
        if table.total() == 0 {
            return Err(Error::InvalidData("contingency table has no counts".into()));
        }
        Ok(table)
    }

    /// Cross-classifies two columns of 1-based category codes.
    pub fn from_codes(x: &[u8], y: &[u8], q_x: usize, q_y: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidData(format!(
                "columns differ in length: {} and {}",
                x.len(),
                y.len()
            )));
        }
        let mut counts = vec![vec![0u64; q_y]; q_x];
        for (&a, &b) in x.iter().zip(y) {
            let (a, b) = (a as usize, b as usize);
            if a == 0 || a > q_x || b == 0 || b > q_y {
                return Err(Error::InvalidData(format!(
                    "code pair ({a}, {b}) outside 1..={q_x} x 1..={q_y}"
                )));
            }
            counts[a - 1][b - 1] += 1;
        }
        Self::new(counts)
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn n_rows(&self) -> usize {
        self.counts.len()
    }

    pub fn n_cols(&self) -> usize {
        self.counts[0].len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn transpose(&self) -> Self {
        let counts = (0..self.n_cols())
            .map(|j| self.counts.iter().map(|r| r[j]).collect())
            .collect();
        Self { counts }
    }

    pub fn scaled(&self, factor: u64) -> Self {
        let counts = self
            .counts
            .iter()
            .map(|r| r.iter().map(|c| c * factor).collect())
            .collect();
        Self { counts }
    }

    fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    fn col_totals(&self) -> Vec<u64> {
        (0..self.n_cols())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolychoricResult {
    pub rho: f64,
    /// Cut points between consecutive non-empty row categories.
    pub thresholds_x: Vec<f64>,
    /// Cut points between consecutive non-empty column categories.
    pub thresholds_y: Vec<f64>,
    pub log_likelihood: f64,
    /// Profile estimate with thresholds fixed at the marginal values.
    pub two_step_rho: f64,
    /// The likelihood increases towards `|rho| = 1`; `rho` is the guard value.
    pub boundary: bool,
    pub converged: bool,
    /// 0-based row and column categories that carry counts.
    pub kept_rows: Vec<usize>,
    pub kept_cols: Vec<usize>,
}

/// Counts restricted to non-empty rows and columns.
struct Reduced {
    counts: Vec<Vec<f64>>,
    total: f64,
}

impl Reduced {
    fn rows(&self) -> usize {
        self.counts.len()
    }

    fn cols(&self) -> usize {
        self.counts[0].len()
    }

    /// Log-likelihood and optionally its gradient in (x cuts, y cuts, rho).
    fn log_likelihood(&self, ax: &[f64], ay: &[f64], rho: f64, grad: bool) -> Option<(f64, Vec<f64>)> {
        let (r, c) = (self.rows(), self.cols());
        let cut = |v: &[f64], i: usize| match i {
            0 => f64::NEG_INFINITY,
            i if i == v.len() + 1 => f64::INFINITY,
            i => v[i - 1],
        };
        let s = (1.0 - rho * rho).sqrt();
        // corner values and partial derivatives on the (r+1) x (c+1) grid
        let mut f = vec![vec![0.0; c + 1]; r + 1];
        let mut fa = vec![vec![0.0; c + 1]; r + 1];
        let mut fb = vec![vec![0.0; c + 1]; r + 1];
        let mut fr = vec![vec![0.0; c + 1]; r + 1];
        for i in 0..=r {
            let a = cut(ax, i);
            for j in 0..=c {
                let b = cut(ay, j);
                f[i][j] = cdf_unchecked(a, b, rho);
                if !grad || a == f64::NEG_INFINITY || b == f64::NEG_INFINITY {
                    continue;
                }
                if a.is_finite() {
                    fa[i][j] = if b.is_finite() {
                        normal::pdf(a) * normal::cdf((b - rho * a) / s)
                    } else {
                        normal::pdf(a)
                    };
                }
                if b.is_finite() {
                    fb[i][j] = if a.is_finite() {
                        normal::pdf(b) * normal::cdf((a - rho * b) / s)
                    } else {
                        normal::pdf(b)
                    };
                }
                if a.is_finite() && b.is_finite() {
                    fr[i][j] = normal::bivariate_pdf(a, b, rho);
                }
            }
        }
        let n_params = ax.len() + ay.len() + 1;
        let mut g = vec![0.0; if grad { n_params } else { 0 }];
        let mut value = 0.0;
        for i in 0..r {
            for j in 0..c {
                let n = self.counts[i][j];
                if n == 0.0 {
                    continue;
                }
                let p = f[i + 1][j + 1] - f[i][j + 1] - f[i + 1][j] + f[i][j];
                if !(p > 0.0) {
                    return None;
                }
                value += n * p.ln();
                if !grad {
                    continue;
                }
                let w = n / p;
                let corners = [(i + 1, j + 1, 1.0), (i, j + 1, -1.0), (i + 1, j, -1.0), (i, j, 1.0)];
                for (ci, cj, sign) in corners {
                    if (1..=ax.len()).contains(&ci) {
                        g[ci - 1] += w * sign * fa[ci][cj];
                    }
                    if (1..=ay.len()).contains(&cj) {
                        g[ax.len() + cj - 1] += w * sign * fb[ci][cj];
                    }
                    g[n_params - 1] += w * sign * fr[ci][cj];
                }
            }
        }
        Some((value, g))
    }
}

fn marginal_cuts(totals: &[f64]) -> Vec<f64> {
    let n: f64 = totals.iter().sum();
    let mut cum = 0.0;
    totals[..totals.len() - 1]
        .iter()
        .map(|t| {
            cum += t;
            normal::quantile(cum / n)
        })
        .collect()
}

fn encode_cuts(cuts: &[f64], out: &mut Vec<f64>) {
    for (k, &a) in cuts.iter().enumerate() {
        out.push(if k == 0 { a } else { (a - cuts[k - 1]).ln() });
    }
}

fn decode_cuts(u: &[f64]) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(u.len());
    for (k, &v) in u.iter().enumerate() {
        cuts.push(if k == 0 { v } else { cuts[k - 1] + v.exp() });
    }
    cuts
}

// chain rule from cut gradients to the first-plus-log-increment coordinates
fn cut_gradient(u: &[f64], cuts: &[f64], g: &[f64], out: &mut Vec<f64>) {
    let mut tail: Vec<f64> = g.to_vec();
    for k in (0..g.len().saturating_sub(1)).rev() {
        tail[k] += tail[k + 1];
    }
    for k in 0..u.len() {
        out.push(if k == 0 { tail[0] } else { tail[k] * (cuts[k] - cuts[k - 1]) });
    }
}

/// Profile maximization over rho with fixed thresholds.
fn profile(table: &Reduced, ax: &[f64], ay: &[f64]) -> (f64, f64) {
    let ll = |rho: f64| {
        table
            .log_likelihood(ax, ay, rho, false)
            .map_or(f64::NEG_INFINITY, |v| v.0)
    };
    let steps = 1998;
    let grid = |k: usize| -RHO_GUARD + 2.0 * RHO_GUARD * k as f64 / steps as f64;
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for k in 0..=steps {
        let v = ll(grid(k));
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if best_k == 0 || best_k == steps {
        return (grid(best_k), best);
    }
    // golden section inside the bracketing grid cells
    let (mut lo, mut hi) = (grid(best_k - 1), grid(best_k + 1));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (ll(x1), ll(x2));
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = ll(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = ll(x1);
        }
    }
    let rho = 0.5 * (lo + hi);
    (rho, ll(rho))
}

/// Maximum likelihood polychoric correlation.
///
/// Empty rows and columns are dropped, which merges their cut points with
/// a neighbour. Starts from the two-step estimate (marginal thresholds,
/// profile in rho) and refines all parameters jointly.
pub fn polychoric(table: &ContingencyTable) -> Result<PolychoricResult> {
    let kept_rows: Vec<usize> = (0..table.n_rows())
        .filter(|&i| table.row_totals()[i] > 0)
        .collect();
    let col_totals = table.col_totals();
    let kept_cols: Vec<usize> = (0..table.n_cols()).filter(|&j| col_totals[j] > 0).collect();
    if kept_rows.len() < 2 || kept_cols.len() < 2 {
        return Err(Error::Degenerate(
            "thresholds unidentified: table needs at least two non-empty rows and columns".into(),
        ));
    }
    let counts: Vec<Vec<f64>> = kept_rows
        .iter()
        .map(|&i| kept_cols.iter().map(|&j| table.counts[i][j] as f64).collect())
        .collect();
    let reduced = Reduced {
        total: table.total() as f64,
        counts,
    };
    let row_sums: Vec<f64> = reduced.counts.iter().map(|r| r.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..reduced.cols())
        .map(|j| reduced.counts.iter().map(|r| r[j]).sum())
        .collect();
    let ax0 = marginal_cuts(&row_sums);
    let ay0 = marginal_cuts(&col_sums);
    let (two_step_rho, two_step_ll) = profile(&reduced, &ax0, &ay0);

    let (nx, ny) = (ax0.len(), ay0.len());
    if two_step_rho.abs() >= RHO_GUARD {
        return Ok(PolychoricResult {
            rho: two_step_rho,
            thresholds_x: ax0,
            thresholds_y: ay0,
            log_likelihood: two_step_ll,
            two_step_rho,
            boundary: true,
            converged: true,
            kept_rows,
            kept_cols,
        });
    }

    let mut u0 = Vec::with_capacity(nx + ny + 1);
    encode_cuts(&ax0, &mut u0);
    encode_cuts(&ay0, &mut u0);
    u0.push((two_step_rho / RHO_GUARD).atanh());
    let n = reduced.total;
    let objective = |u: &[f64]| {
        let ax = decode_cuts(&u[..nx]);
        let ay = decode_cuts(&u[nx..nx + ny]);
        let t = u[nx + ny];
        let rho = RHO_GUARD * t.tanh();
        let (value, g) = reduced.log_likelihood(&ax, &ay, rho, true)?;
        let mut grad = Vec::with_capacity(u.len());
        cut_gradient(&u[..nx], &ax, &g[..nx], &mut grad);
        cut_gradient(&u[nx..nx + ny], &ay, &g[nx..nx + ny], &mut grad);
        grad.push(g[nx + ny] * RHO_GUARD * (1.0 - t.tanh().powi(2)));
        Some((-value / n, grad.into_iter().map(|v| -v / n).collect()))
    };
    let opts = BfgsOptions {
        grad_tol: 1e-9,
        max_iterations: 1000,
        bound: 30.0,
    };
    let fit = optim::minimize(objective, &u0, &opts);
    let rho = RHO_GUARD * fit.x[nx + ny].tanh();
    let boundary = rho.abs() >= RHO_GUARD * (1.0 - 1e-9) || fit.x[nx + ny].abs() >= 15.0;
    Ok(PolychoricResult {
        rho,
        thresholds_x: decode_cuts(&fit.x[..nx]),
        thresholds_y: decode_cuts(&fit.x[nx..nx + ny]),
        log_likelihood: -fit.value * n,
        two_step_rho,
        boundary,
        converged: fit.converged || boundary,
        kept_rows,
        kept_cols,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn independence_table() {
        let rows = [10u64, 30, 20];
        let cols = [5u64, 15, 25, 15];
        let counts = rows.iter().map(|r| cols.iter().map(|c| r * c).collect()).collect();
        let res = polychoric(&ContingencyTable::new(counts).unwrap()).unwrap();
        assert!(res.rho.abs() < 1e-6, "{}", res.rho);
        assert!(res.converged && !res.boundary);
    }

    #[test]
    fn diagonal_table_hits_guard() {
        let counts = vec![vec![10, 0, 0], vec![0, 10, 0], vec![0, 0, 10]];
        let res = polychoric(&ContingencyTable::new(counts).unwrap()).unwrap();
        assert!(res.rho >= 0.99 && res.boundary);
    }

    #[test]
    fn degenerate_table() {
        let counts = vec![vec![3, 4], vec![0, 0]];
        assert!(matches!(
            polychoric(&ContingencyTable::new(counts).unwrap()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn gradient_matches_differences() {
        let reduced = Reduced {
            counts: vec![vec![10.0, 5.0, 1.0], vec![5.0, 10.0, 5.0], vec![1.0, 5.0, 10.0]],
            total: 52.0,
        };
        let (ax, ay, rho) = (vec![-0.4, 0.5], vec![-0.6, 0.3], 0.35);
        let (_, g) = reduced.log_likelihood(&ax, &ay, rho, true).unwrap();
        let h = 1e-6;
        let at = |ax: &[f64], ay: &[f64], r: f64| reduced.log_likelihood(ax, ay, r, false).unwrap().0;
        for k in 0..2 {
            let (mut up, mut dn) = (ax.clone(), ax.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (at(&up, &ay, rho) - at(&dn, &ay, rho)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6);
            let (mut up, mut dn) = (ay.clone(), ay.clone());
            up[k] += h;
            dn[k] -= h;
            let fd = (at(&ax, &up, rho) - at(&ax, &dn, rho)) / (2.0 * h);
            assert!((fd - g[2 + k]).abs() < 1e-6);
        }
        let fd = (at(&ax, &ay, rho + h) - at(&ax, &ay, rho - h)) / (2.0 * h);
        assert!((fd - g[4]).abs() < 1e-6);
    }

    #[test]
    fn codes_and_empty_categories() {
        let t = ContingencyTable::from_codes(&[1, 1, 3, 3, 3], &[1, 2, 2, 1, 2], 3, 2).unwrap();
        assert_eq!(t.counts(), &[vec![1, 1], vec![0, 0], vec![1, 2]]);
        let res = polychoric(&t).unwrap();
        assert_eq!(res.kept_rows, vec![0, 2]);
        assert_eq!(res.thresholds_x.len(), 1);
        assert!(ContingencyTable::from_codes(&[0], &[1], 2, 2).is_err());
    }
}
