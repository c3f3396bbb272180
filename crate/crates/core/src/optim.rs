//! BFGS minimizer with a strong-Wolfe line search.
//!
//! The objective returns `None` for points where it cannot be evaluated; the
//! line search treats those as infeasible and shrinks the step. A box
//! `|x_i| <= bound` is enforced the same way.

#[derive(Debug, Clone, Copy)]
pub struct BfgsOptions {
    /// Convergence threshold on the sup-norm of the gradient.
    pub grad_tol: f64,
    pub max_iterations: usize,
    /// Coordinates are kept inside `[-bound, bound]`.
    pub bound: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            grad_tol: 1e-6,
            max_iterations: 500,
            bound: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Objective value after each accepted step, starting with the initial point.
    pub trace: Vec<f64>,
    pub message: String,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sup_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Probe<'a, F> {
    f: &'a mut F,
    x: &'a [f64],
    dir: &'a [f64],
    bound: f64,
    evaluations: &'a mut usize,
}

struct Point {
    alpha: f64,
    value: f64,
    grad: Vec<f64>,
    slope: f64,
}

impl<F> Probe<'_, F>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    fn at(&mut self, alpha: f64) -> Option<Point> {
        let x: Vec<f64> = self
            .x
            .iter()
            .zip(self.dir)
            .map(|(x, d)| x + alpha * d)
            .collect();
        if x.iter().any(|v| !v.is_finite() || v.abs() > self.bound) {
            return None;
        }
        *self.evaluations += 1;
        let (value, grad) = (self.f)(&x)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        let slope = dot(&grad, self.dir);
        Some(Point {
            alpha,
            value,
            grad,
            slope,
        })
    }
}

fn line_search<F>(probe: &mut Probe<'_, F>, f0: f64, slope0: f64, alpha0: f64) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let armijo = |p: &Point| p.value <= f0 + C1 * p.alpha * slope0;
    let mut prev = Point {
        alpha: 0.0,
        value: f0,
        grad: Vec::new(),
        slope: slope0,
    };
    let mut best: Option<Point> = None;
    let mut alpha = alpha0;
    let mut upper = f64::INFINITY;

    for i in 0..40 {
        let Some(p) = probe.at(alpha) else {
            upper = alpha;
            alpha = 0.5 * (prev.alpha + alpha);
            if alpha - prev.alpha < 1e-16 {
                break;
            }
            continue;
        };
        if !armijo(&p) || (i > 0 && p.value >= prev.value) {
            return zoom(probe, f0, slope0, prev, p).or(best);
        }
        if p.slope.abs() <= -C2 * slope0 {
            return Some(p);
        }
        if p.slope >= 0.0 {
            return zoom(probe, f0, slope0, p, prev).or(best);
        }
        let next = if upper.is_finite() {
            0.5 * (p.alpha + upper)
        } else {
            2.0 * p.alpha
        };
        prev = p;
        best = Some(Point {
            alpha: prev.alpha,
            value: prev.value,
            grad: prev.grad.clone(),
            slope: prev.slope,
        });
        alpha = next;
    }
    best
}

fn zoom<F>(
    probe: &mut Probe<'_, F>,
    f0: f64,
    slope0: f64,
    mut lo: Point,
    mut hi: Point,
) -> Option<Point>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    for _ in 0..40 {
        let width = hi.alpha - lo.alpha;
        if width.abs() < 1e-14 * lo.alpha.abs().max(1e-10) {
            break;
        }
        // safeguarded quadratic interpolation from (lo.value, lo.slope, hi.value)
        let denom = 2.0 * (hi.value - lo.value - lo.slope * width);
        let mut t = if denom > 0.0 {
            -lo.slope * width * width / denom / width
        } else {
            0.5
        };
        if !(0.1..=0.9).contains(&t) || !t.is_finite() {
            t = 0.5;
        }
        let alpha = lo.alpha + t * width;
        let Some(p) = probe.at(alpha) else {
            hi = Point {
                alpha,
                value: f64::INFINITY,
                grad: Vec::new(),
                slope: 0.0,
            };
            continue;
        };
        if p.value > f0 + C1 * alpha * slope0 || p.value >= lo.value {
            hi = p;
        } else {
            if p.slope.abs() <= -C2 * slope0 {
                return Some(p);
            }
            if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
    // accept the best sufficient-decrease point found, if any
    (lo.alpha > 0.0 && !lo.grad.is_empty()).then_some(lo)
}

/// Minimizes `f` from `x0`. `f` returns the value and gradient.
pub fn minimize<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> BfgsResult
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let mut evaluations = 1;
    let Some((mut value, mut grad)) = f(x0) else {
        return BfgsResult {
            x: x0.to_vec(),
            value: f64::NAN,
            gradient: vec![f64::NAN; n],
            iterations: 0,
            evaluations,
            converged: false,
            trace: Vec::new(),
            message: "objective cannot be evaluated at the starting point".into(),
        };
    };
    let mut x = x0.to_vec();
    let mut h_inv = identity(n);
    let mut fresh = true;
    let mut trace = vec![value];
    let mut message = String::from("maximum iterations reached");
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if sup_norm(&grad) <= opts.grad_tol {
            converged = true;
            message = "gradient tolerance reached".into();
            break;
        }
        iterations += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| -dot(&h_inv[i], &grad)).collect();
        let mut slope = dot(&dir, &grad);
        if slope >= 0.0 {
            h_inv = identity(n);
            fresh = true;
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&dir, &grad);
        }
        let alpha0 = if fresh {
            (1.0 / sup_norm(&grad)).min(1.0)
        } else {
            1.0
        };
        let mut probe = Probe {
            f: &mut f,
            x: &x,
            dir: &dir,
            bound: opts.bound,
            evaluations: &mut evaluations,
        };
        let Some(p) = line_search(&mut probe, value, slope, alpha0) else {
            if fresh {
                message = "line search failed along steepest descent".into();
                break;
            }
            h_inv = identity(n);
            fresh = true;
            continue;
        };

        let s: Vec<f64> = dir.iter().map(|d| p.alpha * d).collect();
        let y: Vec<f64> = p.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        x.iter_mut().zip(&s).for_each(|(xi, si)| *xi += si);
        value = p.value;
        grad = p.grad;
        trace.push(value);

        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h_inv = identity(n);
                h_inv.iter_mut().enumerate().for_each(|(i, r)| r[i] = scale);
                fresh = false;
            }
            bfgs_update(&mut h_inv, &s, &y, sy);
        }
    }
    if !converged && sup_norm(&grad) <= opts.grad_tol {
        converged = true;
        message = "gradient tolerance reached".into();
    }
    BfgsResult {
        x,
        value,
        gradient: grad,
        iterations,
        evaluations,
        converged,
        trace,
        message,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

// H <- (I - r s y') H (I - r y s') + r s s', r = 1 / s'y
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    let coef = (1.0 + r * yhy) * r;
    for i in 0..n {
        for j in 0..n {
            h[i][j] += coef * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
