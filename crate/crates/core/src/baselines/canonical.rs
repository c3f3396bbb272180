//! First canonical correlation between two blocks of a covariance matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalResult {
    pub rho_c: f64,
    /// Weights on the first `p_x` variables; `b_x' S_xx b_x = 1`.
    pub b_x: Vec<f64>,
    /// Weights on the remaining variables; `b_y' S_yy b_y = 1`.
    pub b_y: Vec<f64>,
}

/// Canonical correlation of the partition `sigma = [[S_xx, S_xy], [S_yx, S_yy]]`
/// with `S_xx` of size `p_x`.
///
/// Each block is whitened by its Cholesky factor; the leading singular value
/// of `L_x^-1 S_xy L_y^-T` is the correlation.
pub fn canonical_correlation(sigma: &DMatrix<f64>, p_x: usize) -> Result<CanonicalResult> {
    let p = sigma.nrows();
    if sigma.ncols() != p || p_x == 0 || p_x >= p {
        return Err(Error::InvalidArgument(format!(
            "need a square matrix with two non-empty blocks, got {}x{} split at {p_x}",
            p,
            sigma.ncols()
        )));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance matrix".into()));
    }
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * sigma.amax().max(1.0) {
        return Err(Error::InvalidArgument("covariance matrix is not symmetric".into()));
    }
    let p_y = p - p_x;
    let sxx = sigma.view((0, 0), (p_x, p_x)).into_owned();
    let syy = sigma.view((p_x, p_x), (p_y, p_y)).into_owned();
    let sxy = sigma.view((0, p_x), (p_x, p_y)).into_owned();
    let singular =
        |block: &str| Error::InvalidArgument(format!("{block} block of the covariance matrix is singular"));
    let lx = sxx
        .cholesky()
        .ok_or_else(|| singular("X"))?
        .l();
    let ly = syy
        .cholesky()
        .ok_or_else(|| singular("Y"))?
        .l();
    let lx_inv = lx
        .clone()
        .solve_lower_triangular(&DMatrix::identity(p_x, p_x))
        .ok_or_else(|| singular("X"))?;
    let ly_inv = ly
        .clone()
        .solve_lower_triangular(&DMatrix::identity(p_y, p_y))
        .ok_or_else(|| singular("Y"))?;
    let m = &lx_inv * &sxy * ly_inv.transpose();
    // leading right singular vector from the p_y x p_y Gram matrix; the SVD
    // with vectors requested can stall on rank-deficient inputs
    let eig = (m.transpose() * &m).symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v: DVector<f64> = eig.eigenvectors.column(k).into_owned();
    let mv = &m * &v;
    let rho_c = mv.norm();
    let u: DVector<f64> = if rho_c > 0.0 {
        mv / rho_c
    } else {
        let mut e = DVector::zeros(p_x);
        e[0] = 1.0;
        e
    };
    let mut b_x = lx_inv.transpose() * u;
    let mut b_y = ly_inv.transpose() * v;
    // fix the arbitrary joint sign so the X weights sum to a non-negative value
    if b_x.sum() < 0.0 {
        b_x = -b_x;
        b_y = -b_y;
    }
    Ok(CanonicalResult {
        rho_c: rho_c.min(1.0),
        b_x: b_x.iter().copied().collect(),
        b_y: b_y.iter().copied().collect(),
    })
}

/// Sample covariance matrix (divisor `n - 1`) of the rows of `data`.
pub fn sample_covariance(data: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = data.len();
    let p = data.first().map_or(0, Vec::len);
    if n < 2 || p == 0 || data.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidData(
            "need at least two rows of equal, non-zero length".into(),
        ));
    }
    let x = DMatrix::from_fn(n, p, |i, j| data[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, p, |i, j| x[(i, j)] - mean[j]);
    Ok(centered.transpose() * &centered / (n as f64 - 1.0))
}
