//! Latent correlation of the linear two-factor model written as a weighted
//! correlation of the manifest blocks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear model `X = beta_x F_x + e_x`, `Y = beta_y F_y + e_y` with unit
/// latent variances, `corr(F_x, F_y) = rho` and residual variances `psi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSpec {
    pub beta_x: Vec<f64>,
    pub beta_y: Vec<f64>,
    /// Residual variances, X block first.
    pub psi: Vec<f64>,
    pub rho: f64,
}

impl SemSpec {
    pub fn validate(&self) -> Result<()> {
        let p = self.beta_x.len() + self.beta_y.len();
        if self.beta_x.is_empty() || self.beta_y.is_empty() {
            return Err(Error::InvalidParams("both loading blocks must be non-empty".into()));
        }
        if self.psi.len() != p {
            return Err(Error::InvalidParams(format!(
                "expected {p} residual variances, got {}",
                self.psi.len()
            )));
        }
        if self.psi.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidParams("residual variances must be finite and >= 0".into()));
        }
        if self.beta_x.iter().chain(&self.beta_y).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loadings".into()));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Error::InvalidParams(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        for (name, block) in [("X", &self.beta_x), ("Y", &self.beta_y)] {
            if block.iter().all(|b| *b == 0.0) {
                return Err(Error::InvalidParams(format!("{name} loading vector is zero")));
            }
        }
        Ok(())
    }

    fn loading_matrix(&self) -> DMatrix<f64> {
        let (px, py) = (self.beta_x.len(), self.beta_y.len());
        let mut lambda = DMatrix::zeros(px + py, 2);
        for (i, b) in self.beta_x.iter().enumerate() {
            lambda[(i, 0)] = *b;
        }
        for (i, b) in self.beta_y.iter().enumerate() {
            lambda[(px + i, 1)] = *b;
        }
        lambda
    }

    /// Manifest covariance `Lambda R Lambda' + diag(psi)`.
    pub fn implied_covariance(&self) -> Result<DMatrix<f64>> {
        Ok(self.common_covariance()? + DMatrix::from_diagonal(&DVector::from_column_slice(&self.psi)))
    }

    /// Covariance with the measurement error removed, `Lambda R Lambda'`.
    pub fn common_covariance(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let lambda = self.loading_matrix();
        let r = DMatrix::from_row_slice(2, 2, &[1.0, self.rho, self.rho, 1.0]);
        Ok(&lambda * r * lambda.transpose())
    }
}

/// `b_x' S_xy b_y / sqrt(b_x' S_xx b_x * b_y' S_yy b_y)` for the partition of
/// `sigma` after the first `b_x.len()` variables.
pub fn weighted_block_correlation(sigma: &DMatrix<f64>, b_x: &[f64], b_y: &[f64]) -> Result<f64> {
    let (px, py) = (b_x.len(), b_y.len());
    if sigma.nrows() != px + py || sigma.ncols() != px + py {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, weights imply {}",
            sigma.nrows(),
            sigma.ncols(),
            px + py
        )));
    }
    let bx = DVector::from_column_slice(b_x);
    let by = DVector::from_column_slice(b_y);
    let sxx = sigma.view((0, 0), (px, px));
    let syy = sigma.view((px, px), (py, py));
    let sxy = sigma.view((0, px), (px, py));
    let num = (bx.transpose() * sxy * &by)[(0, 0)];
    let vx = (bx.transpose() * sxx * &bx)[(0, 0)];
    let vy = (by.transpose() * syy * &by)[(0, 0)];
    if !(vx > 0.0 && vy > 0.0) {
        return Err(Error::Degenerate("a weighted combination has zero variance".into()));
    }
    Ok(num / (vx * vy).sqrt())
}

/// Recovers the latent correlation from the loadings and the covariance
/// with `psi` subtracted from the manifest diagonal, whose within-block
/// parts equal the loading outer products.
pub fn sem_latent_correlation(spec: &SemSpec) -> Result<f64> {
    let adjusted = spec.implied_covariance()?
        - DMatrix::from_diagonal(&DVector::from_column_slice(&spec.psi));
    weighted_block_correlation(&adjusted, &spec.beta_x, &spec.beta_y)
}
