//! Classical association measures used for comparison.

mod bvn;
mod canonical;
mod polychoric;
mod sem;

pub use bvn::{bivariate_normal_cdf, bivariate_normal_rect, MAX_ABS_RHO};
pub use canonical::{canonical_correlation, sample_covariance, CanonicalResult};
pub use polychoric::{polychoric, ContingencyTable, PolychoricResult, RHO_GUARD};
pub use sem::{sem_latent_correlation, weighted_block_correlation, SemSpec};
