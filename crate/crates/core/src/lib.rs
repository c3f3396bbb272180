//! Latent correlation between two blocks of ordinal variables.
//!
//! Each block loads on one normal latent factor through a cumulative-logit
//! link; the two factors have correlation `rho`. The likelihood is
//! approximated per observation with a Laplace expansion around the latent
//! mode and maximized by BFGS.

pub mod baselines;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod laplace;
pub mod model;
pub mod normal;
pub mod optim;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use estimator::{fit, FitOptions, FitResult};
pub use inference::{bca_interval, fisher_interval, parametric_bootstrap, Interval};
pub use laplace::{approx_log_likelihood, solve_latent_scores, SolverOptions};
pub use model::{
    category_prob, conditional_log_density, cumulative_prob, Block, LatentPoint, ModelConfig,
    OrdinalDataset, ParameterSet, Thresholds,
};
pub use simulate::{builtin_scenario, run_monte_carlo, sample_dataset, Scenario};
