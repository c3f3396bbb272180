use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("category {category} out of range 1..={q}")]
    InvalidCategory { category: usize, q: usize },

    #[error("variable index {index} out of range (model has {count} variables)")]
    InvalidVariable { index: usize, count: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("variable {variable} is unidentified: {reason}")]
    Unidentified { variable: usize, reason: String },

    #[error("latent score solve for observation {observation} failed: {reason}")]
    InnerSolve { observation: usize, reason: String },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("optimization failed: {0}")]
    NotConverged(String),

    #[error("singular information matrix (condition number {condition:.3e})")]
    Singular { condition: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
