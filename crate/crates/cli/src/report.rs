//! JSON report documents. Every report carries the tool version and seed and
//! no timestamps, so reruns with the same flags are byte-identical.

use serde::{Deserialize, Serialize};

use ordlatent::baselines::{CanonicalResult, PolychoricResult};
use ordlatent::estimator::StartSummary;
use ordlatent::inference::Interval;
use ordlatent::simulate::BiasSummary;
use ordlatent::ModelConfig;

pub const TOOL: &str = "ordlatent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(command: &str, seed: u64) -> Self {
        Self {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputInfo {
    pub path: String,
    pub observations: usize,
    pub x_columns: Vec<String>,
    pub y_columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterRow {
    pub name: String,
    pub estimate: f64,
    /// Sandwich standard error.
    pub std_error: Option<f64>,
    pub bootstrap_bias: Option<f64>,
    pub bca_lower: Option<f64>,
    pub bca_upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub estimate: f64,
    pub identified: bool,
    pub fisher: Option<Interval>,
    pub bca: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub gradient_norm: f64,
    pub multimodal: bool,
    pub starts: Vec<StartSummary>,
    pub covariance_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub replicates: usize,
    pub failed: usize,
    pub unreliable: bool,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub label: String,
    pub f_x: f64,
    pub f_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input: InputInfo,
    pub config: ModelConfig,
    pub log_likelihood: f64,
    pub parameters: Vec<ParameterRow>,
    pub rho: RhoSummary,
    pub convergence: Convergence,
    pub bootstrap: Option<BootstrapSummary>,
    pub scores: Vec<ScoreRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedReplicate {
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub scenario: String,
    pub rho: f64,
    pub n: usize,
    pub replicates: usize,
    pub level: f64,
    /// Share of successful replicates whose Fisher interval covers the true rho.
    pub coverage: Option<f64>,
    pub failures: usize,
    pub suspect: bool,
    pub bias: Vec<BiasSummary>,
    pub rho_hat: Vec<f64>,
    pub failed_replicates: Vec<FailedReplicate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub x: String,
    pub y: String,
    pub rho: Option<f64>,
    pub boundary: bool,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelBaselines {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub input: InputInfo,
    /// Polychoric correlations, rows = X variables, columns = Y variables;
    /// `null` for degenerate pairs.
    pub polychoric: Vec<Vec<Option<f64>>>,
    pub pairs: Vec<PairRow>,
    /// Canonical correlation of the integer codes.
    pub canonical: Option<CanonicalResult>,
    pub canonical_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableBaselines {
    #[serde(flatten)]
    pub provenance: Provenance,
    pub path: String,
    pub polychoric: PolychoricResult,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports contain only finite numbers");
    s.push('\n');
    s
}
