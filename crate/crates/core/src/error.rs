use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Evaluation budget of a problem instance is exhausted.
    #[error("function evaluation budget exhausted ({used}/{budget})")]
    BudgetExhausted { used: u64, budget: u64 },

    /// A caller violated an operation contract (bad tree, bad index, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Inconsistent or impossible configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Normalization range is degenerate (f_worst <= f_opt).
    #[error("degenerate normalization range: f_worst={f_worst}, f_opt={f_opt}")]
    DegenerateRange { f_worst: f64, f_opt: f64 },

    /// Rule-text parsing failed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Checkpoint was produced under a different configuration.
    #[error("config hash mismatch: checkpoint has {found}, current config is {expected}")]
    ConfigHashMismatch { found: String, expected: String },

    /// Training diverged (non-finite loss or parameters).
    #[error("training divergence: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
