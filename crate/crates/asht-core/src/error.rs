use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("prior must sum to 1 within 1e-12 (got {sum})")]
    PriorNotNormalized { sum: f64 },

    #[error("hypotheses `{g}` and `{h}` share the same outcome parameter under every action")]
    Indistinguishable { g: String, h: String },

    #[error("KL divergence from theta1={theta1} to theta2={theta2} is unbounded")]
    UnboundedDivergence { theta1: f64, theta2: f64 },

    #[error("synthetic generation could not satisfy validity after {retries} column redraws")]
    GenerationFailed { retries: usize },

    #[error("parse error in {path} (record {record}): {reason}")]
    Parse {
        path: String,
        record: usize,
        reason: String,
    },

    #[error("hypotheses left uncovered after exhausting action copies: {0:?}")]
    Uncovered(Vec<String>),

    #[error("{what} = {size} exceeds the oracle guard of {limit}")]
    OracleGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
