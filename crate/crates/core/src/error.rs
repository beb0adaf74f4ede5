use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("design error: {0}")]
    Design(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("chain {chain} could not start: log density at initial point is {value}")]
    Initialization { chain: usize, value: f64 },

    /// Raised when the target returns NaN mid-run. Carries the full chain state.
    #[error("chain {chain} hit a NaN log density at iteration {iteration} while updating `{parameter}`")]
    NonFinite {
        chain: usize,
        iteration: usize,
        parameter: String,
        state: Vec<(String, f64)>,
    },

    #[error("diagnostic undefined for `{parameter}`: {reason}")]
    Diagnostic { parameter: String, reason: String },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
