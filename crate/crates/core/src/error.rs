use thiserror::Error;

/// Errors produced by the numerical pipelines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("cell width {0} is not an integer power of two")]
    NonDyadic(f64),

    #[error("set is empty")]
    EmptySet,

    #[error("kernel evaluator returned a non-finite value at {0}")]
    NonFinite(String),

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("tuple budget exceeded: {required} kernel evaluations requested, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("no room for atom {slot}:{atom}: {reason}")]
    InsufficientRoom {
        slot: usize,
        atom: usize,
        reason: String,
    },

    #[error("atom {slot}:{atom} has nonpositive weight {weight}")]
    NonPositiveWeight { slot: usize, atom: usize, weight: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("hypothesis violated in slot {slot}: {reason}")]
    HypothesisViolated { slot: usize, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
