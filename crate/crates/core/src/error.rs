use perishlab_autodiff::AutodiffError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("demand must be finite and non-negative, got {0}")]
    NegativeDemand(f64),
    #[error("lead time {lead} outside [1, {lbar}]")]
    LeadTime { lead: usize, lbar: usize },
    #[error("policy returned an invalid order quantity {0}")]
    InvalidOrder(f64),
    #[error("no lead time recorded for the order placed on day {0}")]
    MissingLeadTime(usize),
    #[error("period index {index} outside the valid range {lo}..={hi}")]
    OutOfRange { index: usize, lo: usize, hi: usize },
    #[error("demand window too short: need {needed} periods, have {available}")]
    ShortWindow { needed: usize, available: usize },
    #[error("kernel weights vanished; lead estimate {0} is outside the modelled range")]
    KernelUnderflow(f64),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("no evaluable periods: first arrival on path {path} is at or after the horizon end")]
    NoEvaluablePeriods { path: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
