use thiserror::Error;

use crate::spectral::SpectrumReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at byte {position}: expected {}", expected.join(" | "))]
    Syntax {
        position: usize,
        expected: Vec<String>,
    },
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("arity mismatch: expected {expected}, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("operands live on different charts")]
    ChartMismatch,
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("point {0} lies outside the chart")]
    PointOutsideChart(String),
    #[error("schema error in `{field}`: {reason}")]
    Schema { field: String, reason: String },
    #[error("`{name}` has a coefficient varying along periodic axis `{axis}`")]
    NonPeriodicCoefficient { name: String, axis: String },
    #[error("bracket flag did not stabilize")]
    FlagNotStabilized,
    #[error("operation requires every chart axis to be periodic")]
    NonPeriodicChart,
    #[error("generator `{0}` has a component transverse to the leaf axes")]
    NotProductFoliation(String),
    #[error("eigensolver hit its iteration cap after {} iterations", report.iterations)]
    NoConvergence { report: Box<SpectrumReport> },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("vector field is not tangent to the leaf factor")]
    TangencyViolation,
    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("points file: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Validation failures map to exit code 2, numerical failures to 3.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NoConvergence { .. } | Error::Io(_))
    }
}
