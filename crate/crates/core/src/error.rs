use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("Hurst index must lie strictly inside (0, 1), got {0}")]
    InvalidHurst(f64),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid has no index at coordinate 0 (left = {left}, spacing = {spacing})")]
    NotAnchored { left: f64, spacing: f64 },
    #[error("covariance is not positive definite: smallest pivot {pivot:e} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error(
        "circulant embedding has negative eigenvalue {min:e} (max {max:e}) after {doublings} doublings; \
         increase the embedding size"
    )]
    EmbeddingFailed { min: f64, max: f64, doublings: u32 },
    #[error("index {index} out of range for {what} (valid {lo}..={hi})")]
    IndexOutOfRange { what: &'static str, index: usize, lo: usize, hi: usize },
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: &'static str, reason: String },
    #[error("trend is outside the range of the covariance: residual {residual:e} (relative {relative:e})")]
    OutOfRange { residual: f64, relative: f64 },
    #[error("covariance irreparably indefinite: smallest eigenvalue {0:e}")]
    Indefinite(f64),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// `std::io::Error` is neither `Clone` nor `PartialEq`; keep its message only.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct IoError(pub String);

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(IoError(e.to_string()))
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> LabError {
    LabError::InvalidArgument { field, reason: reason.into() }
}
