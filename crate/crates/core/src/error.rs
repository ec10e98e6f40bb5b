use thiserror::Error;

/// Every failure the engine can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("projection did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("constraint jacobian is rank deficient at the current iterate")]
    RankDeficient,
    #[error("point lies on the submanifold (distance {rho:e}); fiber direction undefined")]
    OnManifold { rho: f64 },
    #[error("derivative order {order} exceeds the numerical limit {max}")]
    OrderTooHigh { order: usize, max: usize },
    #[error("coefficient fit is ill conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },
    #[error("shape `{0}` has no quadrature rule")]
    ShapeUnsupported(String),
    #[error("fiber dimension {0} is not supported")]
    DimUnsupported(usize),
    #[error("second fundamental form needs codimension 1, got {0}")]
    CodimUnsupported(usize),
    #[error("{what} did not converge (change {change:e})")]
    NotConverged { what: String, change: f64 },
    #[error("expansion coefficient of order {order} unavailable: {reason}")]
    ExpansionUnavailable { order: i32, reason: String },
    #[error("support radius {support} exceeds tube radius {tube}")]
    SupportExceedsTube { support: f64, tube: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn schema(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed input rather than numerics.
    pub fn is_schema(&self) -> bool {
        matches!(self, Error::Schema { .. })
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
