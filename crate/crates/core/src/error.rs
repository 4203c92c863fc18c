use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate (zero-length or non-finite) vector")]
    DegenerateVector,

    #[error("degenerate quaternion")]
    DegenerateQuaternion,

    #[error("squal {0} exceeds sensor maximum of 169")]
    SqualOutOfRange(u8),

    #[error("invalid {name}: {reason}")]
    InvalidConfig { name: String, reason: String },

    #[error("timestamp {current} ms precedes previous timestamp {previous} ms")]
    OutOfOrder { previous: u32, current: u32 },

    #[error("time step must be positive, got {0} s")]
    NonPositiveDt(f64),

    #[error("distance {0} mm outside the modeled 0-5 mm lift range")]
    DistanceOutOfRange(f64),

    #[error("length mismatch: {left} vs {right} samples")]
    LengthMismatch { left: usize, right: usize },

    #[error("timestamp mismatch at sample {index}: {left} ms vs {right} ms")]
    TimestampMismatch { index: usize, left: u32, right: u32 },

    #[error("empty input")]
    Empty,

    #[error("ground-truth step {index} leaves the touch plane by {offset} mm")]
    OffPlane { index: usize, offset: f64 },

    #[error("campaign is missing {} cell(s): {}", .0.len(), .0.join(", "))]
    MissingCells(Vec<String>),

    #[error("ANOVA needs at least 2 groups with at least 2 values each")]
    AnovaShape,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("json: {0}")]
    Json(String),
}

impl Error {
    pub(crate) fn config(name: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            name: name.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
