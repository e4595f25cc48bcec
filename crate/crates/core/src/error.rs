use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("row {0} of the constraint matrix is zero")]
    ZeroRow(usize),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("sketch {sketch} has negative entry at position {entry}")]
    NegativeSketch { sketch: usize, entry: usize },

    #[error("sketch {0} has zero weight (A^T S is zero)")]
    DegenerateSketch(usize),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("parameters outside region {region}: violated {inequality}")]
    RegionViolation {
        region: &'static str,
        inequality: String,
    },

    #[error("the feasible set is empty")]
    Infeasible,

    #[error("{what} too large: {found} exceeds the limit of {limit}")]
    TooLarge {
        what: &'static str,
        limit: usize,
        found: usize,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("malformed Matrix Market header: {0}")]
    MalformedHeader(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("entry ({row}, {col}) at line {line} is outside a {nrows}x{ncols} matrix")]
    EntryOutOfBounds {
        line: usize,
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad input files or arguments rather than numerics.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::MalformedHeader(_)
                | Error::Parse { .. }
                | Error::EntryOutOfBounds { .. }
                | Error::Io(_)
                | Error::Json(_)
        )
    }
}
