//! Crate-wide error type.
//!
//! Every fallible operation in the pipeline returns [`Error`]. Variants are
//! grouped by what went wrong rather than by module, so the CLI can map them
//! onto its exit codes (usage, data, numeric) without inspecting strings.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor, matrix, or sequence had an incompatible shape.
    #[error("shape error: {0}")]
    Shape(String),

    /// A CSV field could not be parsed. Carries file and 1-based row number.
    #[error("parse error in {file} row {row}: {message}")]
    Parse {
        file: String,
        row: usize,
        message: String,
    },

    /// A CSV header is missing a required column.
    #[error("schema error in {file}: missing column \"{column}\"")]
    Schema { file: String, column: String },

    /// A value violated a documented range invariant.
    #[error("range error in {file} row {row}: {message}")]
    Range {
        file: String,
        row: usize,
        message: String,
    },

    /// A required calendar entry (day or month) is missing from a series.
    #[error("gap error: {0}")]
    Gap(String),

    /// Two records share a key that must be unique.
    #[error("duplicate error: {0}")]
    Duplicate(String),

    /// Cross-file referential integrity failed (e.g. yield without weather).
    #[error("coverage error: {0}")]
    Coverage(String),

    /// Samples could not be combined (mixed years or shapes).
    #[error("combination error: {0}")]
    Combination(String),

    /// An augmentation plan is inconsistent (e.g. county in two CRDs).
    #[error("plan error: {0}")]
    Plan(String),

    /// Prediction/actual rows could not be joined on (county, year).
    #[error("join error: {0}")]
    Join(String),

    /// A value outside its mathematical domain (e.g. tmin > tmax).
    #[error("domain error: {0}")]
    Domain(String),

    /// A non-finite number appeared where the pipeline requires finite values.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid run or model configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Checkpoint file is structurally invalid.
    #[error("checkpoint format error: {0}")]
    Format(String),

    /// Checkpoint file declares an unsupported version.
    #[error("checkpoint version error: found {found}, supported {supported}")]
    Version { found: u16, supported: u16 },

    /// Checkpoint file ends before its declared contents.
    #[error("checkpoint truncated: {0}")]
    Truncated(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
