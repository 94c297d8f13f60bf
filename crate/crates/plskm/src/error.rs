//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong while parsing models, preparing data,
/// fitting, or writing results.
#[derive(Debug, Error)]
pub enum Error {
    /// Syntax error in a model description file.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A model failed validation; the report lists every violation.
    #[error("invalid model:\n{0}")]
    InvalidModel(String),

    /// Two matrices (or a matrix and a name list) do not agree on shape.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: String,
        expected: String,
        found: String,
    },

    /// A data column has no variance, so it cannot be standardized.
    #[error("column {name:?} is constant; it cannot be standardized")]
    ConstantColumn { name: String },

    /// Fewer rows than the operation can work with.
    #[error("{context} needs at least {minimum} rows, found {found}")]
    TooFewRows {
        context: String,
        minimum: usize,
        found: usize,
    },

    /// A cluster lost all of its members where that is not repairable.
    #[error("cluster {cluster} has no members")]
    EmptyCluster { cluster: usize },

    /// A linear system was too ill-conditioned to solve reliably.
    #[error("singular system in {context}")]
    Singular { context: String },

    /// Same as [`Error::Singular`], tagged with the alternation sweep.
    #[error("singular system in {context} at iteration {iteration}")]
    SingularAt {
        context: String,
        iteration: usize,
    },

    /// Latent scores lost all variation, so the inner weighting is undefined.
    #[error("latent scores collapsed (no variation across units) at iteration {iteration}")]
    Collapse { iteration: usize },

    /// Caller-supplied options are out of range.
    #[error("invalid options: {0}")]
    InvalidOptions(String),

    /// A column required by the model is missing from the data.
    #[error("data is missing column {name:?} required by the model")]
    MissingColumn { name: String },

    /// A CSV cell could not be read as a number.
    #[error("row {row}, column {column:?}: cannot read {token:?} as a number")]
    NonNumeric {
        row: usize,
        column: String,
        token: String,
    },

    /// A column holds no observed values at all, so no mean can be imputed.
    #[error("column {name:?} has no observed values to impute from")]
    AllMissing { name: String },

    /// Missing values are present but no imputation was requested.
    #[error("column {name:?} has {count} missing values; enable imputation or clean the data")]
    MissingValues { name: String, count: usize },

    /// A simulation or grid configuration is inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Every restart of a multistart fit failed.
    #[error("all {count} starts failed; first error: {first}")]
    AllStartsFailed { count: usize, first: String },

    /// Malformed CSV input.
    #[error("csv error: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("grid file error: {0}")]
    Toml(String),
}
