use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("negative time {0} (use the signed variant for diagnostics)")]
    NegativeTime(f64),

    #[error("not a kernel candidate: hermitian defect {defect:e} exceeds tolerance")]
    NotAKernel { defect: f64 },

    #[error("kernel is not completely positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotCpd { min_eigenvalue: f64 },

    #[error("unknown unit label `{0}`")]
    UnknownLabel(String),

    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),

    #[error("segment fractions in term {term} sum to {sum}, expected 1")]
    FractionMismatch { term: usize, sum: f64 },

    #[error("invalid expression: {0}")]
    InvalidExpression(String),

    #[error("lengths differ: {left} vs {right}")]
    LengthMismatch { left: f64, right: f64 },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("expression `{0}` is not a unit and cannot be split across partition intervals")]
    NotSplittable(String),

    #[error("extended generator is not conditionally CPD (min eigenvalue {min_eigenvalue:e}, {})",
        if *.numerical { "likely numerical breakdown" } else { "hypotheses of the extension violated" })]
    ExtensionRejected { min_eigenvalue: f64, numerical: bool },

    #[error("malformed generator: {0}")]
    MalformedGenerator(String),

    #[error("parse error at {line}:{column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, column, message: message.into() }
    }
}
