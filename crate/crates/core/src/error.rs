use std::io;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report. Each variant maps onto a stable
/// numeric code used by the CLI exit status and the C ABI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid schedule: {0}")]
    Schedule(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid synthon library: {0}")]
    Library(String),

    #[error("illegal transition: {0}")]
    Transition(String),

    #[error("dead-end state: {0}")]
    DeadEnd(String),

    #[error("object is not terminal")]
    NotTerminal,

    #[error("object is terminal; no further actions")]
    Terminal,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("loss must be a scalar, got {rows}x{cols}")]
    NonScalarLoss { rows: usize, cols: usize },

    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("data pipeline: {0}")]
    DataPipeline(String),

    #[error("enumeration exceeded {limit} sequences")]
    EnumerationLimit { limit: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("unknown parameter tensor `{0}`")]
    UnknownTensor(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("missing file {path}: {source}")]
    MissingFile { path: String, source: io::Error },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable numeric code (process exit status, C status value).
    pub fn code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Schedule(_) => 2,
            Error::MissingFile { .. } | Error::Io(_) => 3,
            Error::Format(_) | Error::Json(_) => 4,
            Error::NonFinite { .. } => 5,
            Error::Library(_)
            | Error::Transition(_)
            | Error::DeadEnd(_)
            | Error::NotTerminal
            | Error::Terminal => 6,
            Error::DataPipeline(_) => 7,
            Error::Invariant(_) | Error::EnumerationLimit { .. } => 8,
            Error::Shape(_)
            | Error::NonScalarLoss { .. }
            | Error::Empty(_)
            | Error::UnknownTensor(_) => 9,
        }
    }

    /// Short machine-readable kind string.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Schedule(_) => "schedule",
            Error::Config(_) => "config",
            Error::Library(_) => "library",
            Error::Transition(_) => "transition",
            Error::DeadEnd(_) => "dead_end",
            Error::NotTerminal => "not_terminal",
            Error::Terminal => "terminal",
            Error::Shape(_) => "shape",
            Error::NonScalarLoss { .. } => "non_scalar_loss",
            Error::NonFinite { .. } => "non_finite",
            Error::Empty(_) => "empty",
            Error::DataPipeline(_) => "data_pipeline",
            Error::EnumerationLimit { .. } => "enumeration_limit",
            Error::Invariant(_) => "invariant",
            Error::UnknownTensor(_) => "unknown_tensor",
            Error::Format(_) => "format",
            Error::MissingFile { .. } => "missing_file",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
