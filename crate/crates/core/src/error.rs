use std::path::PathBuf;

/// Errors raised anywhere in the fusion pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}:{line}:{column}: cannot parse cell {token:?}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        token: String,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("modality {modality:?}: subject {subject} is only partially missing")]
    PartialMissing { modality: String, subject: usize },
    #[error("subject {0} is missing in every modality")]
    SubjectUnobserved(usize),
    #[error("requested {requested} components but the data only supports {available}")]
    RankBudget { requested: usize, available: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("modality {0} is all zero")]
    DegenerateModality(String),
    #[error("only {found} complete-case subjects, need at least {required}")]
    TooFewCompleters { found: usize, required: usize },
    #[error("row {row} of modality {modality:?} has fewer than 2 observed subjects")]
    TooFewObserved { modality: String, row: usize },
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("unmixing failed: {0}")]
    EngineFailure(String),
    #[error("iteration budget exhausted after {attempts} failed attempts")]
    BudgetExhausted { attempts: usize },
    #[error("missing data present: {0}")]
    MissingData(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
