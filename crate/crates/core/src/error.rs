use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can surface. Each variant maps to a stable
/// machine-readable code through [`Error::code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid spline spec: {0}")]
    InvalidSpec(String),

    #[error("knot collision: {0}")]
    KnotCollision(String),

    #[error("missing mandatory column `{0}`")]
    Schema(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("domain error at row {row}: {message}")]
    Domain { row: usize, message: String },

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("covariate `{0}` has zero variance")]
    DegenerateCovariate(String),

    #[error("non-finite linear predictor for subject {subject}")]
    Overflow { subject: usize },

    #[error("problem size {size} exceeds the full-Hessian guard of {guard}")]
    Capacity { size: usize, guard: usize },

    #[error("block {block} could not be factorized after ridge escalation")]
    Conditioning { block: usize },

    #[error(
        "log-likelihood decreased by {decrease:.3e} at iteration {iteration}; lower the learning rate"
    )]
    AscentViolation { iteration: usize, decrease: f64 },

    #[error("gradient ascent diverged at iteration {iteration}; lower the step size")]
    StepSize { iteration: usize },

    #[error("contrast information for covariate {covariate} is singular")]
    RankDeficient { covariate: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("fold construction failed: {0}")]
    FoldConstruction(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidSpec(_) => "INVALID_SPEC",
            Error::KnotCollision(_) => "KNOT_COLLISION",
            Error::Schema(_) => "SCHEMA",
            Error::Parse { .. } => "PARSE",
            Error::Domain { .. } => "DOMAIN",
            Error::InvalidData(_) => "INVALID_DATA",
            Error::DegenerateCovariate(_) => "DEGENERATE_COVARIATE",
            Error::Overflow { .. } => "OVERFLOW",
            Error::Capacity { .. } => "CAPACITY",
            Error::Conditioning { .. } => "CONDITIONING",
            Error::AscentViolation { .. } => "ASCENT_VIOLATION",
            Error::StepSize { .. } => "STEP_SIZE",
            Error::RankDeficient { .. } => "RANK_DEFICIENT",
            Error::Numerical(_) => "NUMERICAL",
            Error::FoldConstruction(_) => "FOLD_CONSTRUCTION",
            Error::Usage(_) => "USAGE",
            Error::Io(_) => "IO",
            Error::Csv(_) => "CSV",
            Error::Json(_) => "JSON",
        }
    }
}
