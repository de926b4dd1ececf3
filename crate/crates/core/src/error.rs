use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("layout contains no fibrils: {0}")]
    EmptyLayout(String),

    #[error("fibril layout invalid: {0}")]
    InvalidLayout(String),

    #[error("design vector invalid: {0}")]
    InvalidDesign(String),

    #[error("compliance matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("no attached fibril can reach the detachment load (non-detaching configuration)")]
    NonDetaching,

    #[error("stiffness pivot too small for downdate: |K_pp| = {pivot:e}")]
    DegeneratePivot { pivot: f64 },

    #[error("sampling infeasible: {0}")]
    InfeasibleSampling(String),

    #[error("acceptance rate {rate:.4} below floor {floor:.4} after {probed} candidates; widen bounds or change the sampling style")]
    LowAcceptanceRate { rate: f64, floor: f64, probed: usize },

    #[error("projection infeasible: {0}")]
    InfeasibleProjection(String),

    #[error("regression solve failed: {0}")]
    SingularSolve(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate:e}): loss is not finite")]
    TrainingDiverged { epoch: usize, learning_rate: f64 },

    #[error("model incompatible: {0}")]
    ModelShape(String),

    #[error("unsupported file format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("parse error in {path} at {location}: {message}")]
    Parse {
        path: String,
        location: String,
        message: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("missing upstream artifact {path}: run the `{stage}` stage first")]
    MissingStage { stage: String, path: String },

    #[error("empty results: {0}")]
    EmptyResults(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for usage/config problems, 1 for domain errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } | Error::UnsupportedVersion { .. } => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
