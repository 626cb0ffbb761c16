use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    #[error("normalization undefined: spread of point norms is zero")]
    NormalizationUndefined,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("too few points: need at least {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("degenerate neighborhood around point {index}")]
    DegenerateNeighborhood { index: usize },

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("taxel penetrates the object by {depth:.4} mm")]
    PenetrationTooDeep { depth: f64 },

    #[error("no contact within {travel:.1} mm of travel")]
    NoContact { travel: f64 },

    #[error("interaction mode requires the palm to be in contact")]
    ModeRequiresContact,

    #[error("cloud carries no timestamps")]
    MissingTimestamps,

    #[error("sample generation failed after {attempts} attempts")]
    GenerationFailed { attempts: usize },

    #[error("no primitive class reached the inlier threshold")]
    FitFailed,

    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),

    #[error("timed out after {seconds:.1} s waiting for {path}")]
    Timeout { path: PathBuf, seconds: f64 },

    #[error("completer contract violation: {0}")]
    ContractViolation(String),

    #[error("no predicted point exceeds the coverage threshold")]
    NothingToExplore,

    #[error("no feasible candidate after {attempts} sampling rounds")]
    NoFeasibleCandidate { attempts: usize },

    #[error("schema mismatch in {path}: expected version {expected}, found {found}")]
    SchemaMismatch {
        path: PathBuf,
        expected: u32,
        found: String,
    },

    #[error("no episode logs in {path}")]
    NoEpisodeLogs { path: PathBuf },

    #[error("malformed PLY: {0}")]
    Ply(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

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
