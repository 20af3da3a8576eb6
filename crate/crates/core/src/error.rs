use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("mesh has no {0}")]
    EmptyMesh(&'static str),
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {0} is degenerate (repeated vertex index)")]
    DegenerateFace(usize),
    #[error("mesh has zero extent")]
    ZeroExtent,
    #[error("all faces are degenerate (zero total area)")]
    ZeroArea,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("requested {requested} samples from a cloud of {available}")]
    TooManySamples { requested: usize, available: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("point {index} lies on the cage surface; mean value coordinates are undefined")]
    OnCage { index: usize },
    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss term `{0}`")]
    NonFiniteLoss(&'static str),
    #[error("backward called before a forward pass was recorded")]
    BackwardBeforeForward,
    #[error("{keypoints} keypoints cannot share {cage_vertices} cage vertices (M would be 0)")]
    InfluenceTooSparse {
        keypoints: usize,
        cage_vertices: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("not enough samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("training diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
