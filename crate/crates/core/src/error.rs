use thiserror::Error;

pub type Result<T> = std::result::Result<T, CoreError>;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("degenerate mesh")]
    DegenerateMesh,
    #[error("containment undefined: mesh is not watertight")]
    NotWatertight,
    #[error("empty reference cloud")]
    EmptyReference,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("settle failed: object tunneled below support")]
    SettleFailed,
    #[error("no valid configuration after {0} rejections")]
    NoValidConfiguration(usize),
    #[error("prior grasp optimizer failed on {failures} of {attempts} attempts")]
    OptimizerFailed { failures: usize, attempts: usize },
    #[error("training diverged at step {step}")]
    Divergence { step: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
