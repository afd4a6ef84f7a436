use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("taxonomy error: {0}")]
    Taxonomy(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("profile error: {0}")]
    Profile(String),

    #[error("recipe error: {0}")]
    Recipe(String),

    #[error("placement failed: {0}")]
    Placement(String),

    #[error("camera sampling failed: {0}")]
    Camera(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("annotation error: {0}")]
    Annotation(String),

    #[error("qa error: {0}")]
    Qa(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("pipeline error: {0}")]
    Pipeline(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
