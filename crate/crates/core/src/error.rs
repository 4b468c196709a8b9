use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer {layer}: expected {expected}, got {got}")]
    Shape {
        layer: usize,
        expected: String,
        got: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid pattern: {0}")]
    Pattern(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("junction {0} is not linear")]
    NonlinearJunction(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("divergence at iteration {iteration}: parameter magnitude {magnitude:e} exceeds limit")]
    Diverged { iteration: usize, magnitude: f64 },

    #[error("initialization failed after {attempts} attempts: {reason}; try a smaller variance")]
    Initialization { attempts: usize, reason: String },

    #[error("target matrix carries no SVD factors")]
    MissingSvd,

    #[error("point is not stationary: gradient norm {grad_norm:e} exceeds threshold {threshold:e}")]
    NotStationary { grad_norm: f64, threshold: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
