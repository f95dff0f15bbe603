use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("index {index:?} out of range for grid shape {shape:?}")]
    Index { index: Vec<usize>, shape: Vec<usize> },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("state outside the model domain: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("level {level} (disturbance bound {bound}) did not converge within {iterations} iterations")]
    NonConvergence {
        level: usize,
        bound: f64,
        iterations: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
