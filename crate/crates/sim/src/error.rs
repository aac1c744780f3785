use thiserror::Error;

/// Errors from the simulator layer.
#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Core(#[from] jackmac::Error),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("tensor file: {0}")]
    TensorFile(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("mode {mode} is not supported by the {unit} unit")]
    UnsupportedMode { mode: String, unit: String },
}

pub type Result<T> = std::result::Result<T, SimError>;
