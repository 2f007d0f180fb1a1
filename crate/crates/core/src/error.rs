use thiserror::Error;

/// Errors raised across the simulator and the theory engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("position ({x:.6}, {y:.6}) is outside the grid interior")]
    Boundary { x: f64, y: f64 },

    #[error("explicit step unstable: {0}")]
    StepSize(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("out of range: {0}")]
    Range(String),

    #[error("degenerate spec: {0}")]
    Degenerate(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("singular parameters: {0}")]
    Singular(String),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
