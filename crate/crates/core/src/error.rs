use thiserror::Error;

/// Errors raised by the estimators and model constructors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("orbit hit the singularity set at step {step}")]
    Singularity { step: usize },

    #[error("hole is not compatible with the requested symbolic level: {0}")]
    IncompatibleHole(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("only {survivors} samples survive to step {step} (need at least {required})")]
    InsufficientSurvivors {
        survivors: u64,
        step: usize,
        required: u64,
    },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("survivor measure routes disagree: L1 distance {0:e}")]
    NonAgreement(f64),

    #[error("divergence: {0}")]
    Divergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
