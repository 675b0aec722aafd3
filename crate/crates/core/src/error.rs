use thiserror::Error;

/// Errors raised while building surfaces, assembling systems or evaluating
/// theta functions.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cannot parse rational {input:?}: {reason}")]
    ParseRational { input: String, reason: &'static str },

    #[error("internal error: {0}")]
    Internal(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("resource limit exceeded: estimated {estimated} nonzeros, cap is {cap}")]
    ResourceLimit { estimated: u64, cap: u64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("requested precision unreachable: lattice radius {radius} exceeds cap {cap}")]
    PrecisionUnreachable { radius: usize, cap: usize },

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
