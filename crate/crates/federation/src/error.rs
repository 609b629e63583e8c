use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] privml_core::Error),

    #[error("transport: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed frame: {0}")]
    Malformed(String),

    #[error("authentication tag verification failed")]
    BadTag,

    #[error("measurement {0} is not whitelisted")]
    Rejected(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("provider {provider} did not respond within {seconds} s")]
    Timeout { provider: u32, seconds: f64 },

    #[error("peer closed the session")]
    Closed,

    #[error("privacy budget exhausted: epsilon {spent} exceeds target {target}")]
    BudgetExhausted { spent: f64, target: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
