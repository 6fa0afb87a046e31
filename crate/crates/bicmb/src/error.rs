use thiserror::Error;

/// Crate-wide error type. Variants follow the failure classes of the public
/// operations: bad caller input, bad configuration, broken internal contracts,
/// and searches that are infeasible or exhausted.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("search space too large: {0}")]
    Feasibility(String),

    #[error("search bound exceeded: {0}")]
    BoundExceeded(String),

    #[error("no error events found up to weight {max_weight}")]
    NoEvents { max_weight: u32 },

    #[error("slope window error: {0}")]
    Window(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
