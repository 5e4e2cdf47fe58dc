use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Matrix shapes or column lengths disagree.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An MCMC chain hit a numerical failure and was stopped.
    #[error("chain aborted at iteration {iteration}: {reason}")]
    ChainAborted { iteration: usize, reason: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    /// A statistical test could not be carried out (e.g. degenerate binning).
    #[error("test error: {0}")]
    Test(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
