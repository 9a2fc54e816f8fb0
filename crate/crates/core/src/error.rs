use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rejected input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The control matrix cannot reach every direction of the state space.
    #[error("configuration error: {0}")]
    Config(String),

    /// A transition row or model structure is not a valid interval MDP.
    #[error("abstraction integrity violated: {0}")]
    Integrity(String),

    /// The controller was asked for an input the abstraction promised but no
    /// admissible input exists.
    #[error("controller integrity violated: {0}")]
    Controller(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_check(ok: bool, what: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension(what()))
    }
}
