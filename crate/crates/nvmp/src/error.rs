use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Dimensions or block indices are inconsistent.
    #[error("structural error: {0}")]
    Structural(String),

    /// A factorization or solve failed.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// −H (or −2λ₂) stayed indefinite after the full jitter ladder.
    #[error("singular system: {context} (jitter reached {jitter:e}, min pivot {min_pivot:e})")]
    Singular {
        context: String,
        jitter: f64,
        min_pivot: f64,
    },

    /// An integrand or link produced a non-finite value.
    #[error("evaluation error at node {node}: {msg}")]
    Evaluation { node: f64, msg: String },

    /// The ELBO became non-finite.
    #[error("non-finite ELBO at iteration {iteration}")]
    NonFiniteElbo { iteration: usize },

    /// Invalid configuration value or key.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input file.
    #[error("parse error in {block} (line {line}): {msg}")]
    Parse {
        block: String,
        line: u64,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }
}
