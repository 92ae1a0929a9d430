use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid function: {0}")]
    InvalidFunction(String),

    #[error("flux normalisation error: A(0) = {0}, expected 0")]
    Normalization(f64),

    #[error("resolution error: N = {n_cells} must exceed 2*m0 = {}", 2 * .m0)]
    Resolution { n_cells: usize, m0: u32 },

    #[error("linear solver error: {0}")]
    Solver(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("ill-posed covariance: {0}")]
    IllPosed(String),

    #[error("step {step} failed: {source}")]
    Step {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("replica {replica} failed: {source}")]
    Replica {
        replica: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for failures caused by the user's input rather than the numerics.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config { .. } | Error::Domain(_) | Error::Normalization(_) | Error::Resolution { .. } => true,
            Error::Step { source, .. } | Error::Replica { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
