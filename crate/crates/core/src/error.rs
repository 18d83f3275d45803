use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Argument outside the domain of the requested quantity.
    #[error("domain error: {0}")]
    Domain(String),

    /// Root bracketing for the critical radius failed.
    #[error("no critical radius in [{lo:e}, {hi:e}]: potential violates the growth assumptions")]
    Unsolvable { lo: f64, hi: f64 },

    #[error("quadrature did not converge: estimated error {achieved:e} > requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("unknown potential `{0}`")]
    UnknownPotential(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("singular configuration: particles {0} and {1} coincide")]
    Singular(usize, usize),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
