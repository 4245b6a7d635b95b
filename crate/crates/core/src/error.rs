use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {point} lies outside the domain")]
    OutsideDomain { point: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid domain: {0}")]
    Domain(String),

    #[error("grid is empty: {0}")]
    EmptyGrid(String),

    #[error("unknown catalog weight `{0}`")]
    Catalog(String),

    #[error("monomial {alpha:?} is not square-integrable for m = {m}")]
    ExcludedMonomial { alpha: Vec<usize>, m: u32 },

    #[error("quadrature did not reach relative tolerance {tol:e}; achieved {achieved:e} with {nodes} nodes")]
    Accuracy { tol: f64, achieved: f64, nodes: usize },

    #[error("Gram matrix is ill-conditioned: {0}")]
    Conditioning(String),

    #[error("engine mismatch: {0}")]
    EngineMismatch(String),

    #[error("envelope iteration stalled after {iterations} iterations (last gap {gap:e})")]
    Iteration { iterations: usize, gap: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
