use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signals live on different sample grids")]
    GridMismatch,

    #[error("time shift {tau} is not a multiple of the grid step {dt}")]
    Alignment { tau: f64, dt: f64 },

    #[error("window mass outside the grid is {tail:e} (limit {limit:e})")]
    Truncation { tail: f64, limit: f64 },

    #[error("window samples are all zero")]
    DegenerateWindow,

    #[error("invalid scale factor {0}; must be positive")]
    InvalidScale(f64),

    #[error("coverage: {0}")]
    Coverage(String),

    #[error("domain: {0}")]
    Domain(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("density integrates to {mass} (expected 1 within {tol:e})")]
    Normalization { mass: f64, tol: f64 },

    #[error("unsupported case: {0}")]
    UnsupportedCase(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by the computation.
    pub fn is_config(&self) -> bool {
        !matches!(self, Error::Numerical(_) | Error::Io(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
