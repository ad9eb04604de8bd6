use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A spectral or image series could not reach the requested tolerance.
    #[error("series truncation failed after {terms} terms: tail bound {achieved:e} > requested {requested:e}")]
    TruncationFailure {
        terms: usize,
        achieved: f64,
        requested: f64,
    },

    /// Numerical integration did not converge; carries the best estimate.
    #[error("quadrature failed to converge: estimate {estimate:e} with error bound {error_bound:e}")]
    QuadratureFailure { estimate: f64, error_bound: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("radial operator evaluated at a pole (r = {r:e}) with series fallback disabled")]
    Pole { r: f64 },

    #[error("operator needs {needed} derivatives but only {available} are available")]
    InsufficientDerivatives { needed: usize, available: usize },

    #[error("extrapolation unstable; raw sequence {sequence:?}")]
    ExtrapolationUnstable { sequence: Vec<f64> },

    #[error("root bracket invalid: f({lo}) = {f_lo:e}, f({hi}) = {f_hi:e}")]
    BracketFailure { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
