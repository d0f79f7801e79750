use thiserror::Error;

/// Errors raised by the physics and emulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level {level} out of range for {n_levels} retained levels")]
    LevelOutOfRange { level: usize, n_levels: usize },

    #[error("charge-basis truncation n_cut = {n_cut} insufficient: highest level moved by {relative_shift:.3e} relative on doubling")]
    TruncationInsufficient { n_cut: usize, relative_shift: f64 },

    #[error("frequency {omega:.6e} rad/s lies inside the excluded qubit-peak band around {omega_q:.6e} rad/s")]
    QubitPeak { omega: f64, omega_q: f64 },

    #[error("pole: {0}")]
    Pole(String),

    #[error("quadrature did not converge: estimated relative error {achieved:.3e} > {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("negative rate {rate} for transition {initial} -> {final_level}")]
    NegativeRate { initial: usize, final_level: usize, rate: f64 },

    #[error("probability vector is not stochastic: {0}")]
    NonStochastic(String),

    #[error("config error at {path}: {message}")]
    Config { path: String, message: String },

    #[error("non-identifiable fit: flat likelihood along {parameter}")]
    NonIdentifiable { parameter: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
