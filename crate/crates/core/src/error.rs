//! Error type shared by every numerical route.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("derivative of order {order} is not available for model `{model}`")]
    UnsupportedOrder { model: String, order: usize },

    #[error("eigensolver failed: {0}")]
    Eigensolver(String),

    #[error("power iteration did not converge after {iters} steps (last ratio change {delta:e}); the dominant mode may be a complex pair, use the dense eigendecomposition")]
    NoConvergence { iters: usize, delta: f64 },

    #[error("parameter {lambda} is within {distance:e} of the pole 1/nu = {pole}")]
    PoleProximity { lambda: f64, pole: f64, distance: f64 },

    #[error("degenerate roots: {0}")]
    Degenerate(String),

    #[error("ill-conditioned system (condition estimate {cond:e}); reduce the truncation order")]
    IllConditioned { cond: f64 },

    #[error("series instability: coefficient magnitude {0:e}")]
    SeriesInstability(f64),

    #[error("expansion is not decaying: |delta_1| = {0} >= 1")]
    NotDecaying(f64),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("no stable roots: {0}")]
    NoStableRoots(String),

    #[error("no root: {0}")]
    NoRoot(String),
}

pub type Result<T> = std::result::Result<T, Error>;
