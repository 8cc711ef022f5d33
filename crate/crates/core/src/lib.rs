//! Distribution of the maximum of a first-order moving average
//! `X_i = e_i + rho e_{i-1}` with i.i.d. innovations.
//!
//! `u_n = P(max(X_1..X_n) <= x)` is computed by several independent routes:
//! repeated integration ([`recurrence`]), a Bell-polynomial convolution,
//! a Nyström eigen-expansion of the underlying Fredholm operator
//! ([`spectral`], [`negrho`]), Taylor-series eigen-solvers ([`series`]) and
//! Monte Carlo ([`montecarlo`]).

pub mod error;
pub mod innovations;
pub mod linalg;
pub mod montecarlo;
pub mod negrho;
pub mod quadrature;
pub mod recurrence;
pub mod series;
pub mod spectral;

pub use error::{Error, Result};
pub use faer::c64;
pub use innovations::InnovationModel;
pub use quadrature::QuadratureGrid;
pub use recurrence::{GridSpec, Ma1Problem, MaxCdfResult, Method};
