//! Numerical laboratory for the one-dimensional defocusing nonlinear
//! Schrodinger equation
//!
//! ```text
//! i u_t - A u = |u|^(beta-1) u,        A v = -D_b (a(x) D_b v) + c(x) v,
//! D_b = d/dx - i b(x),                 beta > 5,
//! ```
//!
//! with fully variable coefficients `(a, b, c)` on a periodic box.  The crate
//! provides the spectral grid calculus, coefficient admissibility checkers,
//! the discrete operator and its energy functionals, the gauge and Liouville
//! reductions, linear and nonlinear propagators, the exponent algebra and
//! bootstrap root geometry, scattering and dispersion diagnostics, the virial
//! machinery with explicit cutoff weights, and a desk-scale profile
//! decomposition, plus a scenario-driven CLI binding it all together.
//!
//! Everything is deterministic given a seed, and batch work routes through
//! [`par`], which is data-parallel under the `parallel` feature (default) and
//! sequential otherwise; outputs are byte-identical either way.

pub mod coeffs;
pub mod diagnostics;
pub mod exponents;
pub mod grid;
pub mod io;
pub mod operator;
pub mod par;
pub mod profiles;
pub mod propagate;
pub mod scenario;
pub mod transforms;
pub mod virial;

pub use grid::{Grid, GridFunction, Norm};

pub type C64 = num_complex::Complex64;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("grid point count must be a power of two >= 8, got {0}")]
    BadPointCount(usize),
    #[error("grid half-length must be positive, got {0}")]
    BadHalfLength(f64),
    #[error("grid mismatch: expected {expected} points, got {got}")]
    GridMismatch { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("coefficient a must stay positive, min sampled value {0}")]
    NonPositiveA(f64),
    #[error("k + V must stay positive, min sampled value {0}")]
    NonPositiveShiftedPotential(f64),
    #[error("nonlinearity power beta must exceed 5, got {0}")]
    BetaTooSmall(f64),
    #[error("virial weight needs 2R < L and R > 1, got R = {r}, L = {l}")]
    WeightDoesNotFit { r: f64, l: f64 },
    #[error("virial series requires the gauged frame, but b is not identically zero (max |b| = {0})")]
    MagneticFieldPresent(f64),
    #[error("eigendecomposition oracle limited to N <= {max}, got {got}")]
    OracleTooLarge { max: usize, got: usize },
    #[error("eigendecomposition oracle requires b = 0 (symmetric matrix); gauge first")]
    OracleNeedsZeroB,
    #[error("time {0} is not among the recorded trajectory times")]
    TimeNotRecorded(f64),
    #[error("time stepper failed: {0}")]
    StepperFailure(String),
    #[error("profile extraction diverged: remainder norm grew from {from:.3e} to {to:.3e}")]
    ExtractionDiverged { from: f64, to: f64 },
    #[error("config error: {0}")]
    Config(String),
    #[error("experiment `{name}` failed: {reason}")]
    Experiment { name: String, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
