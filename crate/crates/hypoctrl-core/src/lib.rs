//! Numerical toolkit for accretive quadratic differential operators.
//!
//! The crate analyses complex quadratic symbols on phase space (Hamilton
//! maps, singular spaces, Kalman indices), propagates the associated
//! hypoelliptic semigroups on grids and in a truncated Hermite basis,
//! measures dissipation and spectral-inequality constants empirically,
//! evaluates explicit observability-cost constants, and synthesises
//! desk-scale null controls by the Hilbert Uniqueness Method.

pub mod control;
pub mod error;
pub mod grid;
pub mod hermite;
pub mod linalg;
pub mod lr_cost;
pub mod phase_space;
pub mod region;
pub mod report;
pub mod semigroup;

pub use error::CoreError;

/// Shorthand used throughout the crate.
pub type Result<T> = std::result::Result<T, CoreError>;

pub type C64 = num_complex::Complex64;
pub type CMatrix = nalgebra::DMatrix<C64>;
pub type CVector = nalgebra::DVector<C64>;
pub type RMatrix = nalgebra::DMatrix<f64>;
pub type RVector = nalgebra::DVector<f64>;
