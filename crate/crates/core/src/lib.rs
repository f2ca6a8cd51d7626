//! Force-pattern identification over a physics basis library.
//!
//! An observed trajectory is regressed onto products of physically motivated
//! time functions (polynomials, harmonics, exponential decay, logarithmic
//! growth). Linear coefficients are eliminated exactly; the few nonlinear
//! inner parameters are refined by a damped Gauss-Newton search. Once a
//! model is locked, a [`track::Tracker`] checks incoming samples against its
//! predictions and refits when they stop matching.

pub mod basis;
pub mod error;
pub mod fit;
pub mod scenario;
pub mod track;
pub mod trajectory;

pub use error::{Error, Result};
