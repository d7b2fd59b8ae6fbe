//! Monotone mean-variance investment and reinsurance for an insurer exposed to
//! catastrophe risk with a shot-noise claim intensity.

pub mod coefficients;
pub mod diffusion;
pub mod error;
pub mod frontier;
pub mod model;
pub mod quad;
pub mod simulate;
pub mod strategies;
pub mod verify;

pub use error::{Error, Result, Violation};
