//! Numerical spectral theory for Dirac operators on the half-line.
//!
//! The crate couples Dirac systems, Krein systems and canonical systems
//! through their shared spectral measure, and computes Szegő functions,
//! Weyl functions, entropy profiles and resonances.

pub mod dirac;
pub mod entropy;
pub mod error;
pub mod krein;
pub mod mat2;
pub mod odecore;
pub mod opuc;
pub mod potential;
pub mod quad;
pub mod resonances;
pub mod szego;
pub mod verify;

pub use error::{Error, Result};
pub use mat2::Mat2;
pub use num_complex::Complex64 as C64;
