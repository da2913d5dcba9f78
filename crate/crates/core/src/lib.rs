//! Numerical verification of improved Poincaré–Hardy, weighted Hardy and
//! Caffarelli–Kohn–Nirenberg inequalities on rotationally symmetric model
//! manifolds, plus best-constant estimation for single-mode Rayleigh
//! quotients.

pub mod besselpairs;
pub mod cli;
pub mod error;
pub mod functionals;
pub mod geometry;
pub mod profiles;
pub mod quadrature;
pub mod sharpness;
pub mod verifier;

pub use error::{Error, Result};
