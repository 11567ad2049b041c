//! Numerical toolkit for segregated fractional profiles: log-polar
//! finite-volume discretization, angular spectra, a nonlinear boundary
//! solver, monotone functionals, asymptotic extraction and kernel checks.

pub mod asymptotics;
pub mod cli;
pub mod core;
pub mod error;
pub mod kernels;
pub mod monotone;
pub mod operator;
pub mod solver;
pub mod spectral;
pub mod suite;

pub use error::{Error, Result};
