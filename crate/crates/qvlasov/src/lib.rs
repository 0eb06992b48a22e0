//! Numerical kernels for checking the semiclassical and mean-field limits of
//! the one-dimensional screened Coulomb Hartree equation towards
//! Vlasov-Poisson.

pub mod error;
pub mod grid;
pub mod hartree;
pub mod moments;
pub mod nbody;
pub mod phase_space;
pub mod potential;
pub mod vlasov;

pub use error::{Error, Result};
