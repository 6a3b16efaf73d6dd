//! Particle-side components of the workbench: Hamiltonian dynamics, Gibbs
//! sampling, empirical fields and currents, and the equilibrium correlation
//! engine that turns trajectories into transport coefficients.

pub mod correlators;
pub mod eos;
pub mod error;
pub mod fields;
pub mod gibbs;
pub mod grid;
pub mod md;

pub use error::{Error, Result};
