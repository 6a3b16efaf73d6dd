//! Ghost-effect hydrodynamics on a periodic torus: the low-Mach system
//! ∇P = 0, continuity, ρ(∂ₜu + u·∇u) + ∇𝔭 = ∇·(τ⁽¹⁾ − τ⁽²⁾) and the energy
//! equation, with a pluggable state equation and transport coefficients.

pub mod error;
pub mod model;
pub mod operators;
pub mod solver;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use model::{Coefficient, FluxForm, Forcing, SolverConfig, SolverMode, TransportModel};
pub use solver::{Diagnostics, Solver};
pub use spectral::Spectral;
pub use state::FluidState;
