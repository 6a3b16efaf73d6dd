//! Equilibrium time correlations, slow-mode projection and the transport
//! coefficients built from them.

pub mod analysis;
pub mod ensemble;
pub mod integrate;
pub mod observables;
pub mod projector;
pub mod series;

pub use projector::{build_projector, subtract_slow_modes, ProjectionBasis};
pub use series::{time_correlation, three_current_correlation, CorrelationAccumulator, GriddedSeries};
