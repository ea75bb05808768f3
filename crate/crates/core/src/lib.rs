//! Numerical toolkit for spreading-depolarization waves in a
//! neuron-astrocyte reaction-diffusion model: network simulation, critical
//! manifold analysis, and semi-analytic wave-speed computation.

pub mod error;
pub mod fenichel;
pub mod integrate;
pub mod io;
pub mod jet;
pub mod linalg;
pub mod manifold;
pub mod model;
pub mod param_manifold;
pub mod params;
pub mod pde;
pub mod singular;

pub use error::{Error, Result};
pub use jet::{Jet, Real};
pub use params::ParameterSet;
