//! Numerical probes for sectional-hyperbolic flows: integration, tangent
//! dynamics, equilibria, dominated splittings, cross-sections and
//! expansiveness tests.

pub mod equilibria;
pub mod error;
pub mod expansive;
pub mod flow;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod section;
pub mod splitting;

pub use error::{Error, Result};
pub use model::VectorFieldModel;
