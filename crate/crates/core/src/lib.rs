//! Response pdf of a scalar ODE driven by additive coloured Gaussian noise.

pub mod closures;
pub mod error;
pub mod evolve;
pub mod gaussmoments;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod montecarlo;
pub mod oracle;
pub mod poly;
pub mod pufem;
pub mod quadrature;

pub use error::{Error, Result};
