//! Balanced metrics, the balancing flow and the Donaldson heat flow for split
//! bundles over the Riemann sphere.

pub mod bergman;
pub mod cli;
pub mod error;
pub mod fields;
pub mod flows;
pub mod io;
pub mod linalg;
pub mod manifold;

pub use error::{Error, Result};
