//! Simulation of a heavy test particle in a periodic potential under
//! momentum-jump collisions, together with the limit objects of its
//! diffusive rescaling.

pub mod error;
pub mod harness;
pub mod limits;
pub mod model;
pub mod pdmp;
pub mod quad;
pub mod rng;
pub mod splitting;
pub mod stats;
pub mod volterra;

pub use error::{Error, Result};
