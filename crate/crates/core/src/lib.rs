//! Simulation and analysis toolkit for multi-armed bandits whose arm means
//! drift over time.

pub mod env;
pub mod error;
pub mod gaussian;
pub mod gp;
pub mod harness;
pub mod info;
pub mod latent;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
pub use rng::SimRng;
