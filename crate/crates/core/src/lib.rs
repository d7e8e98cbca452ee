//! Numerical laboratory for arbitrage, deflators and equilibrium in
//! markets whose price processes can explode or fail to be true martingales.

pub mod arbtests;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod follmer;
pub mod lattice;
pub mod processes;
pub mod sde;
pub mod stats;

pub use error::{LabError, Result};
