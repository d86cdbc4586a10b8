//! Transient frequency control for lossless power networks.
//!
//! The crate simulates swing dynamics in edge coordinates under a
//! distributed barrier controller and computes the accompanying
//! certificates: synchronization test, energy level sets, attractivity
//! envelopes, control-effort bounds and robustness margins.

pub mod bounds;
pub mod cli;
pub mod controller;
pub mod energy;
pub mod equilibrium;
pub mod error;
pub mod network;
pub mod simulator;
pub mod state;

pub use controller::{ClassK, ControlLaw, ControlledBusSpec, UncertaintyBounds};
pub use energy::EnergyContext;
pub use equilibrium::EquilibriumInfo;
pub use error::{Error, Result};
pub use network::{load_network, PowerNetwork};
pub use state::SystemState;
