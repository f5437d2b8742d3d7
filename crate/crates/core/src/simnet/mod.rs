//! Deterministic discrete-event simulation: virtual time, cost models, and
//! the end-to-end runners for both protocols.

pub mod event;
pub mod runner;
pub mod timing;

pub use event::{EventQueue, SimEvent};
pub use runner::{run_baseline_sim, run_dynamic_sim, LocalEngine, ServerEval, SimClient, SimConfig};
pub use timing::{ComputeProfile, NetworkModel};
