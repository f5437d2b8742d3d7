//! Dynamic fusion federated learning at desk scale.
//!
//! The crate is organized around four layers:
//!
//! * [`model`] — parameter vectors, synthetic datasets, local SGD training,
//!   and weighted federated averaging.
//! * [`protocol`] — the transport-agnostic client and server state machines:
//!   accuracy-gated participation, adaptive waiting-time deadlines, and the
//!   synchronous baseline.
//! * [`simnet`] — a deterministic discrete-event simulator that drives the
//!   protocol under a simple latency/bandwidth network model and per-client
//!   compute profiles.
//! * [`experiments`] — scenario definitions, dynamic-versus-baseline
//!   comparison runs, and CSV reporting.

pub mod error;
pub mod experiments;
pub mod model;
pub mod protocol;
pub mod seeds;
pub mod simnet;

pub use error::{Error, Result};
