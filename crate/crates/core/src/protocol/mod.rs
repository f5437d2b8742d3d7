//! The federated protocol: messages, participation policy, and the client
//! and server state machines, all independent of any transport.

pub mod baseline;
pub mod client;
pub mod job;
pub mod messages;
pub mod policy;
pub mod record;
pub mod server;

pub use baseline::{run_baseline_round, BaselineOutcome};
pub use client::{ClientAction, ClientEvent, ClientMachine, ClientPhase};
pub use job::{DispatchScope, Job, Weighting};
pub use messages::{ClientId, Message};
pub use policy::{decide_participation, Choice, ParticipationPolicy, PolicyKind};
pub use record::{ClientRoundRecord, Decision, RoundRecord, RunLedger, RunMode};
pub use server::{
    update_waiting_time, DatasetEvaluator, GlobalEvaluator, ScriptedEvaluator, ServerEffect,
    ServerProtocol,
};
