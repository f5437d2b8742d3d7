//! Synchronous baseline: every client trains and uploads every round, and
//! the server waits for all of them before aggregating.
//!
//! There is no accuracy gate, no waiting-time deadline, and no skipping —
//! each round's pace is set by its slowest client. This is the reference
//! the dynamic protocol is compared against.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{aggregate, ParameterVector};
use crate::protocol::messages::ClientId;
use crate::protocol::record::{ClientRoundRecord, Decision, RoundRecord};
use crate::protocol::server::GlobalEvaluator;

/// One client's contribution to a baseline round.
#[derive(Debug, Clone)]
pub struct BaselineOutcome {
    pub params: ParameterVector,
    pub local_acc: f64,
    pub training_time: f64,
    pub upload_transfer_time: f64,
    /// Aggregation weight (dataset size or 1.0, per the job's weighting).
    pub weight: f64,
}

/// Aggregate one synchronous round and build its record. The caller supplies
/// the timing (`opened_at`/`closed_at`/`dispatch_time`) because pacing —
/// waiting for the slowest upload — is transport- or simulator-specific.
pub fn run_baseline_round(
    round_index: u32,
    outcomes: &BTreeMap<ClientId, BaselineOutcome>,
    evaluator: &mut dyn GlobalEvaluator,
    opened_at: f64,
    closed_at: f64,
    dispatch_time: f64,
) -> Result<(ParameterVector, RoundRecord)> {
    if outcomes.is_empty() {
        return Err(Error::validation("baseline round needs at least one client"));
    }
    let updates: Vec<(ParameterVector, f64)> =
        outcomes.values().map(|o| (o.params.clone(), o.weight)).collect();
    let global = aggregate(&updates)?;
    let global_acc_after = evaluator.evaluate(&global)?;
    let per_client: Vec<ClientRoundRecord> = outcomes
        .iter()
        .map(|(&id, o)| ClientRoundRecord {
            client_id: id,
            decision: Decision::Uploaded,
            training_time: o.training_time,
            local_acc: Some(o.local_acc),
            upload_transfer_time: o.upload_transfer_time,
        })
        .collect();
    let record = RoundRecord {
        round_index,
        // No deadline exists in the synchronous protocol.
        waiting_time_used: 0.0,
        opened_at,
        closed_at,
        dispatch_time,
        global_acc_after,
        participant_count: outcomes.len(),
        per_client,
    };
    record.validate()?;
    Ok((global, record))
}
