//! Per-round bookkeeping: what happened, to whom, and when.
//!
//! Every run (simulated or live, dynamic or baseline) produces a
//! [`RunLedger`] with one [`RoundRecord`] per aggregation round. All summary
//! metrics and CSV exports derive from this structure alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::messages::ClientId;

/// What a client ended up doing in a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    /// The upload arrived before the round closed and entered the aggregate.
    Uploaded,
    /// The client declined to upload (accuracy gate not met).
    Skipped,
    /// The round closed before the client's decision arrived.
    Late,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Uploaded => "uploaded",
            Decision::Skipped => "skipped",
            Decision::Late => "late",
        }
    }
}

impl std::str::FromStr for Decision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uploaded" => Ok(Decision::Uploaded),
            "skipped" => Ok(Decision::Skipped),
            "late" => Ok(Decision::Late),
            other => Err(Error::validation(format!("unknown decision {other:?}"))),
        }
    }
}

/// One client's outcome within one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundRecord {
    pub client_id: ClientId,
    pub decision: Decision,
    /// Local training seconds reported for this round; 0.0 when no report
    /// arrived while the round was open.
    pub training_time: f64,
    /// Local accuracy the client measured this round, if its decision
    /// (upload or skip) reached the server.
    pub local_acc: Option<f64>,
    /// Seconds the model upload spent in transfer; 0.0 unless the client
    /// uploaded.
    pub upload_transfer_time: f64,
}

/// One aggregation round, as the server saw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round_index: u32,
    /// The waiting time this round was scheduled with (0.0 in baseline mode,
    /// which has no deadline).
    pub waiting_time_used: f64,
    /// Virtual (or wall-clock) time the round opened.
    pub opened_at: f64,
    /// Time the round closed (deadline or early close).
    pub closed_at: f64,
    /// Time the post-round dispatch finished (global model or round-closed
    /// notices delivered to the slowest recipient).
    pub dispatch_time: f64,
    /// Global-model accuracy after this round's aggregation (unchanged from
    /// the previous round when no uploads arrived).
    pub global_acc_after: f64,
    /// Number of uploads that entered the aggregate.
    pub participant_count: usize,
    /// One row per registered client, ordered by client id.
    pub per_client: Vec<ClientRoundRecord>,
}

impl RoundRecord {
    /// Internal-consistency check: counts, orderings, and sign conventions.
    pub fn validate(&self) -> Result<()> {
        let uploaded = self.per_client.iter().filter(|c| c.decision == Decision::Uploaded).count();
        if uploaded != self.participant_count {
            return Err(Error::validation(format!(
                "round {}: participant_count {} but {} uploaded rows",
                self.round_index, self.participant_count, uploaded
            )));
        }
        if !(self.opened_at <= self.closed_at && self.closed_at <= self.dispatch_time) {
            return Err(Error::validation(format!(
                "round {}: timestamps must be ordered opened ({}) <= closed ({}) <= dispatched ({})",
                self.round_index, self.opened_at, self.closed_at, self.dispatch_time
            )));
        }
        if self.waiting_time_used < 0.0 || !self.waiting_time_used.is_finite() {
            return Err(Error::validation("waiting_time_used must be finite and nonnegative"));
        }
        let mut prev: Option<ClientId> = None;
        for row in &self.per_client {
            if let Some(p) = prev {
                if row.client_id <= p {
                    return Err(Error::validation(format!(
                        "round {}: per-client rows must be strictly ordered by client id",
                        self.round_index
                    )));
                }
            }
            prev = Some(row.client_id);
            if row.training_time < 0.0 || row.upload_transfer_time < 0.0 {
                return Err(Error::validation("negative time in client round record"));
            }
            match row.decision {
                Decision::Uploaded => {
                    if row.local_acc.is_none() {
                        return Err(Error::validation(format!(
                            "round {}: uploaded client {} must record a local accuracy",
                            self.round_index, row.client_id
                        )));
                    }
                }
                Decision::Skipped => {
                    if row.upload_transfer_time != 0.0 {
                        return Err(Error::validation(format!(
                            "round {}: skipped client {} cannot have upload transfer time",
                            self.round_index, row.client_id
                        )));
                    }
                    if row.local_acc.is_none() {
                        return Err(Error::validation(format!(
                            "round {}: skipped client {} must record a local accuracy",
                            self.round_index, row.client_id
                        )));
                    }
                }
                Decision::Late => {
                    if row.upload_transfer_time != 0.0 {
                        return Err(Error::validation(format!(
                            "round {}: late client {} cannot have upload transfer time",
                            self.round_index, row.client_id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn client(&self, id: ClientId) -> Option<&ClientRoundRecord> {
        self.per_client.iter().find(|c| c.client_id == id)
    }
}

/// Which protocol produced a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    /// Accuracy-gated participation with adaptive waiting-time deadlines.
    Dynamic,
    /// Synchronous baseline: every client uploads, every round waits for all.
    Baseline,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Dynamic => "dynamic",
            RunMode::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" => Ok(RunMode::Dynamic),
            "baseline" => Ok(RunMode::Baseline),
            other => Err(Error::validation(format!("unknown run mode {other:?}"))),
        }
    }
}

/// The complete trace of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub mode: RunMode,
    /// Virtual seconds from job start to the final dispatch.
    pub total_virtual_time: f64,
    pub records: Vec<RoundRecord>,
}

impl RunLedger {
    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::validation("run ledger has no rounds"));
        }
        let mut prev_close = 0.0_f64;
        for (i, r) in self.records.iter().enumerate() {
            r.validate()?;
            if r.round_index as usize != i + 1 {
                return Err(Error::validation(format!(
                    "round records must be contiguous from 1; position {} holds round {}",
                    i, r.round_index
                )));
            }
            if r.opened_at < prev_close {
                return Err(Error::validation(format!(
                    "round {} opened at {} before the previous round closed at {}",
                    r.round_index, r.opened_at, prev_close
                )));
            }
            prev_close = r.closed_at;
        }
        Ok(())
    }

    /// Total uploads across all rounds.
    pub fn total_uploads(&self) -> usize {
        self.records.iter().map(|r| r.participant_count).sum()
    }

    /// Sum of all upload transfer seconds (communication cost of uploads).
    pub fn total_upload_time(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|r| r.per_client.iter())
            .map(|c| c.upload_transfer_time)
            .sum()
    }

    /// Sum of all reported local training seconds.
    pub fn total_training_time(&self) -> f64 {
        self.records.iter().flat_map(|r| r.per_client.iter()).map(|c| c.training_time).sum()
    }

    /// Global accuracy after the final round.
    pub fn final_accuracy(&self) -> f64 {
        self.records.last().map(|r| r.global_acc_after).unwrap_or(0.0)
    }

    /// Per-round global accuracies, in round order.
    pub fn accuracy_curve(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.global_acc_after).collect()
    }
}
