//! The message vocabulary exchanged between clients and the server.
//!
//! The same enum is used by the in-memory simulator and the TCP transport,
//! so protocol behavior cannot drift between the two modes.

use serde::{Deserialize, Serialize};

use crate::model::ParameterVector;
use crate::protocol::job::Job;
use crate::protocol::policy::ParticipationPolicy;

/// Client identifier. The server is not a client and has no id.
pub type ClientId = u32;

/// One protocol message. Every round-scoped kind carries its round index;
/// `DownloadJob`, `JobPayload`, and `Shutdown` are round-free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Message {
    /// Client -> server: request the job. The client proposes an id (0 = let
    /// the server pick) and announces its dataset size for weighting.
    DownloadJob { requested_id: ClientId, dataset_size: u64 },
    /// Server -> client: the job, the participation policy, and the id the
    /// server assigned.
    JobPayload { client_id: ClientId, job: Job, policy: ParticipationPolicy },
    /// Client -> server: how long this round's local training took.
    ReportTrainingTime { client_id: ClientId, round: u32, seconds: f64 },
    /// Client -> server: ask for the current accuracy gate.
    RequestMaxAcc { client_id: ClientId, round: u32 },
    /// Server -> client: the current accuracy gate.
    MaxAccReply { client_id: ClientId, round: u32, max_acc: f64 },
    /// Client -> server: the trained model update.
    UploadModel {
        client_id: ClientId,
        round: u32,
        params: ParameterVector,
        local_acc: f64,
        n_samples: u64,
    },
    /// Client -> server: explicit non-participation, so rounds can close early.
    SkipNotice { client_id: ClientId, round: u32, local_acc: f64 },
    /// Server -> client: the aggregated model for the next round.
    GlobalModel { client_id: ClientId, round: u32, params: ParameterVector },
    /// Server -> client: the round closed without this client's upload.
    RoundClosed { client_id: ClientId, round: u32 },
    /// Server -> client: the job is complete.
    Shutdown { client_id: ClientId },
}

impl Message {
    /// Stable kind name (matches the wire tag).
    pub fn kind(&self) -> &'static str {
        match self {
            Message::DownloadJob { .. } => "download_job",
            Message::JobPayload { .. } => "job_payload",
            Message::ReportTrainingTime { .. } => "report_training_time",
            Message::RequestMaxAcc { .. } => "request_max_acc",
            Message::MaxAccReply { .. } => "max_acc_reply",
            Message::UploadModel { .. } => "upload_model",
            Message::SkipNotice { .. } => "skip_notice",
            Message::GlobalModel { .. } => "global_model",
            Message::RoundClosed { .. } => "round_closed",
            Message::Shutdown { .. } => "shutdown",
        }
    }

    /// Round index, for the kinds that carry one.
    pub fn round(&self) -> Option<u32> {
        match self {
            Message::ReportTrainingTime { round, .. }
            | Message::RequestMaxAcc { round, .. }
            | Message::MaxAccReply { round, .. }
            | Message::UploadModel { round, .. }
            | Message::SkipNotice { round, .. }
            | Message::GlobalModel { round, .. }
            | Message::RoundClosed { round, .. } => Some(*round),
            Message::DownloadJob { .. } | Message::JobPayload { .. } | Message::Shutdown { .. } => {
                None
            }
        }
    }

    /// Model payload bytes this message carries on the wire (0 for
    /// control-plane messages); drives transfer timing.
    pub fn payload_bytes(&self) -> u64 {
        match self {
            Message::UploadModel { params, .. } | Message::GlobalModel { params, .. } => {
                params.payload_bytes
            }
            Message::JobPayload { job, .. } => job.initial_params.payload_bytes,
            _ => 0,
        }
    }
}
