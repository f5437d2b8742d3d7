//! The job: everything a client needs to participate in a run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ParameterVector, TrainerSpec};

/// How uploads are weighted during aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Weight each upload by the client's dataset size.
    #[default]
    DatasetSize,
    /// Weight each upload equally.
    Uniform,
}

/// Who receives the aggregated model when a round closes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DispatchScope {
    /// Only the round's participants get the new global model; skippers and
    /// late clients continue from their own local parameters.
    #[default]
    ParticipantsOnly,
    /// Every registered client gets the new global model and resynchronizes
    /// before training again.
    AllClients,
}

/// The job payload dispatched to every client at registration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    /// Total number of aggregation rounds to run.
    pub fusion_times: u32,
    /// Starting model parameters, shared by the server and all clients.
    pub initial_params: ParameterVector,
    /// Local training configuration.
    pub trainer: TrainerSpec,
    /// Waiting time (seconds) for the first round, before any training-time
    /// reports exist.
    pub initial_waiting_time: f64,
    #[serde(default)]
    pub aggregation_weighting: Weighting,
    #[serde(default)]
    pub dispatch: DispatchScope,
}

impl Job {
    pub fn validate(&self) -> Result<()> {
        if self.fusion_times == 0 {
            return Err(Error::validation("fusion_times must be at least 1"));
        }
        if !self.initial_waiting_time.is_finite() || self.initial_waiting_time <= 0.0 {
            return Err(Error::validation(format!(
                "initial_waiting_time must be positive and finite, got {}",
                self.initial_waiting_time
            )));
        }
        self.trainer.validate()?;
        self.initial_params.validate()?;
        Ok(())
    }
}
