//! Participation policy: when does a client upload its update?

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which reference accuracy the gate compares against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Upload iff the local accuracy reaches the best global accuracy seen so
    /// far (the server-maintained gate).
    GlobalMax,
    /// Upload iff the local accuracy reaches the client's own previous local
    /// accuracy.
    LocalImprovement,
}

/// Participation policy carried in the job payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipationPolicy {
    pub kind: PolicyKind,
    /// What to do when no reference accuracy exists yet (a client's first
    /// decision): `true` = upload, `false` = skip.
    pub first_round_uploads: bool,
}

impl Default for ParticipationPolicy {
    fn default() -> Self {
        ParticipationPolicy { kind: PolicyKind::GlobalMax, first_round_uploads: true }
    }
}

/// A client's participation choice for one round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    Upload,
    Skip,
}

/// Gate a local accuracy against a reference. The comparison is inclusive:
/// matching the reference exactly still uploads. `reference_acc` is `None`
/// when no reference exists yet, in which case `first_round_uploads` decides.
pub fn decide_participation(
    policy: ParticipationPolicy,
    local_acc: f64,
    reference_acc: Option<f64>,
) -> Result<Choice> {
    if !local_acc.is_finite() || !(0.0..=1.0).contains(&local_acc) {
        return Err(Error::validation(format!(
            "local accuracy must be a finite value in [0, 1], got {local_acc}"
        )));
    }
    if let Some(r) = reference_acc {
        if !r.is_finite() || !(0.0..=1.0).contains(&r) {
            return Err(Error::validation(format!(
                "reference accuracy must be a finite value in [0, 1], got {r}"
            )));
        }
        Ok(if local_acc >= r { Choice::Upload } else { Choice::Skip })
    } else {
        Ok(if policy.first_round_uploads { Choice::Upload } else { Choice::Skip })
    }
}
