//! Cost models for the simulator: network transfers and local compute.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point-to-point link: fixed latency plus payload over bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    /// One-way latency in seconds, applied to every message.
    pub latency: f64,
    /// Link throughput in bytes per second.
    pub bandwidth_bytes_per_sec: f64,
}

impl NetworkModel {
    pub fn validate(&self) -> Result<()> {
        if !self.latency.is_finite() || self.latency < 0.0 {
            return Err(Error::validation(format!(
                "latency must be finite and nonnegative, got {}",
                self.latency
            )));
        }
        if !self.bandwidth_bytes_per_sec.is_finite() || self.bandwidth_bytes_per_sec <= 0.0 {
            return Err(Error::validation(format!(
                "bandwidth must be finite and positive, got {}",
                self.bandwidth_bytes_per_sec
            )));
        }
        Ok(())
    }

    /// Seconds to move `payload_bytes` over this link.
    pub fn transfer_time(&self, payload_bytes: u64) -> f64 {
        self.latency + payload_bytes as f64 / self.bandwidth_bytes_per_sec
    }
}

/// How fast a client trains, with optional run-to-run jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComputeProfile {
    /// Seconds per epoch per thousand samples.
    pub seconds_per_epoch_per_ksample: f64,
    /// Symmetric relative jitter: each run is scaled by `1 + u` with
    /// `u ~ Uniform[-jitter, +jitter]`. Zero disables it.
    pub jitter: f64,
}

impl ComputeProfile {
    pub fn validate(&self) -> Result<()> {
        if !self.seconds_per_epoch_per_ksample.is_finite()
            || self.seconds_per_epoch_per_ksample <= 0.0
        {
            return Err(Error::validation(format!(
                "compute rate must be finite and positive, got {}",
                self.seconds_per_epoch_per_ksample
            )));
        }
        if !self.jitter.is_finite() || !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::validation(format!(
                "jitter must lie in [0, 1), got {}",
                self.jitter
            )));
        }
        Ok(())
    }

    /// Seconds one local training run takes. The RNG is always sampled once,
    /// so stream consumption does not depend on the jitter setting.
    pub fn training_time<R: Rng>(&self, epochs: u32, n_samples: usize, rng: &mut R) -> f64 {
        let base =
            epochs as f64 * (n_samples as f64 / 1000.0) * self.seconds_per_epoch_per_ksample;
        let u = Uniform::new_inclusive(-self.jitter, self.jitter).sample(rng);
        base * (1.0 + u)
    }
}
