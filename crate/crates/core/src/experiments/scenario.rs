//! Scenario definitions: named, seedable experiment setups binding together
//! data heterogeneity, compute heterogeneity, corruption, and cost models.
//!
//! The default suite models three hospitals holding 600/900/1300 samples of
//! a 3-class diagnosis problem, with two acquisition "modalities" realized
//! as two cluster arrangements of the same classes, offset in feature space.
//! Model payload presets (small/medium/large) stand in for networks of very
//! different parameter counts.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    corrupt_labels, generate_synthetic_dataset, init_params, Dataset, ModelKind, TrainerSpec,
};
use crate::protocol::{DispatchScope, Job, ParticipationPolicy, PolicyKind, Weighting};
use crate::seeds::{stream_rng, stream_seed, Purpose};
use crate::simnet::{ComputeProfile, LocalEngine, NetworkModel, ServerEval, SimClient, SimConfig};

/// Current scenario file schema.
pub const SCHEMA_VERSION: u32 = 1;

/// Optional label corruption applied to one client's local data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub source_class: usize,
    pub target_class: usize,
    /// Fraction of source-class samples whose labels flip, in [0, 1].
    pub fraction: f64,
}

/// One client's data and compute situation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSpec {
    pub n_samples: u64,
    /// Per-class sample ratios; must sum to 1.
    pub class_ratios: Vec<f64>,
    /// Fraction of this client's samples drawn from the offset modality.
    pub modality_b_fraction: f64,
    pub corruption: Option<CorruptionSpec>,
    pub compute: ComputeProfile,
}

/// Synthetic-data geometry shared by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n_features: usize,
    pub class_count: usize,
    /// Distance between adjacent class means within one modality.
    pub separation: f64,
    /// Every feature of modality-B samples is shifted by this amount.
    pub modality_offset: f64,
    /// Server-side test set size.
    pub test_samples: u64,
    /// Fraction of test labels randomized (annotation noise at the
    /// evaluating institution). Keeps the global accuracy ceiling strictly
    /// below clean clients' local ceilings, so the participation gate has a
    /// stable margin instead of comparing two saturated measurements.
    pub test_label_noise: f64,
    /// Fraction of each client's local data held out for its own accuracy
    /// measurements.
    pub holdout_fraction: f64,
}

/// A complete, serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    pub clients: Vec<ClientSpec>,
    pub data: DataConfig,
    /// Serialized model size on the wire.
    pub payload_bytes: u64,
    pub network: NetworkModel,
    pub rounds: u32,
    pub policy: ParticipationPolicy,
    pub dispatch: DispatchScope,
    pub trainer: TrainerSpec,
    pub initial_waiting_time: f64,
    /// Seeds this scenario is meant to be run under.
    pub seeds: Vec<u64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::config(format!(
                "scenario schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.name.is_empty() {
            return Err(Error::config("scenario name must not be empty"));
        }
        if self.clients.is_empty() {
            return Err(Error::config("clients: need at least one client"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds: must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: need at least one seed"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::config("seeds: must be distinct"));
        }
        if self.payload_bytes == 0 {
            return Err(Error::config("payload_bytes: must be positive"));
        }
        if !self.initial_waiting_time.is_finite() || self.initial_waiting_time <= 0.0 {
            return Err(Error::config("initial_waiting_time: must be positive"));
        }
        self.network.validate()?;
        self.trainer.validate()?;
        let d = &self.data;
        if d.class_count < 2 {
            return Err(Error::config("data.class_count: must be at least 2"));
        }
        if d.n_features == 0 {
            return Err(Error::config("data.n_features: must be positive"));
        }
        if !d.separation.is_finite() || d.separation <= 0.0 {
            return Err(Error::config("data.separation: must be positive"));
        }
        if !d.modality_offset.is_finite() {
            return Err(Error::config("data.modality_offset: must be finite"));
        }
        if d.test_samples < d.class_count as u64 {
            return Err(Error::config("data.test_samples: need at least one per class"));
        }
        if !(0.0..1.0).contains(&d.test_label_noise) {
            return Err(Error::config("data.test_label_noise: must lie in [0, 1)"));
        }
        if !(d.holdout_fraction > 0.0 && d.holdout_fraction < 1.0) {
            return Err(Error::config("data.holdout_fraction: must lie in (0, 1)"));
        }
        for (i, c) in self.clients.iter().enumerate() {
            let field = |f: &str| format!("clients[{i}].{f}");
            if c.n_samples == 0 {
                return Err(Error::config(format!("{}: must be positive", field("n_samples"))));
            }
            if c.class_ratios.len() != d.class_count {
                return Err(Error::config(format!(
                    "{}: expected {} entries, got {}",
                    field("class_ratios"),
                    d.class_count,
                    c.class_ratios.len()
                )));
            }
            let sum: f64 = c.class_ratios.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || c.class_ratios.iter().any(|&r| r < 0.0) {
                return Err(Error::config(format!(
                    "{}: ratios must be nonnegative and sum to 1",
                    field("class_ratios")
                )));
            }
            if !(0.0..=1.0).contains(&c.modality_b_fraction) {
                return Err(Error::config(format!(
                    "{}: must lie in [0, 1]",
                    field("modality_b_fraction")
                )));
            }
            c.compute.validate()?;
            if let Some(cor) = &c.corruption {
                if cor.source_class >= d.class_count || cor.target_class >= d.class_count {
                    return Err(Error::config(format!(
                        "{}: class index out of range",
                        field("corruption")
                    )));
                }
                if cor.source_class == cor.target_class {
                    return Err(Error::config(format!(
                        "{}: source and target must differ",
                        field("corruption")
                    )));
                }
                if !(0.0..=1.0).contains(&cor.fraction) {
                    return Err(Error::config(format!(
                        "{}: fraction must lie in [0, 1]",
                        field("corruption")
                    )));
                }
            }
        }
        Ok(())
    }

    /// Share of all training samples drawn from modality B, weighted by
    /// client size. The server's test set mirrors this mixture so "global
    /// accuracy" means accuracy on the data population that actually exists.
    pub fn overall_modality_b_fraction(&self) -> f64 {
        let total: f64 = self.clients.iter().map(|c| c.n_samples as f64).sum();
        self.clients
            .iter()
            .map(|c| c.modality_b_fraction * c.n_samples as f64 / total)
            .sum()
    }
}

/// Draw one client's local data: a seeded two-modality mixture, optionally
/// corrupted, split into a training part and a local holdout.
fn build_client_data(
    scenario: &Scenario,
    seed: u64,
    client_index: usize,
) -> Result<(Dataset, Dataset)> {
    let spec = &scenario.clients[client_index];
    let d = &scenario.data;
    let client_id = client_index as u32 + 1;
    let n = spec.n_samples as usize;
    let n_b = (n as f64 * spec.modality_b_fraction).floor() as usize;
    let n_a = n - n_b;

    let mut parts = Vec::new();
    if n_a > 0 {
        parts.push(generate_synthetic_dataset(
            n_a,
            d.n_features,
            d.class_count,
            &spec.class_ratios,
            d.separation,
            stream_seed(seed, client_id, 0, Purpose::DataGen),
        )?);
    }
    if n_b > 0 {
        let mut b = generate_synthetic_dataset(
            n_b,
            d.n_features,
            d.class_count,
            &spec.class_ratios,
            d.separation,
            stream_seed(seed, client_id, 1, Purpose::DataGen),
        )?;
        for v in &mut b.features {
            *v += d.modality_offset;
        }
        parts.push(b);
    }
    let mut merged = merge_shuffled(parts, stream_rng(seed, client_id, 2, Purpose::DataGen));
    if let Some(cor) = &spec.corruption {
        merged = corrupt_labels(
            &merged,
            cor.source_class,
            cor.target_class,
            cor.fraction,
            stream_seed(seed, client_id, 0, Purpose::Corrupt),
        )?;
    }
    let (train, holdout) = merged.split_holdout(
        d.holdout_fraction,
        stream_seed(seed, client_id, 0, Purpose::Holdout),
    )?;
    Ok((train, holdout))
}

/// Concatenate datasets and apply one seeded permutation.
fn merge_shuffled(parts: Vec<Dataset>, mut rng: impl rand::Rng) -> Dataset {
    use rand::seq::SliceRandom;
    let first = parts.first().expect("at least one part");
    let n_features = first.n_features;
    let class_count = first.class_count;
    let mut rows: Vec<(Vec<f64>, usize)> = Vec::new();
    for p in &parts {
        for i in 0..p.n_samples() {
            rows.push((p.sample(i).to_vec(), p.labels[i]));
        }
    }
    rows.shuffle(&mut rng);
    let mut features = Vec::with_capacity(rows.len() * n_features);
    let mut labels = Vec::with_capacity(rows.len());
    for (f, l) in rows {
        features.extend_from_slice(&f);
        labels.push(l);
    }
    Dataset { features, n_features, labels, class_count }
}

/// The server's test set: clean, class-balanced, with the scenario's overall
/// modality mixture.
fn build_test_set(scenario: &Scenario, seed: u64) -> Result<Dataset> {
    let d = &scenario.data;
    let ratios = vec![1.0 / d.class_count as f64; d.class_count];
    let n = scenario.data.test_samples as usize;
    let frac_b = scenario.overall_modality_b_fraction();
    let n_b = (n as f64 * frac_b).floor() as usize;
    let n_a = n - n_b;
    let mut parts = Vec::new();
    if n_a > 0 {
        parts.push(generate_synthetic_dataset(
            n_a,
            d.n_features,
            d.class_count,
            &ratios,
            d.separation,
            stream_seed(seed, 0, 0, Purpose::DataGen),
        )?);
    }
    if n_b > 0 {
        let mut b = generate_synthetic_dataset(
            n_b,
            d.n_features,
            d.class_count,
            &ratios,
            d.separation,
            stream_seed(seed, 0, 1, Purpose::DataGen),
        )?;
        for v in &mut b.features {
            *v += d.modality_offset;
        }
        parts.push(b);
    }
    let mut test = merge_shuffled(parts, stream_rng(seed, 0, 2, Purpose::DataGen));
    if d.test_label_noise > 0.0 {
        let mut rng = stream_rng(seed, 0, 0, Purpose::Corrupt);
        for label in &mut test.labels {
            if rng.gen::<f64>() < d.test_label_noise {
                // Reassign to one of the other classes, uniformly.
                let shift = rng.gen_range(1..d.class_count);
                *label = (*label + shift) % d.class_count;
            }
        }
    }
    Ok(test)
}

/// Materialize a scenario under one seed into a runnable simulation config:
/// seeded datasets, seeded initial parameters, and per-client cost models.
pub fn build_sim_config(scenario: &Scenario, seed: u64) -> Result<SimConfig> {
    scenario.validate()?;
    let d = &scenario.data;
    let initial_params = init_params(
        scenario.trainer.model_kind,
        d.n_features,
        d.class_count,
        scenario.payload_bytes,
        stream_seed(seed, 0, 0, Purpose::InitParams),
    )?;
    let job = Job {
        fusion_times: scenario.rounds,
        initial_params,
        trainer: scenario.trainer.clone(),
        initial_waiting_time: scenario.initial_waiting_time,
        aggregation_weighting: Weighting::DatasetSize,
        dispatch: scenario.dispatch,
    };
    let mut clients = Vec::with_capacity(scenario.clients.len());
    for (i, spec) in scenario.clients.iter().enumerate() {
        let (train, eval) = build_client_data(scenario, seed, i)?;
        clients.push(SimClient {
            id: i as u32 + 1,
            engine: LocalEngine::Real { train, eval },
            compute: spec.compute,
            network: scenario.network,
        });
    }
    let test_set = build_test_set(scenario, seed)?;
    Ok(SimConfig {
        root_seed: seed,
        job,
        policy: scenario.policy,
        server_eval: ServerEval::TestSet(test_set),
        clients,
    })
}

/// Payload presets standing in for small/medium/large model families.
pub const PAYLOAD_SMALL: u64 = 22_000_000;
pub const PAYLOAD_MEDIUM: u64 = 100_000_000;
pub const PAYLOAD_LARGE: u64 = 170_000_000;

const SIZES: [u64; 3] = [600, 900, 1300];
const HOLDOUT_FRACTION: f64 = 0.25;
/// Default per-run seeds.
pub const DEFAULT_SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];

fn uniform_ratios() -> Vec<f64> {
    vec![1.0 / 3.0; 3]
}

fn compute(rate: f64) -> ComputeProfile {
    ComputeProfile { seconds_per_epoch_per_ksample: rate, jitter: 0.1 }
}

/// Base per-round training durations, per client. The institutions have
/// genuinely different hardware: two finish well inside the adaptive
/// deadline (which tracks the mean of the three), one well outside it.
const DURATION_TARGETS: [f64; 3] = [28.0, 34.0, 62.0];

/// Per-client compute rates hitting the duration targets on the post-holdout
/// training sets (duration = epochs * ksamples * rate).
fn duration_rates(targets: [f64; 3], epochs: u32, holdout_fraction: f64) -> [f64; 3] {
    let mut rates = [0.0; 3];
    for ((r, &n), target) in rates.iter_mut().zip(SIZES.iter()).zip(targets) {
        let train_ksamples = n as f64 * (1.0 - holdout_fraction) / 1000.0;
        *r = target / (epochs as f64 * train_ksamples);
    }
    rates
}

fn base_scenario(name: &str) -> Scenario {
    // One local epoch per round: a client refining an aligned global easily
    // keeps its local accuracy above the gate, while one whose labels
    // contradict the global cannot re-learn in a single pass.
    let trainer = TrainerSpec {
        model_kind: ModelKind::Mlp { hidden_width: 16 },
        learning_rate: 0.015,
        batch_size: 32,
        epochs: 1,
    };
    let rates = duration_rates(DURATION_TARGETS, trainer.epochs, HOLDOUT_FRACTION);
    Scenario {
        schema_version: SCHEMA_VERSION,
        name: name.to_string(),
        clients: SIZES
            .iter()
            .zip(rates.iter())
            .map(|(&n, &r)| ClientSpec {
                n_samples: n,
                class_ratios: uniform_ratios(),
                modality_b_fraction: 0.0,
                corruption: None,
                compute: compute(r),
            })
            .collect(),
        data: DataConfig {
            n_features: 6,
            class_count: 3,
            separation: 6.0,
            modality_offset: 8.0,
            test_samples: 526,
            test_label_noise: 0.03,
            holdout_fraction: HOLDOUT_FRACTION,
        },
        payload_bytes: PAYLOAD_SMALL,
        network: NetworkModel { latency: 0.05, bandwidth_bytes_per_sec: 10_000_000.0 },
        rounds: 30,
        policy: ParticipationPolicy { kind: PolicyKind::GlobalMax, first_round_uploads: true },
        dispatch: DispatchScope::AllClients,
        trainer,
        initial_waiting_time: 120.0,
        seeds: DEFAULT_SEEDS.to_vec(),
    }
}

/// The six base scenarios: the data/compute situations the payload presets
/// are then crossed with.
pub fn base_scenarios() -> Vec<Scenario> {
    let mut out = Vec::with_capacity(6);

    // 1: clean, balanced, homogeneous — the separable sanity scenario.
    out.push(base_scenario("s1-uniform"));

    // 2: same classes, but clients see different modality mixtures.
    let mut s2 = base_scenario("s2-modality");
    for (c, f) in s2.clients.iter_mut().zip([0.2, 0.5, 0.8]) {
        c.modality_b_fraction = f;
    }
    out.push(s2);

    // 3: per-client class imbalance.
    let mut s3 = base_scenario("s3-classskew");
    let skews = [[0.6, 0.2, 0.2], [0.2, 0.6, 0.2], [0.2, 0.2, 0.6]];
    for (c, skew) in s3.clients.iter_mut().zip(skews) {
        c.class_ratios = skew.to_vec();
    }
    out.push(s3);

    // 4: one poisoned client — every negative-class sample is relabeled as
    // the positive class.
    let mut s4 = base_scenario("s4-corrupted");
    s4.clients[0].corruption =
        Some(CorruptionSpec { source_class: 0, target_class: 1, fraction: 1.0 });
    out.push(s4);

    // 5: one straggler whose training takes ~3x the others'.
    let mut s5 = base_scenario("s5-straggler");
    s5.clients[2].compute.seconds_per_epoch_per_ksample *= 3.0;
    out.push(s5);

    // 6: everything at once — skew, modality split, and uneven compute.
    let mut s6 = base_scenario("s6-mixed");
    let skews = [[0.5, 0.3, 0.2], [0.2, 0.5, 0.3], [0.3, 0.2, 0.5]];
    for ((c, skew), f) in s6.clients.iter_mut().zip(skews).zip([0.0, 0.5, 1.0]) {
        c.class_ratios = skew.to_vec();
        c.modality_b_fraction = f;
    }
    s6.clients[1].compute.seconds_per_epoch_per_ksample *= 1.5;
    s6.clients[2].compute.seconds_per_epoch_per_ksample *= 2.0;
    out.push(s6);

    for s in &out {
        s.validate().expect("built-in scenarios are valid");
    }
    out
}

/// The full default suite: six scenarios crossed with three payload presets.
pub fn build_scenario_suite() -> Vec<Scenario> {
    let presets = [
        ("small", PAYLOAD_SMALL),
        ("medium", PAYLOAD_MEDIUM),
        ("large", PAYLOAD_LARGE),
    ];
    let mut suite = Vec::with_capacity(18);
    for base in base_scenarios() {
        for (label, payload) in presets {
            let mut s = base.clone();
            s.name = format!("{}-{label}", base.name);
            s.payload_bytes = payload;
            suite.push(s);
        }
    }
    suite
}

/// Look up a scenario by name, first in the suite, then among the bases.
pub fn find_scenario(name: &str) -> Option<Scenario> {
    build_scenario_suite()
        .into_iter()
        .chain(base_scenarios())
        .find(|s| s.name == name)
}

/// Parse a scenario from TOML text.
pub fn scenario_from_toml(text: &str) -> Result<Scenario> {
    let s: Scenario =
        toml::from_str(text).map_err(|e| Error::config(format!("scenario file: {e}")))?;
    s.validate()?;
    Ok(s)
}

/// Serialize a scenario to TOML text.
pub fn scenario_to_toml(scenario: &Scenario) -> Result<String> {
    toml::to_string_pretty(scenario)
        .map_err(|e| Error::config(format!("scenario serialization: {e}")))
}
