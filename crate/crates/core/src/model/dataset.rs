//! Synthetic datasets, label corruption, and CSV fixtures.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A labeled dataset with a row-major feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Row-major `n_samples x n_features`.
    pub features: Vec<f64>,
    pub n_features: usize,
    /// One label per sample, each in `[0, class_count)`.
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_count < 2 {
            return Err(Error::validation("class_count must be at least 2"));
        }
        if self.n_features == 0 {
            return Err(Error::validation("n_features must be positive"));
        }
        if self.features.len() != self.labels.len() * self.n_features {
            return Err(Error::validation(format!(
                "feature matrix has {} values, expected {} ({} samples x {} features)",
                self.features.len(),
                self.labels.len() * self.n_features,
                self.labels.len(),
                self.n_features
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.class_count) {
            return Err(Error::validation(format!(
                "label {l} out of range for class_count {}",
                self.class_count
            )));
        }
        Ok(())
    }

    /// Per-class sample counts.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0usize; self.class_count];
        for &l in &self.labels {
            h[l] += 1;
        }
        h
    }

    /// Split off the last `fraction` of samples as a holdout set.
    ///
    /// The split is index-based on an already shuffled dataset; a seeded
    /// permutation is applied first so the choice is reproducible.
    pub fn split_holdout(&self, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) || fraction <= 0.0 {
            return Err(Error::validation("holdout fraction must be in (0, 1)"));
        }
        let n = self.n_samples();
        let held = ((n as f64) * fraction).floor() as usize;
        if held == 0 || held == n {
            return Err(Error::validation(format!(
                "holdout fraction {fraction} leaves an empty split for {n} samples"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let take = |idx: &[usize]| -> Dataset {
            let mut features = Vec::with_capacity(idx.len() * self.n_features);
            let mut labels = Vec::with_capacity(idx.len());
            for &i in idx {
                features.extend_from_slice(self.sample(i));
                labels.push(self.labels[i]);
            }
            Dataset { features, n_features: self.n_features, labels, class_count: self.class_count }
        };
        let train = take(&order[..n - held]);
        let holdout = take(&order[n - held..]);
        Ok((train, holdout))
    }
}

/// Apportion `n` samples over classes by largest-remainder rounding of the
/// ratios; ties go to the lowest class index.
fn apportion(n: usize, ratios: &[f64]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    // Sort by fractional part descending, class index ascending on ties.
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for i in 0..(n - assigned) {
        counts[order[i % order.len()]] += 1;
    }
    counts
}

/// Class mean placement: classes sit on a circle in the first two feature
/// dimensions with pairwise-adjacent distance `separation` (for one feature
/// dimension they are collinear at spacing `separation`).
fn class_mean(class: usize, class_count: usize, n_features: usize, separation: f64) -> Vec<f64> {
    let mut mean = vec![0.0; n_features];
    if n_features == 1 {
        mean[0] = class as f64 * separation;
        return mean;
    }
    let k = class_count as f64;
    let radius = separation / (2.0 * (std::f64::consts::PI / k).sin());
    let angle = 2.0 * std::f64::consts::PI * class as f64 / k;
    mean[0] = radius * angle.cos();
    mean[1] = radius * angle.sin();
    mean
}

/// Generate Gaussian-blob classes with unit variance, class means separated
/// by `separation`, and per-class counts given by largest-remainder rounding
/// of `class_ratios`. Deterministic in `seed`.
pub fn generate_synthetic_dataset(
    n_samples: usize,
    n_features: usize,
    class_count: usize,
    class_ratios: &[f64],
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if n_samples == 0 {
        return Err(Error::validation("n_samples must be positive"));
    }
    if class_count < 2 {
        return Err(Error::validation("class_count must be at least 2"));
    }
    if n_samples < class_count {
        return Err(Error::validation(format!(
            "n_samples {n_samples} is smaller than class_count {class_count}"
        )));
    }
    if n_features == 0 {
        return Err(Error::validation("n_features must be positive"));
    }
    if class_ratios.len() != class_count {
        return Err(Error::validation(format!(
            "expected {class_count} class ratios, got {}",
            class_ratios.len()
        )));
    }
    if class_ratios.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::validation("class ratios must be finite and nonnegative"));
    }
    let sum: f64 = class_ratios.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::validation(format!("class ratios sum to {sum}, expected 1")));
    }
    if !(separation > 0.0) {
        return Err(Error::validation("separation must be positive"));
    }

    let counts = apportion(n_samples, class_ratios);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n_samples * n_features);
    let mut labels = Vec::with_capacity(n_samples);
    for (class, &count) in counts.iter().enumerate() {
        let mean = class_mean(class, class_count, n_features, separation);
        for _ in 0..count {
            for m in &mean {
                let noise: f64 = rng.sample(StandardNormal);
                features.push(m + noise);
            }
            labels.push(class);
        }
    }
    // Shuffle sample order so class blocks do not survive into fixtures.
    let mut order: Vec<usize> = (0..n_samples).collect();
    order.shuffle(&mut rng);
    let mut ds = Dataset {
        features: Vec::with_capacity(n_samples * n_features),
        n_features,
        labels: Vec::with_capacity(n_samples),
        class_count,
    };
    for &i in &order {
        ds.features.extend_from_slice(&features[i * n_features..(i + 1) * n_features]);
        ds.labels.push(labels[i]);
    }
    Ok(ds)
}

/// Relabel a seeded choice of `floor(fraction * count(source_class))`
/// source-class samples as `target_class`. Features are untouched.
pub fn corrupt_labels(
    dataset: &Dataset,
    source_class: usize,
    target_class: usize,
    fraction: f64,
    seed: u64,
) -> Result<Dataset> {
    if source_class == target_class {
        return Err(Error::validation("source and target class must differ"));
    }
    if source_class >= dataset.class_count || target_class >= dataset.class_count {
        return Err(Error::validation(format!(
            "classes {source_class}/{target_class} out of range for class_count {}",
            dataset.class_count
        )));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::validation("fraction must be within [0, 1]"));
    }
    let mut source_idx: Vec<usize> =
        (0..dataset.n_samples()).filter(|&i| dataset.labels[i] == source_class).collect();
    let flip = ((source_idx.len() as f64) * fraction).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    source_idx.shuffle(&mut rng);
    let mut out = dataset.clone();
    for &i in source_idx.iter().take(flip) {
        out.labels[i] = target_class;
    }
    Ok(out)
}

/// Write a dataset as CSV: feature columns `f0..f{d-1}` then `label`.
pub fn dataset_to_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (0..dataset.n_features).map(|i| format!("f{i}")).collect();
    header.push("label".to_string());
    w.write_record(&header)?;
    for i in 0..dataset.n_samples() {
        let mut row: Vec<String> = dataset.sample(i).iter().map(|v| format!("{v}")).collect();
        row.push(dataset.labels[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a CSV produced by [`dataset_to_csv`]. When `class_count` is `None`
/// it is inferred as `max(label) + 1` (at least 2).
pub fn dataset_from_csv(path: &Path, class_count: Option<usize>) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 || header.iter().last() != Some("label") {
        return Err(Error::Csv(format!(
            "{}: expected feature columns followed by a `label` column",
            path.display()
        )));
    }
    let n_features = header.len() - 1;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Csv(format!("{}: row {} has wrong arity", path.display(), line + 2)));
        }
        for v in rec.iter().take(n_features) {
            features.push(
                v.parse::<f64>()
                    .map_err(|e| Error::Csv(format!("{}: bad feature `{v}`: {e}", path.display())))?,
            );
        }
        let lbl = rec
            .get(n_features)
            .unwrap()
            .parse::<usize>()
            .map_err(|e| Error::Csv(format!("{}: bad label: {e}", path.display())))?;
        labels.push(lbl);
    }
    let inferred = labels.iter().max().map_or(2, |m| (m + 1).max(2));
    let ds = Dataset {
        features,
        n_features,
        labels,
        class_count: class_count.unwrap_or(inferred),
    };
    ds.validate()?;
    Ok(ds)
}
