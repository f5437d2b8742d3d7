//! Local training: multinomial logistic regression and a small MLP, both
//! trained with mini-batch SGD on softmax cross-entropy.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::dataset::Dataset;
use crate::model::params::{LayerShape, ParameterVector};

/// Which classifier a job trains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp { hidden_width: usize },
}

/// Hyperparameters for local training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerSpec {
    pub model_kind: ModelKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: u32,
}

impl TrainerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation("learning_rate must be positive and finite"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::validation("epochs must be at least 1"));
        }
        if let ModelKind::Mlp { hidden_width } = self.model_kind {
            if hidden_width == 0 {
                return Err(Error::validation("hidden_width must be at least 1"));
            }
        }
        Ok(())
    }
}

/// Layer shapes a model kind requires for the given data dimensions.
pub fn expected_shapes(kind: ModelKind, n_features: usize, class_count: usize) -> Vec<LayerShape> {
    match kind {
        ModelKind::Logistic => vec![LayerShape::new(class_count, n_features)],
        ModelKind::Mlp { hidden_width } => vec![
            LayerShape::new(hidden_width, n_features),
            LayerShape::new(class_count, hidden_width),
        ],
    }
}

/// Draw initial parameters from N(0, 0.1); deterministic in `seed`.
pub fn init_params(
    kind: ModelKind,
    n_features: usize,
    class_count: usize,
    payload_bytes: u64,
    seed: u64,
) -> Result<ParameterVector> {
    let shapes = expected_shapes(kind, n_features, class_count);
    let len: usize = shapes.iter().map(LayerShape::param_count).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values: Vec<f64> =
        (0..len).map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
    ParameterVector::new(values, shapes, payload_bytes)
}

fn kind_of(params: &ParameterVector) -> Result<ModelKind> {
    match params.shapes.len() {
        1 => Ok(ModelKind::Logistic),
        2 => Ok(ModelKind::Mlp { hidden_width: params.shapes[0].rows }),
        n => Err(Error::validation(format!("unsupported layer count {n}"))),
    }
}

fn check_dims(params: &ParameterVector, dataset: &Dataset) -> Result<ModelKind> {
    params.validate()?;
    dataset.validate()?;
    let kind = kind_of(params)?;
    let expected = expected_shapes(kind, dataset.n_features, dataset.class_count);
    if params.shapes != expected {
        return Err(Error::validation(format!(
            "parameter shapes {:?} do not match dataset ({} features, {} classes)",
            params.shapes, dataset.n_features, dataset.class_count
        )));
    }
    Ok(kind)
}

/// Scratch buffers reused across samples.
struct Workspace {
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    logits: Vec<f64>,
    probs: Vec<f64>,
    delta_out: Vec<f64>,
    delta_hidden: Vec<f64>,
}

impl Workspace {
    fn new(kind: ModelKind, class_count: usize) -> Self {
        let h = match kind {
            ModelKind::Logistic => 0,
            ModelKind::Mlp { hidden_width } => hidden_width,
        };
        Workspace {
            hidden_pre: vec![0.0; h],
            hidden: vec![0.0; h],
            logits: vec![0.0; class_count],
            probs: vec![0.0; class_count],
            delta_out: vec![0.0; class_count],
            delta_hidden: vec![0.0; h],
        }
    }
}

fn forward(params: &ParameterVector, kind: ModelKind, x: &[f64], ws: &mut Workspace) {
    match kind {
        ModelKind::Logistic => {
            let (w, b) = params.layer(0);
            let d = x.len();
            for (r, logit) in ws.logits.iter_mut().enumerate() {
                let mut z = b[r];
                let row = &w[r * d..(r + 1) * d];
                for (wi, xi) in row.iter().zip(x) {
                    z += wi * xi;
                }
                *logit = z;
            }
        }
        ModelKind::Mlp { hidden_width } => {
            let (w1, b1) = params.layer(0);
            let d = x.len();
            for j in 0..hidden_width {
                let mut z = b1[j];
                let row = &w1[j * d..(j + 1) * d];
                for (wi, xi) in row.iter().zip(x) {
                    z += wi * xi;
                }
                ws.hidden_pre[j] = z;
                ws.hidden[j] = z.tanh();
            }
            let (w2, b2) = params.layer(1);
            for (r, logit) in ws.logits.iter_mut().enumerate() {
                let mut z = b2[r];
                let row = &w2[r * hidden_width..(r + 1) * hidden_width];
                for (wi, hi) in row.iter().zip(&ws.hidden) {
                    z += wi * hi;
                }
                *logit = z;
            }
        }
    }
}

/// Stable softmax of `logits` into `probs`; returns log-sum-exp for loss use.
fn softmax(logits: &[f64], probs: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *p = e;
        sum += e;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln()
}

/// Add this sample's cross-entropy gradient into `grad` (same layout as
/// `params.values`).
fn accumulate_gradient(
    params: &ParameterVector,
    kind: ModelKind,
    x: &[f64],
    y: usize,
    ws: &mut Workspace,
    grad: &mut [f64],
) {
    forward(params, kind, x, ws);
    softmax(&ws.logits, &mut ws.probs);
    for (dst, &p) in ws.delta_out.iter_mut().zip(&ws.probs) {
        *dst = p;
    }
    ws.delta_out[y] -= 1.0;
    match kind {
        ModelKind::Logistic => {
            let d = x.len();
            let k = ws.logits.len();
            for r in 0..k {
                let dz = ws.delta_out[r];
                let row = &mut grad[r * d..(r + 1) * d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz * xi;
                }
                grad[k * d + r] += dz;
            }
        }
        ModelKind::Mlp { hidden_width } => {
            let d = x.len();
            let k = ws.logits.len();
            let (w2, _) = params.layer(1);
            let l1_off = params.layer_offset(1);
            // output layer
            for r in 0..k {
                let dz = ws.delta_out[r];
                let row = &mut grad[l1_off + r * hidden_width..l1_off + (r + 1) * hidden_width];
                for (g, hi) in row.iter_mut().zip(&ws.hidden) {
                    *g += dz * hi;
                }
                grad[l1_off + k * hidden_width + r] += dz;
            }
            // hidden layer through tanh'
            for j in 0..hidden_width {
                let mut back = 0.0;
                for r in 0..k {
                    back += w2[r * hidden_width + j] * ws.delta_out[r];
                }
                ws.delta_hidden[j] = back * (1.0 - ws.hidden[j] * ws.hidden[j]);
            }
            for j in 0..hidden_width {
                let dz = ws.delta_hidden[j];
                let row = &mut grad[j * d..(j + 1) * d];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz * xi;
                }
                grad[hidden_width * d + j] += dz;
            }
        }
    }
}

/// Mean softmax cross-entropy of `params` over `dataset`.
pub fn loss(params: &ParameterVector, dataset: &Dataset) -> Result<f64> {
    let kind = check_dims(params, dataset)?;
    if dataset.n_samples() == 0 {
        return Err(Error::validation("cannot compute loss on an empty dataset"));
    }
    let mut ws = Workspace::new(kind, dataset.class_count);
    let mut total = 0.0;
    for i in 0..dataset.n_samples() {
        forward(params, kind, dataset.sample(i), &mut ws);
        let lse = softmax(&ws.logits, &mut ws.probs);
        total += lse - ws.logits[dataset.labels[i]];
    }
    Ok(total / dataset.n_samples() as f64)
}

/// Mean gradient of [`loss`] over the full dataset; layout matches
/// `params.values`.
pub fn full_gradient(params: &ParameterVector, dataset: &Dataset) -> Result<Vec<f64>> {
    let kind = check_dims(params, dataset)?;
    if dataset.n_samples() == 0 {
        return Err(Error::validation("cannot compute a gradient on an empty dataset"));
    }
    let mut ws = Workspace::new(kind, dataset.class_count);
    let mut grad = vec![0.0; params.values.len()];
    for i in 0..dataset.n_samples() {
        accumulate_gradient(params, kind, dataset.sample(i), dataset.labels[i], &mut ws, &mut grad);
    }
    let scale = 1.0 / dataset.n_samples() as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok(grad)
}

/// Predicted class for one sample: argmax of the logits, ties resolved to
/// the lowest class index.
fn predict(params: &ParameterVector, kind: ModelKind, x: &[f64], ws: &mut Workspace) -> usize {
    forward(params, kind, x, ws);
    let mut best = 0;
    for (i, &z) in ws.logits.iter().enumerate() {
        if z > ws.logits[best] {
            best = i;
        }
    }
    best
}

/// Fraction of `dataset` classified correctly by `params`.
pub fn evaluate(params: &ParameterVector, dataset: &Dataset) -> Result<f64> {
    let kind = check_dims(params, dataset)?;
    if dataset.n_samples() == 0 {
        return Err(Error::validation("cannot evaluate on an empty dataset"));
    }
    let mut ws = Workspace::new(kind, dataset.class_count);
    let mut correct = 0usize;
    for i in 0..dataset.n_samples() {
        if predict(params, kind, dataset.sample(i), &mut ws) == dataset.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.n_samples() as f64)
}

/// Run `spec.epochs` of seeded mini-batch SGD from `params` and return the
/// updated parameters plus their accuracy on `dataset` itself.
///
/// `epochs == 0` is a test-only hook that returns the input unchanged.
pub fn train_local(
    params: &ParameterVector,
    dataset: &Dataset,
    spec: &TrainerSpec,
    seed: u64,
) -> Result<(ParameterVector, f64)> {
    let kind = check_dims(params, dataset)?;
    if kind != spec.model_kind {
        return Err(Error::validation(format!(
            "parameter shapes belong to {:?} but the trainer wants {:?}",
            kind, spec.model_kind
        )));
    }
    if !(spec.learning_rate > 0.0 && spec.learning_rate.is_finite()) {
        return Err(Error::validation("learning_rate must be positive and finite"));
    }
    if spec.batch_size == 0 {
        return Err(Error::validation("batch_size must be at least 1"));
    }
    if spec.epochs == 0 {
        let acc = evaluate(params, dataset)?;
        return Ok((params.clone(), acc));
    }

    let mut out = params.clone();
    let n = dataset.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut ws = Workspace::new(kind, dataset.class_count);
    let mut grad = vec![0.0; out.values.len()];
    let mut batch_index = 0usize;
    for _ in 0..spec.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(spec.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in chunk {
                accumulate_gradient(&out, kind, dataset.sample(i), dataset.labels[i], &mut ws, &mut grad);
            }
            let step = spec.learning_rate / chunk.len() as f64;
            let mut finite = true;
            for (v, g) in out.values.iter_mut().zip(&grad) {
                *v -= step * g;
                finite &= v.is_finite();
            }
            if !finite {
                return Err(Error::Numeric {
                    batch_index,
                    message: "parameters became non-finite during the SGD update".into(),
                });
            }
            batch_index += 1;
        }
    }
    let acc = evaluate(&out, dataset)?;
    Ok((out, acc))
}
