//! Flat parameter vectors with declared layer shapes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of one dense layer: a `rows x cols` weight matrix followed by
/// `rows` bias terms in the flat value vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
}

impl LayerShape {
    pub fn new(rows: usize, cols: usize) -> Self {
        LayerShape { rows, cols }
    }

    /// Number of values this layer contributes (weights plus biases).
    pub fn param_count(&self) -> usize {
        self.rows * self.cols + self.rows
    }
}

/// A model as a flat `f64` vector plus its layer shapes.
///
/// `payload_bytes` is the wire size used for transfer timing; it is
/// deliberately decoupled from `values.len()` so a three-value test model
/// can stand in for a 22 MB network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub values: Vec<f64>,
    pub shapes: Vec<LayerShape>,
    pub payload_bytes: u64,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>, shapes: Vec<LayerShape>, payload_bytes: u64) -> Result<Self> {
        let pv = ParameterVector { values, shapes, payload_bytes };
        pv.validate()?;
        Ok(pv)
    }

    /// Check the declared invariants: value count matches the shapes, all
    /// values finite, payload positive.
    pub fn validate(&self) -> Result<()> {
        let expected: usize = self.shapes.iter().map(LayerShape::param_count).sum();
        if self.values.len() != expected {
            return Err(Error::validation(format!(
                "parameter vector has {} values but shapes declare {}",
                self.values.len(),
                expected
            )));
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::validation(format!("non-finite parameter at index {i}")));
        }
        if self.payload_bytes == 0 {
            return Err(Error::validation("payload_bytes must be positive"));
        }
        Ok(())
    }

    /// Offset of layer `idx` within `values`.
    pub fn layer_offset(&self, idx: usize) -> usize {
        self.shapes[..idx].iter().map(LayerShape::param_count).sum()
    }

    /// Weight slice and bias slice of layer `idx`.
    pub fn layer(&self, idx: usize) -> (&[f64], &[f64]) {
        let off = self.layer_offset(idx);
        let s = self.shapes[idx];
        let w_end = off + s.rows * s.cols;
        (&self.values[off..w_end], &self.values[w_end..w_end + s.rows])
    }
}
