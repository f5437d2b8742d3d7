//! Weighted federated averaging of parameter vectors.

use crate::error::{Error, Result};
use crate::model::params::ParameterVector;

/// Element-wise weighted mean of the updates, with weights normalized to
/// sum to 1. All updates must share shapes and payload size.
pub fn aggregate(updates: &[(ParameterVector, f64)]) -> Result<ParameterVector> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::validation("aggregate needs at least one update"))?;
    let mut total = 0.0;
    for (i, (pv, w)) in updates.iter().enumerate() {
        pv.validate()?;
        if pv.shapes != first.shapes {
            return Err(Error::validation(format!(
                "update {i} has shapes {:?}, expected {:?}",
                pv.shapes, first.shapes
            )));
        }
        if pv.payload_bytes != first.payload_bytes {
            return Err(Error::validation(format!(
                "update {i} declares payload {} bytes, expected {}",
                pv.payload_bytes, first.payload_bytes
            )));
        }
        if !(w.is_finite() && *w >= 0.0) {
            return Err(Error::validation(format!("update {i} has invalid weight {w}")));
        }
        total += w;
    }
    if !(total > 0.0) {
        return Err(Error::validation("aggregation weights sum to zero"));
    }
    let mut values = vec![0.0; first.values.len()];
    for (pv, w) in updates {
        let scale = w / total;
        for (acc, v) in values.iter_mut().zip(&pv.values) {
            *acc += scale * v;
        }
    }
    Ok(ParameterVector {
        values,
        shapes: first.shapes.clone(),
        payload_bytes: first.payload_bytes,
    })
}
