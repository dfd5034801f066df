use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor_store::Checkpoint;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerError {
    pub layer: String,
    /// `||rebuilt - truth||_F / ||truth||_F`, or the absolute norm of the
    /// difference when the true tensor is all zeros.
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityReport {
    pub layers: Vec<LayerError>,
    pub max_rel_error: f64,
    pub mean_rel_error: f64,
}

/// Relative Frobenius error of every tensor of `truth` against `rebuilt`.
pub fn fidelity_report(rebuilt: &Checkpoint, truth: &Checkpoint) -> Result<FidelityReport> {
    let mut layers = Vec::with_capacity(truth.len());
    for t in truth.iter() {
        let r = rebuilt.get(&t.name).ok_or_else(|| Error::LayerSetMismatch {
            name: t.name.clone(),
            only_in: "fine-tuned",
        })?;
        if r.shape != t.shape {
            return Err(Error::ShapeMismatch {
                name: t.name.clone(),
                left: r.shape.clone(),
                right: t.shape.clone(),
            });
        }
        let (mut diff, mut norm) = (0.0, 0.0);
        for (a, b) in r.to_f64_vec().iter().zip(t.to_f64_vec()) {
            diff += (a - b) * (a - b);
            norm += b * b;
        }
        let rel_error = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
        layers.push(LayerError {
            layer: t.name.clone(),
            rel_error,
        });
    }
    let max_rel_error = layers.iter().map(|l| l.rel_error).fold(0.0, f64::max);
    let mean_rel_error = if layers.is_empty() {
        0.0
    } else {
        layers.iter().map(|l| l.rel_error).sum::<f64>() / layers.len() as f64
    };
    Ok(FidelityReport {
        layers,
        max_rel_error,
        mean_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor_store::TensorRecord;

    #[test]
    fn errors_are_relative_per_layer() {
        let mut truth = Checkpoint::new();
        truth.insert(TensorRecord::from_f32("a", vec![2], &[3.0, 4.0]).unwrap()).unwrap();
        truth.insert(TensorRecord::from_f32("z", vec![1], &[0.0]).unwrap()).unwrap();
        let mut rebuilt = Checkpoint::new();
        rebuilt.insert(TensorRecord::from_f32("a", vec![2], &[3.0, 4.5]).unwrap()).unwrap();
        rebuilt.insert(TensorRecord::from_f32("z", vec![1], &[0.25]).unwrap()).unwrap();
        let r = fidelity_report(&rebuilt, &truth).unwrap();
        assert_eq!(r.layers[0].rel_error, 0.1);
        assert_eq!(r.layers[1].rel_error, 0.25);
        assert_eq!(r.max_rel_error, 0.25);
        assert!((r.mean_rel_error - 0.175).abs() < 1e-15);
        rebuilt.tensors.remove("z");
        assert!(fidelity_report(&rebuilt, &truth).is_err());
    }
}
