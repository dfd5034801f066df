use serde::{Serialize, Serializer};

use crate::delta::{DeltaArchive, EnergyMode, LayerKind, LayerPayload};
use crate::format::ArchiveManifest;

/// Compression ratio; serializes as a number or the string `"infinite"`
/// when nothing is stored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("infinite"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerReport {
    pub name: String,
    pub kind: LayerKind,
    pub shape: Vec<usize>,
    pub rank: usize,
    pub dense_params: u64,
    pub stored_params: u64,
    pub stored_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressionReport {
    pub tau: f64,
    pub energy_mode: EnergyMode,
    pub layer_count: usize,
    pub changed_layers: usize,
    pub dense_param_count: u64,
    pub stored_param_count: u64,
    pub ratio: Ratio,
    /// Bytes the dense deltas would occupy in their storage dtypes.
    pub dense_bytes: u64,
    /// Stored tensor bytes plus the manifest.
    pub estimated_file_bytes: u64,
    pub manifest_bytes: u64,
    pub layers: Vec<LayerReport>,
}

/// Parameter and byte accounting for an archive.
pub fn compression_report(archive: &DeltaArchive) -> CompressionReport {
    let layers: Vec<LayerReport> = archive
        .layers
        .values()
        .map(|l| {
            let width = l.original_dtype.size_in_bytes() as u64;
            LayerReport {
                name: l.name.clone(),
                kind: l.payload.kind(),
                shape: l.original_shape.clone(),
                rank: l.effective_rank(),
                dense_params: l.dense_params(),
                stored_params: l.stored_params(),
                stored_bytes: l.stored_params() * width,
            }
        })
        .collect();
    let dense: u64 = layers.iter().map(|l| l.dense_params).sum();
    let stored: u64 = layers.iter().map(|l| l.stored_params).sum();
    let dense_bytes = archive
        .layers
        .values()
        .map(|l| l.dense_params() * l.original_dtype.size_in_bytes() as u64)
        .sum();
    let manifest_bytes = ArchiveManifest::from_archive(archive).to_canonical_json().len() as u64;
    let tensor_bytes: u64 = layers.iter().map(|l| l.stored_bytes).sum();
    CompressionReport {
        tau: archive.tau,
        energy_mode: archive.energy_mode,
        layer_count: layers.len(),
        changed_layers: archive
            .layers
            .values()
            .filter(|l| !matches!(l.payload, LayerPayload::Unchanged))
            .count(),
        dense_param_count: dense,
        stored_param_count: stored,
        ratio: if stored == 0 {
            Ratio::Infinite
        } else {
            Ratio::Finite(dense as f64 / stored as f64)
        },
        dense_bytes,
        estimated_file_bytes: 8 + tensor_bytes + manifest_bytes,
        manifest_bytes,
        layers,
    }
}
