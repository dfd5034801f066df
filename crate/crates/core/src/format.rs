//! Single-file archive for a [`DeltaArchive`].
//!
//! An archive is an ordinary checkpoint container. Factor layers contribute
//! `<name>.delta.A` (`d x t`) and `<name>.delta.B` (`t x k`), dense and
//! standalone layers contribute `<name>.delta.dense`, and unchanged layers
//! contribute nothing. The manifest describing every layer is stored as
//! canonical JSON (sorted keys, compact) under the metadata key
//! [`MANIFEST_KEY`].

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::delta::{
    validate_tau, CompressedLayer, DeltaArchive, EnergyMode, LayerKind, LayerPayload, FORMAT_VERSION,
};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor_store::{matrix_dims, read_checkpoint, write_checkpoint, Checkpoint, Dtype, TensorRecord};

pub const MANIFEST_KEY: &str = "dsvd_manifest";
pub const ARCHIVE_EXTENSION: &str = "dsvd";

const SUFFIX_A: &str = ".delta.A";
const SUFFIX_B: &str = ".delta.B";
const SUFFIX_DENSE: &str = ".delta.dense";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    pub original_shape: Vec<usize>,
    pub original_dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveManifest {
    pub format_version: u64,
    pub tau: f64,
    pub base_fingerprint: String,
    pub tool_version: String,
    #[serde(default)]
    pub energy_mode: EnergyMode,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub mismatched_layers: BTreeSet<String>,
    pub layer_index: BTreeMap<String, LayerEntry>,
}

impl ArchiveManifest {
    pub fn from_archive(archive: &DeltaArchive) -> Self {
        let layer_index = archive
            .layers
            .iter()
            .map(|(name, layer)| {
                let rank = match layer.payload {
                    LayerPayload::Factors { rank, .. } => Some(rank),
                    _ => None,
                };
                let entry = LayerEntry {
                    kind: layer.payload.kind(),
                    rank,
                    original_shape: layer.original_shape.clone(),
                    original_dtype: layer.original_dtype.as_str().to_string(),
                };
                (name.clone(), entry)
            })
            .collect();
        ArchiveManifest {
            format_version: archive.format_version as u64,
            tau: archive.tau,
            base_fingerprint: archive.base_fingerprint.clone(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            energy_mode: archive.energy_mode,
            mismatched_layers: archive.mismatched.clone(),
            layer_index,
        }
    }

    /// Sorted-key compact JSON.
    pub fn to_canonical_json(&self) -> String {
        // Round-tripping through `Value` sorts every object's keys.
        let value = serde_json::to_value(self).expect("manifest serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedHeader(format!("manifest JSON: {e}")))?;
        let version = value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| Error::MalformedHeader("manifest lacks an integer format_version".into()))?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::UnsupportedFormatVersion(version));
        }
        serde_json::from_value(value).map_err(|e| Error::MalformedHeader(format!("manifest: {e}")))
    }
}

fn mismatch(msg: impl Into<String>) -> Error {
    Error::ManifestTensorMismatch(msg.into())
}

/// Lays the archive out as a checkpoint container.
pub fn archive_to_checkpoint(archive: &DeltaArchive) -> Result<Checkpoint> {
    let mut ckpt = Checkpoint::new();
    for (name, layer) in &archive.layers {
        match &layer.payload {
            LayerPayload::Factors { a, b, .. } => {
                let dtype = layer.original_dtype;
                ckpt.insert(factor_record(format!("{name}{SUFFIX_A}"), dtype, a)?)?;
                ckpt.insert(factor_record(format!("{name}{SUFFIX_B}"), dtype, b)?)?;
            }
            LayerPayload::Dense { delta: t } | LayerPayload::Standalone { tensor: t } => {
                let mut t = t.clone();
                t.name = format!("{name}{SUFFIX_DENSE}");
                ckpt.insert(t)?;
            }
            LayerPayload::Unchanged => {}
        }
    }
    ckpt.metadata
        .insert(MANIFEST_KEY.to_string(), ArchiveManifest::from_archive(archive).to_canonical_json());
    Ok(ckpt)
}

fn factor_record(name: String, dtype: Dtype, m: &Matrix) -> Result<TensorRecord> {
    TensorRecord::from_f64(name, dtype, vec![m.rows(), m.cols()], m.as_slice())
}

/// Inverse of [`archive_to_checkpoint`], checking that manifest and tensors
/// agree.
pub fn archive_from_checkpoint(mut ckpt: Checkpoint) -> Result<DeltaArchive> {
    let text = ckpt.metadata.remove(MANIFEST_KEY).ok_or(Error::MissingManifest)?;
    let manifest = ArchiveManifest::parse(&text)?;
    validate_tau(manifest.tau)?;
    if manifest.base_fingerprint.len() != 64 || !manifest.base_fingerprint.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(Error::MalformedHeader("base_fingerprint is not 64 hex characters".into()));
    }

    let mut tensors = std::mem::take(&mut ckpt.tensors);
    let mut layers = BTreeMap::new();
    for (name, entry) in &manifest.layer_index {
        let dtype: Dtype = entry.original_dtype.parse()?;
        let (d, k) = matrix_dims(&entry.original_shape);
        let mut take = |suffix: &str| {
            tensors
                .remove(&format!("{name}{suffix}"))
                .ok_or_else(|| mismatch(format!("layer `{name}` is {:?} but `{name}{suffix}` is missing", entry.kind)))
        };
        if entry.rank.is_some() != (entry.kind == LayerKind::Factors) {
            return Err(mismatch(format!("layer `{name}`: rank must be present exactly for factors")));
        }
        let payload = match entry.kind {
            LayerKind::Factors => {
                let rank = entry.rank.expect("checked above");
                let a = take(SUFFIX_A)?;
                let b = take(SUFFIX_B)?;
                if rank == 0 || rank > d.min(k) {
                    return Err(mismatch(format!("layer `{name}`: rank {rank} invalid for {d}x{k}")));
                }
                if a.shape != [d, rank] || b.shape != [rank, k] {
                    return Err(mismatch(format!(
                        "layer `{name}`: factors {:?} x {:?} do not match {d}x{k} at rank {rank}",
                        a.shape, b.shape
                    )));
                }
                if a.dtype != dtype || b.dtype != dtype {
                    return Err(mismatch(format!("layer `{name}`: factor dtype differs from {dtype}")));
                }
                LayerPayload::Factors {
                    a: Matrix::from_vec(d, rank, a.to_f64_vec())?,
                    b: Matrix::from_vec(rank, k, b.to_f64_vec())?,
                    rank,
                }
            }
            LayerKind::Dense | LayerKind::Standalone => {
                let t = take(SUFFIX_DENSE)?;
                if t.shape != entry.original_shape || t.dtype != dtype {
                    return Err(mismatch(format!(
                        "layer `{name}`: stored {} {:?} but manifest says {dtype} {:?}",
                        t.dtype, t.shape, entry.original_shape
                    )));
                }
                if entry.kind == LayerKind::Dense {
                    LayerPayload::Dense { delta: t }
                } else {
                    LayerPayload::Standalone { tensor: t }
                }
            }
            LayerKind::Unchanged => LayerPayload::Unchanged,
        };
        layers.insert(
            name.clone(),
            CompressedLayer {
                name: name.clone(),
                original_shape: entry.original_shape.clone(),
                original_dtype: dtype,
                payload,
            },
        );
    }
    if let Some(extra) = tensors.keys().next() {
        return Err(mismatch(format!("tensor `{extra}` is not described by the manifest")));
    }

    Ok(DeltaArchive::new(
        layers,
        manifest.tau,
        manifest.energy_mode,
        manifest.base_fingerprint,
        manifest.mismatched_layers,
    ))
}

pub fn save_archive(archive: &DeltaArchive, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint(&archive_to_checkpoint(archive)?, path)
}

pub fn load_archive(path: impl AsRef<Path>) -> Result<DeltaArchive> {
    archive_from_checkpoint(read_checkpoint(path)?)
}
