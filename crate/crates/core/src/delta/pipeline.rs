use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::tensor_store::{matrix_dims, Checkpoint, TensorRecord};

use super::energy::{validate_tau, EnergyMode};
use super::fingerprint::fingerprint;
use super::layer::{factorize_layer, CompressedLayer, Factorization, LayerPayload};

pub const FORMAT_VERSION: u32 = 1;

/// How layers present in only one of the two checkpoints are handled.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MismatchPolicy {
    #[default]
    Strict,
    /// Fine-tuned-only layers are stored whole, base-only layers are kept
    /// as unchanged. Both are counted in `mismatched_layers`.
    Skip,
}

impl fmt::Display for MismatchPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MismatchPolicy::Strict => "strict",
            MismatchPolicy::Skip => "skip",
        })
    }
}

impl FromStr for MismatchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(MismatchPolicy::Strict),
            "skip" => Ok(MismatchPolicy::Skip),
            other => Err(Error::InvalidArgument(format!("unknown mismatch policy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressOptions {
    pub tau: f64,
    pub policy: MismatchPolicy,
    pub energy_mode: EnergyMode,
}

impl CompressOptions {
    pub fn new(tau: f64) -> Self {
        CompressOptions {
            tau,
            policy: MismatchPolicy::Strict,
            energy_mode: EnergyMode::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionStats {
    /// Sum of `d * k` over every changed layer.
    pub dense_param_count: u64,
    /// Sum of `t * (d + k)` for factors plus full element counts otherwise.
    pub stored_param_count: u64,
    pub per_layer_rank: BTreeMap<String, usize>,
    pub tau: f64,
    pub mismatched_layers: usize,
}

impl CompressionStats {
    pub fn from_layers<'a>(layers: impl IntoIterator<Item = &'a CompressedLayer>, tau: f64, mismatched_layers: usize) -> Self {
        let mut stats = CompressionStats {
            dense_param_count: 0,
            stored_param_count: 0,
            per_layer_rank: BTreeMap::new(),
            tau,
            mismatched_layers,
        };
        for layer in layers {
            stats.dense_param_count += layer.dense_params();
            stats.stored_param_count += layer.stored_params();
            stats.per_layer_rank.insert(layer.name.clone(), layer.effective_rank());
        }
        stats
    }

    /// `dense / stored`, or `None` when nothing is stored.
    pub fn ratio(&self) -> Option<f64> {
        (self.stored_param_count > 0).then(|| self.dense_param_count as f64 / self.stored_param_count as f64)
    }
}

/// All compressed layers of one fine-tuned checkpoint plus provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaArchive {
    pub layers: BTreeMap<String, CompressedLayer>,
    pub tau: f64,
    pub energy_mode: EnergyMode,
    pub base_fingerprint: String,
    pub format_version: u32,
    /// Names that were present in only one checkpoint under
    /// [`MismatchPolicy::Skip`].
    pub mismatched: BTreeSet<String>,
    pub stats: CompressionStats,
}

impl DeltaArchive {
    pub fn new(
        layers: BTreeMap<String, CompressedLayer>,
        tau: f64,
        energy_mode: EnergyMode,
        base_fingerprint: String,
        mismatched: BTreeSet<String>,
    ) -> Self {
        let stats = CompressionStats::from_layers(layers.values(), tau, mismatched.len());
        DeltaArchive {
            layers,
            tau,
            energy_mode,
            base_fingerprint,
            format_version: FORMAT_VERSION,
            mismatched,
            stats,
        }
    }
}

/// `w_ft - w_pre`, element-wise.
pub fn compute_delta(w_ft: &Matrix, w_pre: &Matrix) -> Result<Matrix> {
    w_ft.sub(w_pre)
}

enum Job<'a> {
    Pair { pre: &'a TensorRecord, ft: &'a TensorRecord },
    Standalone(&'a TensorRecord),
    BaseOnly(&'a TensorRecord),
}

/// Compresses every layer of `ft` against `pre`.
///
/// Layers are processed in parallel on the current rayon pool; the result
/// does not depend on the pool size.
pub fn compress_checkpoint(pre: &Checkpoint, ft: &Checkpoint, options: &CompressOptions) -> Result<DeltaArchive> {
    validate_tau(options.tau)?;
    let mut jobs = Vec::with_capacity(ft.len());
    let mut mismatched = BTreeSet::new();
    for (name, ft_t) in &ft.tensors {
        match pre.get(name) {
            Some(pre_t) => {
                if pre_t.shape != ft_t.shape {
                    return Err(Error::ShapeMismatch {
                        name: name.clone(),
                        left: pre_t.shape.clone(),
                        right: ft_t.shape.clone(),
                    });
                }
                jobs.push(Job::Pair { pre: pre_t, ft: ft_t });
            }
            None if options.policy == MismatchPolicy::Strict => {
                return Err(Error::LayerSetMismatch {
                    name: name.clone(),
                    only_in: "fine-tuned",
                });
            }
            None => {
                warn!(layer = %name, "layer missing from base checkpoint, storing it whole");
                mismatched.insert(name.clone());
                jobs.push(Job::Standalone(ft_t));
            }
        }
    }
    for (name, pre_t) in &pre.tensors {
        if ft.get(name).is_none() {
            if options.policy == MismatchPolicy::Strict {
                return Err(Error::LayerSetMismatch {
                    name: name.clone(),
                    only_in: "base",
                });
            }
            warn!(layer = %name, "layer missing from fine-tuned checkpoint, treating as unchanged");
            mismatched.insert(name.clone());
            jobs.push(Job::BaseOnly(pre_t));
        }
    }

    let layers: Vec<CompressedLayer> = jobs
        .par_iter()
        .map(|job| compress_job(job, options))
        .collect::<Result<_>>()?;
    let layers = layers.into_iter().map(|l| (l.name.clone(), l)).collect();
    Ok(DeltaArchive::new(
        layers,
        options.tau,
        options.energy_mode,
        fingerprint(pre)?,
        mismatched,
    ))
}

fn compress_job(job: &Job<'_>, options: &CompressOptions) -> Result<CompressedLayer> {
    let (pre, ft) = match job {
        Job::Pair { pre, ft } => (*pre, *ft),
        Job::Standalone(ft) => {
            let mut tensor = (*ft).clone();
            tensor.name = format!("{}.delta.dense", ft.name);
            return Ok(CompressedLayer {
                name: ft.name.clone(),
                original_shape: ft.shape.clone(),
                original_dtype: ft.dtype,
                payload: LayerPayload::Standalone { tensor },
            });
        }
        Job::BaseOnly(pre) => {
            return Ok(CompressedLayer {
                name: pre.name.clone(),
                original_shape: pre.shape.clone(),
                original_dtype: pre.dtype,
                payload: LayerPayload::Unchanged,
            });
        }
    };

    let name = &ft.name;
    let mut layer = CompressedLayer {
        name: name.clone(),
        original_shape: ft.shape.clone(),
        original_dtype: ft.dtype,
        payload: LayerPayload::Unchanged,
    };
    if ft.numel() == 0 {
        return Ok(layer);
    }
    let (d, k) = matrix_dims(&ft.shape);
    let delta = compute_delta(
        &Matrix::from_vec(d, k, ft.to_f64_vec())?,
        &Matrix::from_vec(d, k, pre.to_f64_vec())?,
    )?;
    let factorization = factorize_layer(&delta, options.tau, options.energy_mode).map_err(|e| match e {
        Error::ConvergenceFailure {
            rows, cols, iterations, ..
        } => Error::ConvergenceFailure {
            rows,
            cols,
            iterations,
            layer: Some(name.clone()),
        },
        other => other,
    })?;
    layer.payload = match factorization {
        Factorization::Factors { a, b, rank } => {
            debug!(layer = %name, rank, rows = d, cols = k, "factorized");
            LayerPayload::Factors { a, b, rank }
        }
        Factorization::Dense(delta) => LayerPayload::Dense {
            delta: TensorRecord::from_f64(
                format!("{name}.delta.dense"),
                ft.dtype,
                ft.shape.clone(),
                delta.as_slice(),
            )?,
        },
        Factorization::Unchanged => LayerPayload::Unchanged,
    };
    Ok(layer)
}

/// Adds the archived deltas back onto `base`.
///
/// Unless `force` is set, `base` must carry the fingerprint recorded in the
/// archive. Base tensors the archive does not mention are passed through.
pub fn reconstruct_checkpoint(base: &Checkpoint, archive: &DeltaArchive, force: bool) -> Result<Checkpoint> {
    let actual = fingerprint(base)?;
    if actual != archive.base_fingerprint {
        if !force {
            return Err(Error::FingerprintMismatch {
                expected: archive.base_fingerprint.clone(),
                actual,
            });
        }
        warn!(expected = %archive.base_fingerprint, %actual, "base fingerprint mismatch ignored");
    }

    let rebuilt: Vec<Option<TensorRecord>> = archive
        .layers
        .par_iter()
        .map(|(_, layer)| rebuild_layer(base, layer))
        .collect::<Result<_>>()?;

    let mut out = base.clone();
    for record in rebuilt.into_iter().flatten() {
        out.tensors.insert(record.name.clone(), record);
    }
    Ok(out)
}

fn rebuild_layer(base: &Checkpoint, layer: &CompressedLayer) -> Result<Option<TensorRecord>> {
    if let LayerPayload::Standalone { tensor } = &layer.payload {
        let mut t = tensor.clone();
        t.name = layer.name.clone();
        return Ok(Some(t));
    }
    let Some(base_t) = base.get(&layer.name) else {
        return Err(Error::LayerSetMismatch {
            name: layer.name.clone(),
            only_in: "archive",
        });
    };
    if base_t.shape != layer.original_shape {
        return Err(Error::ShapeMismatch {
            name: layer.name.clone(),
            left: base_t.shape.clone(),
            right: layer.original_shape.clone(),
        });
    }
    if matches!(layer.payload, LayerPayload::Unchanged) && base_t.dtype == layer.original_dtype {
        return Ok(None);
    }
    let delta = layer.delta_values()?.expect("standalone handled above");
    let values: Vec<f64> = base_t.to_f64_vec().iter().zip(&delta).map(|(w, d)| w + d).collect();
    TensorRecord::from_f64(layer.name.clone(), layer.original_dtype, layer.original_shape.clone(), &values).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ckpt(entries: &[(&str, Vec<usize>, Vec<f32>)]) -> Checkpoint {
        let mut c = Checkpoint::new();
        for (name, shape, values) in entries {
            c.insert(TensorRecord::from_f32(*name, shape.clone(), values).unwrap()).unwrap();
        }
        c
    }

    #[test]
    fn delta_arithmetic() {
        let d = compute_delta(&Matrix::from_rows(&[[2.0, 3.0]]), &Matrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert_eq!(d, Matrix::from_rows(&[[1.0, 2.0]]));
        let same = Matrix::from_rows(&[[1.5, -2.0]]);
        assert_eq!(compute_delta(&same, &same).unwrap(), Matrix::zeros(1, 2));
        assert!(matches!(compute_delta(&same, &Matrix::zeros(2, 1)), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn identical_checkpoints_are_all_unchanged() {
        let c = ckpt(&[("a", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]), ("b", vec![3], vec![0.0, 1.0, 2.0])]);
        let archive = compress_checkpoint(&c, &c, &CompressOptions::new(0.5)).unwrap();
        assert!(archive.layers.values().all(|l| l.payload == LayerPayload::Unchanged));
        assert_eq!(archive.stats.stored_param_count, 0);
        assert_eq!(archive.stats.dense_param_count, 0);
        assert_eq!(archive.stats.ratio(), None);
        assert_eq!(reconstruct_checkpoint(&c, &archive, false).unwrap(), c);
    }

    #[test]
    fn strict_policy_rejects_extra_layers() {
        let pre = ckpt(&[("a", vec![1], vec![1.0])]);
        let ft = ckpt(&[("a", vec![1], vec![1.0]), ("extra", vec![1], vec![2.0])]);
        let err = compress_checkpoint(&pre, &ft, &CompressOptions::new(0.5)).unwrap_err();
        assert!(matches!(&err, Error::LayerSetMismatch { name, .. } if name == "extra"));
        let err = compress_checkpoint(&ft, &pre, &CompressOptions::new(0.5)).unwrap_err();
        assert!(matches!(&err, Error::LayerSetMismatch { name, only_in: "base" } if name == "extra"));
    }

    #[test]
    fn skip_policy_keeps_standalone_layers() {
        let pre = ckpt(&[("a", vec![1], vec![1.0]), ("gone", vec![1], vec![5.0])]);
        let ft = ckpt(&[("a", vec![1], vec![1.0]), ("extra", vec![2], vec![2.0, 3.0])]);
        let options = CompressOptions {
            policy: MismatchPolicy::Skip,
            ..CompressOptions::new(0.5)
        };
        let archive = compress_checkpoint(&pre, &ft, &options).unwrap();
        assert_eq!(archive.stats.mismatched_layers, 2);
        assert!(matches!(archive.layers["extra"].payload, LayerPayload::Standalone { .. }));
        assert_eq!(archive.layers["gone"].payload, LayerPayload::Unchanged);
        let rebuilt = reconstruct_checkpoint(&pre, &archive, false).unwrap();
        assert_eq!(rebuilt.get("extra"), ft.get("extra"));
        assert_eq!(rebuilt.get("gone"), pre.get("gone"));
    }

    #[test]
    fn shape_mismatch_is_fatal_under_any_policy() {
        let pre = ckpt(&[("w", vec![2], vec![1.0, 2.0])]);
        let ft = ckpt(&[("w", vec![1, 2], vec![1.0, 2.0])]);
        for policy in [MismatchPolicy::Strict, MismatchPolicy::Skip] {
            let options = CompressOptions {
                policy,
                ..CompressOptions::new(0.5)
            };
            let err = compress_checkpoint(&pre, &ft, &options).unwrap_err();
            assert!(matches!(err, Error::ShapeMismatch { name, .. } if name == "w"));
        }
    }

    #[test]
    fn wrong_base_fails_fingerprint_unless_forced() {
        let pre = ckpt(&[("w", vec![2], vec![1.0, 2.0])]);
        let ft = ckpt(&[("w", vec![2], vec![1.5, 2.0])]);
        let other = ckpt(&[("w", vec![2], vec![0.0, 0.0])]);
        let archive = compress_checkpoint(&pre, &ft, &CompressOptions::new(1.0)).unwrap();
        let err = reconstruct_checkpoint(&other, &archive, false).unwrap_err();
        assert_eq!(err.code(), "FingerprintMismatch");
        let forced = reconstruct_checkpoint(&other, &archive, true).unwrap();
        assert_eq!(forced.get("w").unwrap().to_f64_vec(), vec![0.5, 0.0]);
    }

    #[test]
    fn invalid_tau_is_rejected_up_front() {
        let c = ckpt(&[("w", vec![1], vec![1.0])]);
        assert!(matches!(compress_checkpoint(&c, &c, &CompressOptions::new(1.5)), Err(Error::InvalidTau(_))));
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("skip".parse::<MismatchPolicy>().unwrap(), MismatchPolicy::Skip);
        assert!("lenient".parse::<MismatchPolicy>().is_err());
    }
}
