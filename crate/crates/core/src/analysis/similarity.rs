use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::flat_cosine;
use crate::tensor_store::Checkpoint;

/// Cosine above which a layer counts as effectively unchanged.
pub const UNCHANGED_COSINE: f64 = 0.9999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub layer: String,
    pub cosine: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub entries: Vec<SimilarityEntry>,
    /// Fraction of entries with cosine above [`UNCHANGED_COSINE`].
    pub fraction_unchanged: f64,
    pub threshold: f64,
}

/// Per-tensor cosine similarity between matching layers, in name order.
/// Layers whose shapes differ are left out.
pub fn layer_similarity_report(pre: &Checkpoint, ft: &Checkpoint) -> Result<SimilarityReport> {
    let entries: Vec<SimilarityEntry> = ft
        .iter()
        .filter_map(|ft_t| {
            let pre_t = pre.get(&ft_t.name)?;
            (pre_t.shape == ft_t.shape).then(|| SimilarityEntry {
                layer: ft_t.name.clone(),
                cosine: flat_cosine(&pre_t.to_f64_vec(), &ft_t.to_f64_vec()),
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(Error::NoSharedLayers);
    }
    let unchanged = entries.iter().filter(|e| e.cosine > UNCHANGED_COSINE).count();
    Ok(SimilarityReport {
        fraction_unchanged: unchanged as f64 / entries.len() as f64,
        threshold: UNCHANGED_COSINE,
        entries,
    })
}
