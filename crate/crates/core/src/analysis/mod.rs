//! Diagnostics over checkpoints and archives: layer similarity, per-group
//! rank averages, storage accounting and SSIM.

mod fidelity;
mod ranks;
mod report;
mod similarity;
mod ssim;

pub use fidelity::{fidelity_report, FidelityReport, LayerError};
pub use ranks::{rank_table, LayerGroup, LayerGroupSpec, OTHER_GROUP};
pub use report::{compression_report, CompressionReport, LayerReport, Ratio};
pub use similarity::{layer_similarity_report, SimilarityEntry, SimilarityReport, UNCHANGED_COSINE};
pub use ssim::{ssim, SSIM_K1, SSIM_K2, SSIM_WINDOW};
