//! Compression of fine-tuned checkpoint deltas by per-layer truncated SVD.
//!
//! The pipeline reads a pretrained and a fine-tuned checkpoint, factorizes
//! each layer's weight difference, keeps the smallest rank whose cumulative
//! singular-value energy reaches a threshold `tau`, and stores the factor
//! pairs in a single archive that can be added back onto the base model.

pub mod analysis;
pub mod delta;
pub mod error;
pub mod format;
pub mod linalg;
pub mod synthetic;
pub mod tensor_store;

pub use error::{Error, Result};
pub use linalg::{cosine_similarity, frobenius_norm, matmul, svd, Matrix, SvdResult};
pub use tensor_store::{as_matrix, read_checkpoint, write_checkpoint, Checkpoint, Dtype, TensorRecord};
pub use delta::{
    compress_checkpoint, reconstruct_checkpoint, CompressOptions, CompressedLayer, CompressionStats, DeltaArchive,
    EnergyMode, LayerPayload, MismatchPolicy,
};
pub use format::{load_archive, save_archive, ArchiveManifest};
