//! Delta extraction, energy-based rank truncation and reconstruction.

mod energy;
mod fingerprint;
mod layer;
mod pipeline;

pub use energy::{cumulative_energy, cumulative_energy_with, select_rank, validate_tau, EnergyMode, EnergyProfile};
pub use fingerprint::fingerprint;
pub use layer::{
    factorize_layer, factors_save_space, CompressedLayer, Factorization, LayerKind, LayerPayload, ZERO_ENERGY_SCALE,
};
pub use pipeline::{
    compress_checkpoint, compute_delta, reconstruct_checkpoint, CompressOptions, CompressionStats, DeltaArchive,
    MismatchPolicy, FORMAT_VERSION,
};
