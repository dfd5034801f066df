//! Error taxonomy shared by every stage of the pipeline.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("unsupported dtype `{0}` (expected F32 or F16)")]
    UnsupportedDtype(String),

    #[error("duplicate tensor name `{0}`")]
    DuplicateName(String),

    #[error("invalid tensor `{name}`: {reason}")]
    InvalidTensor { name: String, reason: String },

    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("svd failed to converge after {iterations} iterations on a {rows}x{cols} matrix{}", layer.as_ref().map(|l| format!(" (layer `{l}`)")).unwrap_or_default())]
    ConvergenceFailure {
        rows: usize,
        cols: usize,
        iterations: usize,
        layer: Option<String>,
    },

    #[error("total singular value energy is zero")]
    ZeroEnergy,

    #[error("energy threshold tau = {0} is outside (0, 1]")]
    InvalidTau(f64),

    #[error("layer `{name}` is present only in the {only_in} checkpoint")]
    LayerSetMismatch { name: String, only_in: &'static str },

    #[error("shape mismatch for layer `{name}`: {left:?} vs {right:?}")]
    ShapeMismatch {
        name: String,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("base fingerprint mismatch: archive expects {expected}, base has {actual}")]
    FingerprintMismatch { expected: String, actual: String },

    #[error("archive has no `dsvd_manifest` metadata entry")]
    MissingManifest,

    #[error("manifest/tensor mismatch: {0}")]
    ManifestTensorMismatch(String),

    #[error("unsupported archive format version {0}")]
    UnsupportedFormatVersion(u64),

    #[error("checkpoints share no layer with a matching shape")]
    NoSharedLayers,

    #[error("image of {rows}x{cols} is smaller than the {window}x{window} window")]
    WindowTooLarge {
        rows: usize,
        cols: usize,
        window: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::MalformedHeader(_) => "MalformedHeader",
            Error::UnsupportedDtype(_) => "UnsupportedDtype",
            Error::DuplicateName(_) => "DuplicateName",
            Error::InvalidTensor { .. } => "InvalidTensor",
            Error::IoFailure { .. } => "IoFailure",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::ZeroEnergy => "ZeroEnergy",
            Error::InvalidTau(_) => "InvalidTau",
            Error::LayerSetMismatch { .. } => "LayerSetMismatch",
            Error::ShapeMismatch { .. } => "ShapeMismatch",
            Error::FingerprintMismatch { .. } => "FingerprintMismatch",
            Error::MissingManifest => "MissingManifest",
            Error::ManifestTensorMismatch(_) => "ManifestTensorMismatch",
            Error::UnsupportedFormatVersion(_) => "UnsupportedFormatVersion",
            Error::NoSharedLayers => "NoSharedLayers",
            Error::WindowTooLarge { .. } => "WindowTooLarge",
            Error::InvalidArgument(_) => "InvalidArgument",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::IoFailure {
            path: path.into(),
            source,
        }
    }
}
