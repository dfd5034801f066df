//! Content hash binding an archive to the base checkpoint it was built from.
//!
//! SHA-256 over a domain tag, the canonical header (sorted names, no
//! container metadata) and every payload in name order. Two checkpoints with
//! the same tensors hash identically regardless of file layout or metadata.

use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::tensor_store::{encode_header, Checkpoint};

const DOMAIN_TAG: &[u8] = b"dsvd-fingerprint-v1\0";

/// Lowercase hex SHA-256 of the checkpoint's tensor content (64 chars).
pub fn fingerprint(ckpt: &Checkpoint) -> Result<String> {
    let header = encode_header(ckpt, false)?;
    let mut hasher = Sha256::new();
    hasher.update(DOMAIN_TAG);
    hasher.update((header.len() as u64).to_le_bytes());
    hasher.update(&header);
    for t in ckpt.tensors.values() {
        hasher.update(&t.data);
    }
    Ok(format!("{:x}", hasher.finalize()))
}
