//! Dense double-precision linear algebra used by the compression pipeline.

mod matrix;
mod svd;

pub use matrix::{cosine_similarity, frobenius_norm, matmul, Matrix};
pub(crate) use matrix::flat_cosine;
pub use svd::{svd, SvdResult, ITERATIONS_PER_DIM, RELATIVE_CLAMP};
