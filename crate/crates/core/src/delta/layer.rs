use crate::error::Result;
use crate::linalg::{matmul, svd, Matrix};
use crate::tensor_store::{numel, Dtype, TensorRecord};

use super::energy::{cumulative_energy_with, select_rank, validate_tau, EnergyMode};

/// Scale of the zero-energy floor: a delta whose singular values sum to at
/// most `ZERO_ENERGY_SCALE * sqrt(numel)` counts as unchanged.
pub const ZERO_ENERGY_SCALE: f64 = 1e-12;

/// Outcome of factorizing one delta matrix.
#[derive(Debug, Clone, PartialEq)]
pub enum Factorization {
    /// `delta ~ a * b` with `a = U_t diag(sigma_1..t)` and `b = V_t^T`.
    Factors { a: Matrix, b: Matrix, rank: usize },
    /// Factors would not be smaller than the delta itself.
    Dense(Matrix),
    /// Energy at or below the zero floor.
    Unchanged,
}

/// True when rank-`t` factors of a `d x k` matrix are strictly smaller.
pub fn factors_save_space(rows: usize, cols: usize, rank: usize) -> bool {
    (rank as u128) * (rows as u128 + cols as u128) < rows as u128 * cols as u128
}

pub fn factorize_layer(delta: &Matrix, tau: f64, mode: EnergyMode) -> Result<Factorization> {
    validate_tau(tau)?;
    let (d, k) = delta.shape();
    let s = svd(delta)?;
    let linear_total: f64 = s.sigma.iter().sum();
    if linear_total <= ZERO_ENERGY_SCALE * ((d * k) as f64).sqrt() {
        return Ok(Factorization::Unchanged);
    }
    let profile = cumulative_energy_with(&s.sigma, mode)?;
    let rank = select_rank(&profile, tau)?;
    if !factors_save_space(d, k, rank) {
        return Ok(Factorization::Dense(delta.clone()));
    }

    let mut a = vec![0.0; d * rank];
    for i in 0..d {
        for p in 0..rank {
            a[i * rank + p] = s.u.get(i, p) * s.sigma[p];
        }
    }
    let b = s.vt.as_slice()[..rank * k].to_vec();
    Ok(Factorization::Factors {
        a: Matrix::from_vec(d, rank, a)?,
        b: Matrix::from_vec(rank, k, b)?,
        rank,
    })
}

/// Stored form of one layer's delta.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerPayload {
    Factors { a: Matrix, b: Matrix, rank: usize },
    /// Full delta in the layer's storage dtype.
    Dense { delta: TensorRecord },
    /// Layer absent from the base; the fine-tuned tensor is kept verbatim.
    Standalone { tensor: TensorRecord },
    Unchanged,
}

impl LayerPayload {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerPayload::Factors { .. } => LayerKind::Factors,
            LayerPayload::Dense { .. } => LayerKind::Dense,
            LayerPayload::Standalone { .. } => LayerKind::Standalone,
            LayerPayload::Unchanged => LayerKind::Unchanged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Factors,
    Dense,
    Standalone,
    Unchanged,
}

impl LayerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LayerKind::Factors => "factors",
            LayerKind::Dense => "dense",
            LayerKind::Standalone => "standalone",
            LayerKind::Unchanged => "unchanged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub name: String,
    pub original_shape: Vec<usize>,
    pub original_dtype: Dtype,
    pub payload: LayerPayload,
}

impl CompressedLayer {
    /// `(rows, cols)` of the layer's matrix view.
    pub fn matrix_dims(&self) -> (usize, usize) {
        crate::tensor_store::matrix_dims(&self.original_shape)
    }

    pub fn numel(&self) -> usize {
        numel(&self.original_shape)
    }

    /// Rank used for reporting: `t` for factors, full rank `min(d, k)` for
    /// dense and standalone tensors, zero when unchanged.
    pub fn effective_rank(&self) -> usize {
        let (d, k) = self.matrix_dims();
        match &self.payload {
            LayerPayload::Factors { rank, .. } => *rank,
            LayerPayload::Dense { .. } | LayerPayload::Standalone { .. } => d.min(k),
            LayerPayload::Unchanged => 0,
        }
    }

    /// Parameters of the dense delta this layer replaces (zero if unchanged).
    pub fn dense_params(&self) -> u64 {
        match self.payload {
            LayerPayload::Unchanged => 0,
            _ => self.numel() as u64,
        }
    }

    /// Parameters actually stored for this layer.
    pub fn stored_params(&self) -> u64 {
        let (d, k) = self.matrix_dims();
        match &self.payload {
            LayerPayload::Factors { rank, .. } => (*rank * (d + k)) as u64,
            LayerPayload::Dense { .. } | LayerPayload::Standalone { .. } => self.numel() as u64,
            LayerPayload::Unchanged => 0,
        }
    }

    /// Delta as a flat row-major vector in the original element order.
    /// `None` for standalone layers, whose payload replaces the base tensor.
    pub fn delta_values(&self) -> Result<Option<Vec<f64>>> {
        Ok(match &self.payload {
            LayerPayload::Factors { a, b, .. } => Some(matmul(a, b)?.into_vec()),
            LayerPayload::Dense { delta } => Some(delta.to_f64_vec()),
            LayerPayload::Unchanged => Some(vec![0.0; self.numel()]),
            LayerPayload::Standalone { .. } => None,
        })
    }
}
