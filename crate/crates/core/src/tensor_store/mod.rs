//! In-memory checkpoints and the safetensors-compatible container they are
//! stored in.
//!
//! Tensors keep their raw little-endian payload bytes so that a read/write
//! cycle reproduces the input exactly. Values are widened to `f64` only when
//! a computation asks for them (see [`TensorRecord::to_f64_vec`] and
//! [`as_matrix`]).

mod io;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use half::f16;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub use io::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub(crate) use io::encode_header;

/// Storage element type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dtype {
    F32,
    F16,
}

impl Dtype {
    pub fn size_in_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F16 => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "F32",
            Dtype::F16 => "F16",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "F32" => Ok(Dtype::F32),
            "F16" => Ok(Dtype::F16),
            other => Err(Error::UnsupportedDtype(other.to_string())),
        }
    }
}

/// Number of elements described by `shape`; the empty shape is a scalar.
pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// One named dense tensor with its raw row-major little-endian payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorRecord {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<usize>,
    pub data: Vec<u8>,
}

impl TensorRecord {
    /// Builds a record from raw bytes, checking the size invariant.
    pub fn new(name: impl Into<String>, dtype: Dtype, shape: Vec<usize>, data: Vec<u8>) -> Result<Self> {
        let record = TensorRecord {
            name: name.into(),
            dtype,
            shape,
            data,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn from_f32(name: impl Into<String>, shape: Vec<usize>, values: &[f32]) -> Result<Self> {
        let data = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        Self::new(name, Dtype::F32, shape, data)
    }

    /// Narrows `values` to `dtype` (round to nearest even) and packs them.
    pub fn from_f64(name: impl Into<String>, dtype: Dtype, shape: Vec<usize>, values: &[f64]) -> Result<Self> {
        let data = match dtype {
            Dtype::F32 => values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect(),
            Dtype::F16 => values
                .iter()
                .flat_map(|&v| f16::from_f64(v).to_le_bytes())
                .collect(),
        };
        Self::new(name, dtype, shape, data)
    }

    pub fn numel(&self) -> usize {
        numel(&self.shape)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidTensor {
                name: String::new(),
                reason: "tensor name is empty".into(),
            });
        }
        let expected = self
            .shape
            .iter()
            .try_fold(self.dtype.size_in_bytes(), |acc, &d| acc.checked_mul(d));
        match expected {
            Some(n) if n == self.data.len() => Ok(()),
            _ => Err(Error::InvalidTensor {
                name: self.name.clone(),
                reason: format!(
                    "shape {:?} of {} needs {} bytes but buffer holds {}",
                    self.shape,
                    self.dtype,
                    expected.map_or_else(|| "overflowing".to_string(), |n| n.to_string()),
                    self.data.len()
                ),
            }),
        }
    }

    /// Widens every element to `f64`. Exact for both storage dtypes.
    pub fn to_f64_vec(&self) -> Vec<f64> {
        match self.dtype {
            Dtype::F32 => self
                .data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            Dtype::F16 => self
                .data
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes([c[0], c[1]]).to_f64())
                .collect(),
        }
    }
}

/// `(rows, cols)` of the matrix view of a tensor shape.
///
/// 2-D shapes are kept, higher ranks flatten to `[shape[0], rest]` and 1-D
/// shapes become a single column. Scalars map to `1x1`.
pub fn matrix_dims(shape: &[usize]) -> (usize, usize) {
    match shape {
        [] => (1, 1),
        [d] => (*d, 1),
        [d, rest @ ..] => (*d, numel(rest)),
    }
}

/// Matrix view of a tensor with at least one dimension, widened to `f64`.
pub fn as_matrix(t: &TensorRecord) -> Result<Matrix> {
    if t.shape.is_empty() {
        return Err(Error::InvalidTensor {
            name: t.name.clone(),
            reason: "scalar tensors have no matrix view".into(),
        });
    }
    let (rows, cols) = matrix_dims(&t.shape);
    Matrix::from_vec(rows, cols, t.to_f64_vec())
}

/// Ordered collection of named tensors plus free-form string metadata.
///
/// Keys of `tensors` always equal the `name` of the record they map to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, TensorRecord>,
    pub metadata: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor, rejecting a name that is already present.
    pub fn insert(&mut self, record: TensorRecord) -> Result<()> {
        record.validate()?;
        if self.tensors.contains_key(&record.name) {
            return Err(Error::DuplicateName(record.name));
        }
        self.tensors.insert(record.name.clone(), record);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&TensorRecord> {
        self.tensors.get(name)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Tensors in lexicographic name order.
    pub fn iter(&self) -> impl Iterator<Item = &TensorRecord> {
        self.tensors.values()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.values().map(TensorRecord::numel).sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (key, record) in &self.tensors {
            record.validate()?;
            if key != &record.name {
                return Err(Error::InvalidTensor {
                    name: record.name.clone(),
                    reason: format!("stored under mismatched key `{key}`"),
                });
            }
        }
        Ok(())
    }
}
