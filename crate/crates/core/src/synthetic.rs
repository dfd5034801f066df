//! Seeded synthetic checkpoints for tests, benchmarks and demos.
//!
//! Base weights are uniform in `[-1, 1)`. Fine-tuned variants add either an
//! exact low-rank update (a sum of outer products) or a dense random update
//! to chosen layers, then narrow back to the storage dtype.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor_store::{matrix_dims, Checkpoint, Dtype, TensorRecord};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// F32 checkpoint with uniformly random weights for each `(name, shape)`.
pub fn random_checkpoint(layers: &[(String, Vec<usize>)], seed: u64) -> Result<Checkpoint> {
    let mut rng = rng(seed);
    let mut ckpt = Checkpoint::new();
    for (name, shape) in layers {
        let n = shape.iter().product::<usize>();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        ckpt.insert(TensorRecord::from_f64(name.clone(), Dtype::F32, shape.clone(), &values)?)?;
    }
    Ok(ckpt)
}

/// Adds `sum_{r < rank} scale * u_r v_r^T` to the matrix view of each
/// selected layer. Random Gaussian-like factors make the update exactly
/// rank `min(rank, d, k)` with probability one.
pub fn perturb_low_rank(
    base: &Checkpoint,
    selected: impl Fn(&TensorRecord) -> bool,
    rank: usize,
    scale: f64,
    seed: u64,
) -> Result<Checkpoint> {
    let mut rng = rng(seed);
    perturb(base, selected, |t, values| {
        let (d, k) = matrix_dims(&t.shape);
        for _ in 0..rank {
            let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            for i in 0..d {
                for j in 0..k {
                    values[i * k + j] += scale * u[i] * v[j];
                }
            }
        }
    })
}

/// Adds independent uniform noise in `[-scale, scale)` to every element of
/// each selected layer.
pub fn perturb_dense(base: &Checkpoint, selected: impl Fn(&TensorRecord) -> bool, scale: f64, seed: u64) -> Result<Checkpoint> {
    let mut rng = rng(seed);
    perturb(base, selected, |_, values| {
        for v in values.iter_mut() {
            *v += rng.gen_range(-scale..scale);
        }
    })
}

fn perturb(
    base: &Checkpoint,
    selected: impl Fn(&TensorRecord) -> bool,
    mut update: impl FnMut(&TensorRecord, &mut Vec<f64>),
) -> Result<Checkpoint> {
    let mut out = base.clone();
    for t in base.iter() {
        if !selected(t) {
            continue;
        }
        let mut values = t.to_f64_vec();
        update(t, &mut values);
        let record = TensorRecord::from_f64(t.name.clone(), t.dtype, t.shape.clone(), &values)?;
        out.tensors.insert(t.name.clone(), record);
    }
    Ok(out)
}

/// Twelve layers cycling through `[64, 48]`, `[8, 4, 3, 3]` and `[77]`.
pub fn mixed_layers() -> Vec<(String, Vec<usize>)> {
    (0..12)
        .map(|i| {
            let shape = match i % 3 {
                0 => vec![64, 48],
                1 => vec![8, 4, 3, 3],
                _ => vec![77],
            };
            (format!("block{:02}.weight", i), shape)
        })
        .collect()
}

/// Roughly five million parameters named after the five UNet layer groups:
/// input/output convolutions, two down blocks, one mid block and three up
/// blocks, each block holding four 320x320 projections, one 1280x320
/// feed-forward matrix and biases.
pub fn unet_like_layers() -> Vec<(String, Vec<usize>)> {
    let mut layers = vec![
        ("conv_in.weight".to_string(), vec![320, 4, 3, 3]),
        ("conv_in.bias".to_string(), vec![320]),
        ("conv_out.weight".to_string(), vec![4, 320, 3, 3]),
        ("conv_out.bias".to_string(), vec![4]),
    ];
    let blocks = (0..2)
        .map(|i| format!("down_blocks.{i}"))
        .chain(std::iter::once("mid_block".to_string()))
        .chain((0..3).map(|i| format!("up_blocks.{i}")));
    for block in blocks {
        for proj in ["to_q", "to_k", "to_v", "to_out"] {
            layers.push((format!("{block}.attn.{proj}.weight"), vec![320, 320]));
        }
        layers.push((format!("{block}.attn.to_out.bias"), vec![320]));
        layers.push((format!("{block}.ff.weight"), vec![1280, 320]));
        layers.push((format!("{block}.ff.bias"), vec![1280]));
    }
    layers.sort();
    layers
}

/// True for tensors whose matrix view can carry a rank > 1 update.
pub fn is_matrix_like(t: &TensorRecord) -> bool {
    t.shape.len() >= 2
}
