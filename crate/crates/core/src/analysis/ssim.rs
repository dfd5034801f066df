//! Mean SSIM over every 8x8 window (stride 1, uniform weights).

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const SSIM_WINDOW: usize = 8;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Sums of every `SSIM_WINDOW`-wide horizontal run, then every vertical run
/// of those, giving per-window totals of `f(x, y)`.
fn window_sums(x: &Matrix, y: &Matrix, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let (rows, cols) = x.shape();
    let w = SSIM_WINDOW;
    let out_cols = cols - w + 1;
    let mut horizontal = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let (xr, yr) = (x.row(r), y.row(r));
        for c in 0..out_cols {
            horizontal[r * out_cols + c] = (c..c + w).map(|j| f(xr[j], yr[j])).sum();
        }
    }
    let out_rows = rows - w + 1;
    let mut sums = vec![0.0; out_rows * out_cols];
    for r in 0..out_rows {
        for c in 0..out_cols {
            sums[r * out_cols + c] = (r..r + w).map(|i| horizontal[i * out_cols + c]).sum();
        }
    }
    sums
}

/// Structural similarity of two equally sized images with pixel range
/// `dynamic_range`, using population statistics per window and
/// `C1 = (K1 L)^2`, `C2 = (K2 L)^2`.
pub fn ssim(x: &Matrix, y: &Matrix, dynamic_range: f64) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(Error::DimensionMismatch(format!(
            "images are {}x{} and {}x{}",
            x.rows(),
            x.cols(),
            y.rows(),
            y.cols()
        )));
    }
    if !(dynamic_range > 0.0 && dynamic_range.is_finite()) {
        return Err(Error::InvalidArgument(format!("dynamic range must be positive, got {dynamic_range}")));
    }
    let (rows, cols) = x.shape();
    if rows < SSIM_WINDOW || cols < SSIM_WINDOW {
        return Err(Error::WindowTooLarge {
            rows,
            cols,
            window: SSIM_WINDOW,
        });
    }
    let c1 = (SSIM_K1 * dynamic_range).powi(2);
    let c2 = (SSIM_K2 * dynamic_range).powi(2);
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;

    let sx = window_sums(x, y, |a, _| a);
    let sy = window_sums(x, y, |_, b| b);
    let sxx = window_sums(x, y, |a, _| a * a);
    let syy = window_sums(x, y, |_, b| b * b);
    let sxy = window_sums(x, y, |a, b| a * b);

    let total: f64 = (0..sx.len())
        .map(|i| {
            let (mx, my) = (sx[i] / n, sy[i] / n);
            let vx = sxx[i] / n - mx * mx;
            let vy = syy[i] / n - my * my;
            let cov = sxy[i] / n - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / sx.len() as f64)
}
