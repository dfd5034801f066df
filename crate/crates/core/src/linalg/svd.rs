//! Thin SVD by Householder bidiagonalization followed by implicit-shift
//! Golub–Kahan QR sweeps on the bidiagonal.
//!
//! Both singular-vector factors are kept transposed while iterating, so every
//! Givens rotation touches two contiguous rows.

use crate::error::{Error, Result};

use super::Matrix;

/// Singular values below this fraction of the largest one are set to zero.
pub const RELATIVE_CLAMP: f64 = 1e-14;

/// Golub–Kahan steps allowed per unit of `min(rows, cols)`.
pub const ITERATIONS_PER_DIM: usize = 100;

/// Thin factorization `m = u * diag(sigma) * vt` with `r = min(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `rows x r`, orthonormal columns.
    pub u: Matrix,
    /// Length `r`, non-increasing, non-negative.
    pub sigma: Vec<f64>,
    /// `r x cols`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.sigma.iter().filter(|&&s| s > 0.0).count()
    }

    /// `u * diag(sigma) * vt` restricted to the leading `t` triples.
    pub fn reconstruct(&self, t: usize) -> Matrix {
        let t = t.min(self.sigma.len());
        let (d, k) = (self.u.rows(), self.vt.cols());
        let mut out = vec![0.0; d * k];
        for i in 0..d {
            let row = &mut out[i * k..(i + 1) * k];
            for p in 0..t {
                let w = self.u.get(i, p) * self.sigma[p];
                if w == 0.0 {
                    continue;
                }
                for (o, &v) in row.iter_mut().zip(self.vt.row(p)) {
                    *o += w * v;
                }
            }
        }
        Matrix::from_vec(d, k, out).expect("dimensions are positive")
    }
}

/// Thin SVD of a finite matrix.
///
/// Output is deterministic: singular triples are sorted by descending value
/// and each left singular vector is signed so that its largest-magnitude
/// entry (lowest index on ties) is non-negative.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::InvalidArgument("svd input contains NaN or infinite values".into()));
    }
    let (rows, cols) = m.shape();
    let (ut, sigma, vcols) = if rows >= cols {
        let (ut, sigma, vcols) = tall_svd(m.as_slice(), rows, cols)?;
        (ut, sigma, vcols)
    } else {
        // m^T = U' S V'^T  =>  m = V' S U'^T
        let (ut, sigma, vcols) = tall_svd(m.transpose().as_slice(), cols, rows)?;
        (vcols, sigma, ut)
    };
    let r = sigma.len();
    // `ut` holds the left vectors as rows (r x rows), `vcols` the right
    // vectors as rows (r x cols).
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut sorted_sigma: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    let top = sorted_sigma.first().copied().unwrap_or(0.0);
    for s in &mut sorted_sigma {
        if *s < RELATIVE_CLAMP * top {
            *s = 0.0;
        }
    }

    let mut u = vec![0.0; rows * r];
    let mut vt = vec![0.0; r * cols];
    for (p, &src) in order.iter().enumerate() {
        let left = &ut[src * rows..(src + 1) * rows];
        let right = &vcols[src * cols..(src + 1) * cols];
        let mut pivot = 0;
        for (i, v) in left.iter().enumerate() {
            if v.abs() > left[pivot].abs() {
                pivot = i;
            }
        }
        let sign = if left[pivot] < 0.0 { -1.0 } else { 1.0 };
        for (i, &v) in left.iter().enumerate() {
            u[i * r + p] = sign * v;
        }
        for (dst, &v) in vt[p * cols..(p + 1) * cols].iter_mut().zip(right) {
            *dst = sign * v;
        }
    }

    Ok(SvdResult {
        u: Matrix::from_vec(rows, r, u)?,
        sigma: sorted_sigma,
        vt: Matrix::from_vec(r, cols, vt)?,
    })
}

struct Reflector {
    v: Vec<f64>,
    beta: f64,
}

impl Reflector {
    /// Householder reflector `I - beta v v^T` mapping `x` onto a multiple of
    /// the first unit vector. Returns the reflector and that multiple.
    fn new(x: &[f64]) -> (Reflector, f64) {
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return (
                Reflector {
                    v: vec![0.0; x.len()],
                    beta: 0.0,
                },
                0.0,
            );
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|e| e * e).sum();
        (Reflector { v, beta: 2.0 / vtv }, alpha)
    }

    /// Applies the reflector to a contiguous slice aligned with `v`.
    #[inline]
    fn apply(&self, x: &mut [f64]) {
        if self.beta == 0.0 {
            return;
        }
        let s: f64 = x.iter().zip(&self.v).map(|(a, b)| a * b).sum();
        let f = self.beta * s;
        for (a, b) in x.iter_mut().zip(&self.v) {
            *a -= f * b;
        }
    }
}

/// SVD of a row-major `d x k` matrix with `d >= k`.
///
/// Returns `(ut, sigma, vcols)`: `ut` is `k x d` with the left singular
/// vectors as rows, `vcols` is `k x k` with the right singular vectors as
/// rows. `sigma` is non-negative but unsorted.
fn tall_svd(input: &[f64], d: usize, k: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    debug_assert!(d >= k && k >= 1);
    // Normalize by a power of two (exact) so that the squared quantities in
    // the shift computation neither overflow nor underflow.
    let max_abs = input.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let exponent = if max_abs > 0.0 { max_abs.log2().floor().clamp(-1020.0, 1020.0) as i32 } else { 0 };
    let mut a: Vec<f64> = input.iter().map(|v| v * 2f64.powi(-exponent)).collect();
    let mut left: Vec<Reflector> = Vec::with_capacity(k);
    let mut right: Vec<Reflector> = Vec::with_capacity(k.saturating_sub(2));
    let mut diag = vec![0.0; k];
    let mut sup = vec![0.0; k.saturating_sub(1)];
    let mut col = vec![0.0; d];
    let mut work = vec![0.0; k];

    for j in 0..k {
        for i in j..d {
            col[i] = a[i * k + j];
        }
        let (h, alpha) = Reflector::new(&col[j..d]);
        if h.beta != 0.0 && j + 1 < k {
            // Columns j+1.. receive the reflection; column j becomes alpha*e1.
            let w = &mut work[..k - j - 1];
            w.fill(0.0);
            for i in j..d {
                let vi = h.v[i - j];
                for (acc, &x) in w.iter_mut().zip(&a[i * k + j + 1..(i + 1) * k]) {
                    *acc += vi * x;
                }
            }
            for i in j..d {
                let f = h.beta * h.v[i - j];
                for (x, &acc) in a[i * k + j + 1..(i + 1) * k].iter_mut().zip(w.iter()) {
                    *x -= f * acc;
                }
            }
        }
        diag[j] = alpha;
        left.push(h);

        if j + 1 < k {
            if k - j > 2 {
                let (g, alpha) = Reflector::new(&a[j * k + j + 1..(j + 1) * k]);
                for i in j + 1..d {
                    g.apply(&mut a[i * k + j + 1..(i + 1) * k]);
                }
                sup[j] = alpha;
                right.push(g);
            } else {
                sup[j] = a[j * k + j + 1];
            }
        }
    }

    // householder_ut = E^T H_{k-1} ... H_0; rows below j are untouched by H_j.
    let mut householder_ut = vec![0.0; k * d];
    for r in 0..k {
        householder_ut[r * d + r] = 1.0;
    }
    for (j, h) in left.iter().enumerate().rev() {
        for r in j..k {
            h.apply(&mut householder_ut[r * d + j..(r + 1) * d]);
        }
    }
    // vcols = V^T = G_m ... G_0, where G_j acts on coordinates j+1..k.
    let mut vcols = vec![0.0; k * k];
    for r in 0..k {
        vcols[r * k + r] = 1.0;
    }
    for (j, g) in right.iter().enumerate().rev() {
        for r in j + 1..k {
            g.apply(&mut vcols[r * k + j + 1..(r + 1) * k]);
        }
    }

    // Left rotations are collected in a k x k matrix and applied to the
    // Householder basis once at the end.
    let mut rotations = vec![0.0; k * k];
    for r in 0..k {
        rotations[r * k + r] = 1.0;
    }
    let mut bd = Bidiagonal {
        diag,
        sup,
        ut: rotations,
        vcols,
        d,
        k,
    };
    bd.diagonalize()?;

    let mut ut = vec![0.0; k * d];
    for r in 0..k {
        let out = &mut ut[r * d..(r + 1) * d];
        for (p, &w) in bd.ut[r * k..(r + 1) * k].iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &h) in out.iter_mut().zip(&householder_ut[p * d..(p + 1) * d]) {
                *o += w * h;
            }
        }
    }

    for i in 0..k {
        if bd.diag[i] < 0.0 {
            bd.diag[i] = -bd.diag[i];
            for v in &mut bd.vcols[i * k..(i + 1) * k] {
                *v = -*v;
            }
        }
    }
    let scale = 2f64.powi(exponent);
    let sigma = bd.diag.iter().map(|v| v * scale).collect();
    Ok((ut, sigma, bd.vcols))
}

struct Bidiagonal {
    diag: Vec<f64>,
    sup: Vec<f64>,
    /// Accumulated left rotations, `k x k`.
    ut: Vec<f64>,
    vcols: Vec<f64>,
    d: usize,
    k: usize,
}

#[inline]
fn givens(f: f64, g: f64) -> (f64, f64, f64) {
    if g == 0.0 {
        return (1.0, 0.0, f);
    }
    let r = f.hypot(g);
    (f / r, g / r, r)
}

/// `(x, y) <- (c x + s y, -s x + c y)` over two equal-length rows.
#[inline]
fn rotate_rows(buf: &mut [f64], len: usize, i: usize, j: usize, c: f64, s: f64) {
    debug_assert_ne!(i, j);
    let (lo, hi, swap) = if i < j { (i, j, false) } else { (j, i, true) };
    let (head, tail) = buf.split_at_mut(hi * len);
    let a = &mut head[lo * len..(lo + 1) * len];
    let b = &mut tail[..len];
    let (x, y) = if swap { (b, a) } else { (a, b) };
    for (p, q) in x.iter_mut().zip(y.iter_mut()) {
        let (xp, yq) = (*p, *q);
        *p = c * xp + s * yq;
        *q = -s * xp + c * yq;
    }
}

impl Bidiagonal {
    fn negligible(&self, i: usize) -> bool {
        self.sup[i].abs() <= f64::EPSILON * (self.diag[i].abs() + self.diag[i + 1].abs())
    }

    fn diagonalize(&mut self) -> Result<()> {
        let n = self.k;
        if n < 2 {
            return Ok(());
        }
        let anorm = (0..n)
            .map(|i| self.diag[i].abs() + if i + 1 < n { self.sup[i].abs() } else { 0.0 })
            .fold(0.0, f64::max);
        let small = f64::EPSILON * anorm;
        let max_steps = ITERATIONS_PER_DIM * n;
        let mut steps = 0usize;
        let mut hi = n - 1;

        while hi > 0 {
            if self.negligible(hi - 1) {
                self.sup[hi - 1] = 0.0;
                hi -= 1;
                continue;
            }
            let mut lo = hi - 1;
            while lo > 0 && !self.negligible(lo - 1) {
                lo -= 1;
            }
            if lo > 0 {
                self.sup[lo - 1] = 0.0;
            }

            steps += 1;
            if steps > max_steps {
                return Err(Error::ConvergenceFailure {
                    rows: self.d,
                    cols: self.k,
                    iterations: max_steps,
                    layer: None,
                });
            }

            if let Some(i) = (lo..=hi).find(|&i| self.diag[i].abs() <= small) {
                self.diag[i] = 0.0;
                if i < hi {
                    self.chase_row(i, hi);
                } else {
                    self.chase_column(lo, hi);
                }
                continue;
            }
            self.qr_step(lo, hi);
        }
        Ok(())
    }

    /// With `diag[i] == 0`, annihilates `sup[i]` by left rotations against
    /// rows `i+1..=hi`.
    fn chase_row(&mut self, i: usize, hi: usize) {
        let mut bulge = self.sup[i];
        self.sup[i] = 0.0;
        for j in i + 1..=hi {
            let (c, s, r) = givens(self.diag[j], bulge);
            self.diag[j] = r;
            if j < hi {
                bulge = -s * self.sup[j];
                self.sup[j] *= c;
            }
            rotate_rows(&mut self.ut, self.k, j, i, c, s);
        }
    }

    /// With `diag[hi] == 0`, annihilates `sup[hi-1]` by right rotations
    /// against columns `hi-1..=lo`.
    fn chase_column(&mut self, lo: usize, hi: usize) {
        let mut bulge = self.sup[hi - 1];
        self.sup[hi - 1] = 0.0;
        for j in (lo..hi).rev() {
            let (c, s, r) = givens(self.diag[j], bulge);
            self.diag[j] = r;
            if j > lo {
                bulge = -s * self.sup[j - 1];
                self.sup[j - 1] *= c;
            }
            rotate_rows(&mut self.vcols, self.k, j, hi, c, s);
        }
    }

    /// One implicit-shift QR sweep over the unreduced block `lo..=hi`.
    fn qr_step(&mut self, lo: usize, hi: usize) {
        let (dg, sp) = (&mut self.diag, &mut self.sup);

        // Wilkinson shift from the trailing 2x2 block of B^T B.
        let a = dg[hi - 1] * dg[hi - 1] + if hi - 1 > lo { sp[hi - 2] * sp[hi - 2] } else { 0.0 };
        let b = dg[hi - 1] * sp[hi - 1];
        let c = dg[hi] * dg[hi] + sp[hi - 1] * sp[hi - 1];
        let shift = if b == 0.0 {
            c
        } else {
            let delta = 0.5 * (a - c);
            let sgn = if delta >= 0.0 { 1.0 } else { -1.0 };
            c - b * b / (delta + sgn * delta.hypot(b))
        };

        let mut y = dg[lo] * dg[lo] - shift;
        let mut z = dg[lo] * sp[lo];
        for j in lo..hi {
            // Right rotation on columns j, j+1.
            let (c, s, r) = givens(y, z);
            if j > lo {
                sp[j - 1] = r;
            }
            let (dj, ej) = (dg[j], sp[j]);
            dg[j] = c * dj + s * ej;
            sp[j] = -s * dj + c * ej;
            let bulge = s * dg[j + 1];
            dg[j + 1] *= c;
            rotate_rows(&mut self.vcols, self.k, j, j + 1, c, s);

            // Left rotation on rows j, j+1.
            y = dg[j];
            z = bulge;
            let (c, s, r) = givens(y, z);
            dg[j] = r;
            let (ej, dn) = (sp[j], dg[j + 1]);
            sp[j] = c * ej + s * dn;
            dg[j + 1] = -s * ej + c * dn;
            if j + 1 < hi {
                y = sp[j];
                z = s * sp[j + 1];
                sp[j + 1] *= c;
            }
            rotate_rows(&mut self.ut, self.k, j, j + 1, c, s);
        }
    }
}
