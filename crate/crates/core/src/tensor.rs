//! Dense row-major matrices and the handful of kernels the engine needs.
//!
//! All reductions run in a fixed order so results are bit-reproducible.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    /// New matrix with the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }
}

/// Dot product with four interleaved accumulators combined in a fixed order.
#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let chunks = n / 4;
    let (mut s0, mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0, 0.0);
    for c in 0..chunks {
        let i = c * 4;
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    ((s0 + s1) + (s2 + s3)) + tail
}

/// `y += alpha * x`
#[inline(always)]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

const TILE_R: usize = 4;
const TILE_C: usize = 8;

/// A 4x8 block of `acc[r][c] += a[t * a_t + r * a_r] * b[t * b_t + c]`
/// summed over `t` in ascending order.
#[derive(Clone, Copy)]
struct Micro {
    steps: usize,
    a_t: usize,
    a_r: usize,
    b_t: usize,
}

type Tile = [[f64; TILE_C]; TILE_R];

#[inline(always)]
fn micro_portable(acc: &mut Tile, a: &[f64], b: &[f64], g: Micro) {
    for t in 0..g.steps {
        let bv = &b[t * g.b_t..t * g.b_t + TILE_C];
        for (r, row) in acc.iter_mut().enumerate() {
            let av = a[t * g.a_t + r * g.a_r];
            for c in 0..TILE_C {
                row[c] += av * bv[c];
            }
        }
    }
}

/// `out (m x n) += x (m x k) . w (k x n)`
///
/// Register-tiled; every entry accumulates over `p` in ascending order.
pub fn matmul_acc(x: &[f64], w: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        return unsafe { simd::matmul_acc(x, w, out, m, k, n) };
    }
    matmul_acc_with(x, w, out, m, k, n, micro_portable)
}

#[inline(always)]
fn matmul_acc_with(
    x: &[f64],
    w: &[f64],
    out: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    micro: impl Fn(&mut Tile, &[f64], &[f64], Micro),
) {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let (mt, nt) = (m - m % TILE_R, n - n % TILE_C);
    if mt > 0 {
        let mut panel = vec![0.0; k * TILE_C];
        let g = Micro {
            steps: k,
            a_t: 1,
            a_r: k,
            b_t: TILE_C,
        };
        for j0 in (0..nt).step_by(TILE_C) {
            for p in 0..k {
                panel[p * TILE_C..(p + 1) * TILE_C]
                    .copy_from_slice(&w[p * n + j0..p * n + j0 + TILE_C]);
            }
            for i0 in (0..mt).step_by(TILE_R) {
                let mut acc = load_tile(out, n, i0, j0);
                micro(&mut acc, &x[i0 * k..], &panel, g);
                store_tile(&acc, out, n, i0, j0);
            }
        }
    }
    for i in 0..m {
        let cols = if i < mt { nt..n } else { 0..n };
        for j in cols {
            let mut acc = out[i * n + j];
            for p in 0..k {
                acc += x[i * k + p] * w[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
}

/// `dw (k x n) += x^T (k x m) . dy (m x n)`; every entry accumulates over `i` in order.
pub fn matmul_at_b_acc(x: &[f64], dy: &[f64], dw: &mut [f64], m: usize, k: usize, n: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        return unsafe { simd::matmul_at_b_acc(x, dy, dw, m, k, n) };
    }
    matmul_at_b_acc_with(x, dy, dw, m, k, n, micro_portable)
}

#[inline(always)]
fn matmul_at_b_acc_with(
    x: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    micro: impl Fn(&mut Tile, &[f64], &[f64], Micro),
) {
    debug_assert_eq!(x.len(), m * k);
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(dw.len(), k * n);
    let (kt, nt) = (k - k % TILE_R, n - n % TILE_C);
    if m > 0 && kt > 0 {
        let mut xt = vec![0.0; k * m];
        for i in 0..m {
            for p in 0..k {
                xt[p * m + i] = x[i * k + p];
            }
        }
        let mut panel = vec![0.0; m * TILE_C];
        let g = Micro {
            steps: m,
            a_t: 1,
            a_r: m,
            b_t: TILE_C,
        };
        for j0 in (0..nt).step_by(TILE_C) {
            for i in 0..m {
                panel[i * TILE_C..(i + 1) * TILE_C]
                    .copy_from_slice(&dy[i * n + j0..i * n + j0 + TILE_C]);
            }
            for p0 in (0..kt).step_by(TILE_R) {
                let mut acc = load_tile(dw, n, p0, j0);
                micro(&mut acc, &xt[p0 * m..], &panel, g);
                store_tile(&acc, dw, n, p0, j0);
            }
        }
    }
    for p in 0..k {
        let cols = if p < kt { nt..n } else { 0..n };
        for j in cols {
            let mut acc = dw[p * n + j];
            for i in 0..m {
                acc += x[i * k + p] * dy[i * n + j];
            }
            dw[p * n + j] = acc;
        }
    }
}

#[inline(always)]
fn load_tile(m: &[f64], n: usize, i0: usize, j0: usize) -> Tile {
    let mut t = [[0.0; TILE_C]; TILE_R];
    for (r, row) in t.iter_mut().enumerate() {
        row.copy_from_slice(&m[(i0 + r) * n + j0..(i0 + r) * n + j0 + TILE_C]);
    }
    t
}

#[inline(always)]
fn store_tile(t: &Tile, m: &mut [f64], n: usize, i0: usize, j0: usize) {
    for (r, row) in t.iter().enumerate() {
        m[(i0 + r) * n + j0..(i0 + r) * n + j0 + TILE_C].copy_from_slice(row);
    }
}

/// `dx (m x k) += dy (m x n) . w^T (n x k)`; every entry accumulates over `j` in order.
pub fn matmul_a_bt_acc(dy: &[f64], w: &[f64], dx: &mut [f64], m: usize, k: usize, n: usize) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2, checked above.
        return unsafe { simd::matmul_a_bt_acc(dy, w, dx, m, k, n) };
    }
    matmul_a_bt_acc_with(dy, w, dx, m, k, n, micro_portable)
}

#[inline(always)]
fn matmul_a_bt_acc_with(
    dy: &[f64],
    w: &[f64],
    dx: &mut [f64],
    m: usize,
    k: usize,
    n: usize,
    micro: impl Fn(&mut Tile, &[f64], &[f64], Micro),
) {
    debug_assert_eq!(dy.len(), m * n);
    debug_assert_eq!(w.len(), k * n);
    debug_assert_eq!(dx.len(), m * k);
    let (mt, kt) = (m - m % TILE_R, k - k % TILE_C);
    if mt > 0 && n > 0 {
        let mut panel = vec![0.0; n * TILE_C];
        let g = Micro {
            steps: n,
            a_t: 1,
            a_r: n,
            b_t: TILE_C,
        };
        for p0 in (0..kt).step_by(TILE_C) {
            for c in 0..TILE_C {
                for (j, &v) in w[(p0 + c) * n..(p0 + c + 1) * n].iter().enumerate() {
                    panel[j * TILE_C + c] = v;
                }
            }
            for i0 in (0..mt).step_by(TILE_R) {
                let mut acc = load_tile(dx, k, i0, p0);
                micro(&mut acc, &dy[i0 * n..], &panel, g);
                store_tile(&acc, dx, k, i0, p0);
            }
        }
    }
    for i in 0..m {
        let cols = if i < mt { kt..k } else { 0..k };
        for p in cols {
            let mut acc = dx[i * k + p];
            for j in 0..n {
                acc += dy[i * n + j] * w[p * n + j];
            }
            dx[i * k + p] = acc;
        }
    }
}

/// AVX2 builds of the kernels. Multiplies and adds stay separate (no FMA),
/// so every result is bit-identical to the portable path.
#[cfg(target_arch = "x86_64")]
mod simd {
    use std::arch::x86_64::*;

    use super::{Micro, Tile};

    #[target_feature(enable = "avx2")]
    fn micro(acc: &mut Tile, a: &[f64], b: &[f64], g: Micro) {
        if g.steps == 0 {
            return;
        }
        // bounds of the last element each stream touches
        assert!((g.steps - 1) * g.a_t + 3 * g.a_r < a.len());
        assert!((g.steps - 1) * g.b_t + 8 <= b.len());
        // SAFETY: every pointer offset below is covered by the asserts above.
        unsafe {
            let mut c = [[_mm256_setzero_pd(); 2]; 4];
            for (r, row) in acc.iter().enumerate() {
                c[r][0] = _mm256_loadu_pd(row.as_ptr());
                c[r][1] = _mm256_loadu_pd(row.as_ptr().add(4));
            }
            let (ap, bp) = (a.as_ptr(), b.as_ptr());
            for t in 0..g.steps {
                let b0 = _mm256_loadu_pd(bp.add(t * g.b_t));
                let b1 = _mm256_loadu_pd(bp.add(t * g.b_t + 4));
                for (r, cr) in c.iter_mut().enumerate() {
                    let av = _mm256_broadcast_sd(&*ap.add(t * g.a_t + r * g.a_r));
                    cr[0] = _mm256_add_pd(cr[0], _mm256_mul_pd(av, b0));
                    cr[1] = _mm256_add_pd(cr[1], _mm256_mul_pd(av, b1));
                }
            }
            for (r, row) in acc.iter_mut().enumerate() {
                _mm256_storeu_pd(row.as_mut_ptr(), c[r][0]);
                _mm256_storeu_pd(row.as_mut_ptr().add(4), c[r][1]);
            }
        }
    }

    #[target_feature(enable = "avx2")]
    pub(super) fn matmul_acc(x: &[f64], w: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
        super::matmul_acc_with(x, w, out, m, k, n, |t, a, b, g| micro(t, a, b, g))
    }

    #[target_feature(enable = "avx2")]
    pub(super) fn matmul_at_b_acc(
        x: &[f64],
        dy: &[f64],
        dw: &mut [f64],
        m: usize,
        k: usize,
        n: usize,
    ) {
        super::matmul_at_b_acc_with(x, dy, dw, m, k, n, |t, a, b, g| micro(t, a, b, g))
    }

    #[target_feature(enable = "avx2")]
    pub(super) fn matmul_a_bt_acc(
        dy: &[f64],
        w: &[f64],
        dx: &mut [f64],
        m: usize,
        k: usize,
        n: usize,
    ) {
        super::matmul_a_bt_acc_with(dy, w, dx, m, k, n, |t, a, b, g| micro(t, a, b, g))
    }
}

/// In-place numerically stable softmax of each row.
pub fn softmax_rows(m: &mut Matrix) {
    let cols = m.cols;
    for row in m.data.chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}
