//! Dense kernels. Matrices are row-major; image blocks use a
//! channel-major `[C, N, H, W]` layout so a whole block of frames
//! convolves with a single GEMM.

use super::Real;

/// C(m×n) = op(A)·op(B) (+ C when `acc`), where op(X) = X or Xᵀ.
/// `a` is stored m×k (or k×m when `ta`), `b` is k×n (or n×k when `tb`).
#[allow(clippy::too_many_arguments)]
pub fn matmul<T: Real>(m: usize, k: usize, n: usize, a: &[T], ta: bool, b: &[T], tb: bool, c: &mut [T], acc: bool) {
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    let beta = if acc { T::one() } else { T::zero() };
    T::gemm_raw(m, k, n, T::one(), a, rsa, csa, b, rsb, csb, beta, c, n as isize, 1);
}

/// Adds `bias[j]` to every row of the m×n matrix `y`.
pub fn add_row_bias<T: Real>(y: &mut [T], n: usize, bias: &[T]) {
    for row in y.chunks_exact_mut(n) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v = *v + *b;
        }
    }
}

/// Accumulates column sums of the m×n matrix `dy` into `db`.
pub fn acc_col_sums<T: Real>(dy: &[T], n: usize, db: &mut [T]) {
    for row in dy.chunks_exact(n) {
        for (d, v) in db.iter_mut().zip(row) {
            *d = *d + *v;
        }
    }
}

/// y[B×out] = x[B×in]·Wᵀ + b, with W stored `[out, in]`.
pub fn linear_forward<T: Real>(w: &[T], b: &[T], x: &[T], rows: usize, inp: usize, out: usize, y: &mut [T]) {
    matmul(rows, inp, out, x, false, w, true, y, false);
    add_row_bias(y, out, b);
}

/// Accumulates dW += dyᵀ·x and db += Σ dy; returns nothing.
#[allow(clippy::too_many_arguments)]
pub fn linear_param_grads<T: Real>(dy: &[T], x: &[T], rows: usize, inp: usize, out: usize, dw: &mut [T], db: &mut [T]) {
    matmul(out, rows, inp, dy, true, x, false, dw, true);
    acc_col_sums(dy, out, db);
}

/// dx[B×in] (+)= dy[B×out]·W.
pub fn linear_input_grad<T: Real>(w: &[T], dy: &[T], rows: usize, inp: usize, out: usize, dx: &mut [T], acc: bool) {
    matmul(rows, out, inp, dy, false, w, false, dx, acc);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Valid (unpadded) convolution geometry, or `None` when the kernel does
    /// not fit.
    pub fn new(in_c: usize, in_h: usize, in_w: usize, k: usize, stride: usize) -> Option<Self> {
        if k == 0 || stride == 0 || in_h < k || in_w < k {
            return None;
        }
        Some(Self {
            in_c,
            in_h,
            in_w,
            k,
            stride,
            out_h: (in_h - k) / stride + 1,
            out_w: (in_w - k) / stride + 1,
        })
    }

    pub fn patch(&self) -> usize {
        self.in_c * self.k * self.k
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds `x` ([C, N, H, W]) into `cols` ([C·k·k, N·oh·ow]).
pub fn im2col<T: Real>(g: &ConvGeom, n: usize, x: &[T], cols: &mut [T]) {
    let p = g.out_pixels();
    let row_len = n * p;
    let plane = g.in_h * g.in_w;
    debug_assert_eq!(x.len(), g.in_c * n * plane);
    debug_assert_eq!(cols.len(), g.patch() * row_len);
    for c in 0..g.in_c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let r = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[r * row_len..(r + 1) * row_len];
                for f in 0..n {
                    let src = &x[(c * n + f) * plane..(c * n + f + 1) * plane];
                    let dst = &mut dst[f * p..(f + 1) * p];
                    for oy in 0..g.out_h {
                        let iy = oy * g.stride + ky;
                        let srow = &src[iy * g.in_w..(iy + 1) * g.in_w];
                        let drow = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                        if g.stride == 1 {
                            drow.copy_from_slice(&srow[kx..kx + g.out_w]);
                        } else {
                            for (ox, d) in drow.iter_mut().enumerate() {
                                *d = srow[ox * g.stride + kx];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Folds `cols` back, accumulating into `dx` ([C, N, H, W]).
pub fn col2im<T: Real>(g: &ConvGeom, n: usize, cols: &[T], dx: &mut [T]) {
    let p = g.out_pixels();
    let row_len = n * p;
    let plane = g.in_h * g.in_w;
    for c in 0..g.in_c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let r = (c * g.k + ky) * g.k + kx;
                let src = &cols[r * row_len..(r + 1) * row_len];
                for f in 0..n {
                    let dst = &mut dx[(c * n + f) * plane..(c * n + f + 1) * plane];
                    let src = &src[f * p..(f + 1) * p];
                    for oy in 0..g.out_h {
                        let iy = oy * g.stride + ky;
                        let drow = &mut dst[iy * g.in_w..(iy + 1) * g.in_w];
                        let srow = &src[oy * g.out_w..(oy + 1) * g.out_w];
                        for (ox, s) in srow.iter().enumerate() {
                            let d = &mut drow[ox * g.stride + kx];
                            *d = *d + *s;
                        }
                    }
                }
            }
        }
    }
}

/// Bin `[start, end)` of output cell `i` when pooling `len` inputs into
/// `out` cells (floor/ceil split, so bins may overlap).
#[inline]
pub fn pool_bin(i: usize, len: usize, out: usize) -> (usize, usize) {
    (i * len / out, ((i + 1) * len).div_ceil(out))
}

/// Adaptive average pooling of `[C, N, H, W]` to `[C, N, oh, ow]`.
pub fn adaptive_avg_pool<T: Real>(x: &[T], cn: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cn * oh * ow];
    for p in 0..cn {
        let src = &x[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            let (y0, y1) = pool_bin(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_bin(j, w, ow);
                let mut s = T::zero();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        s = s + src[y * w + xx];
                    }
                }
                out[(p * oh + i) * ow + j] = s / T::of(((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward<T: Real>(dy: &[T], cn: usize, h: usize, w: usize, oh: usize, ow: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); cn * h * w];
    for p in 0..cn {
        let dst = &mut dx[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            let (y0, y1) = pool_bin(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_bin(j, w, ow);
                let g = dy[(p * oh + i) * ow + j] / T::of(((y1 - y0) * (x1 - x0)) as f64);
                for y in y0..y1 {
                    for xx in x0..x1 {
                        dst[y * w + xx] = dst[y * w + xx] + g;
                    }
                }
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_transposes() {
        // A = [[1,2,3],[4,5,6]] (2x3), B = [[1,0],[0,1],[1,1]] (3x2)
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [1.0f64, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = [0.0f64; 4];
        matmul(2, 3, 2, &a, false, &b, false, &mut c, false);
        assert_eq!(c, [4.0, 5.0, 10.0, 11.0]);
        let at = [1.0f64, 4.0, 2.0, 5.0, 3.0, 6.0];
        let bt = [1.0f64, 0.0, 1.0, 0.0, 1.0, 1.0];
        let mut c2 = [1.0f64; 4];
        matmul(2, 3, 2, &at, true, &bt, true, &mut c2, true);
        assert_eq!(c2, [5.0, 6.0, 11.0, 12.0]);
    }

    #[test]
    fn pool_bins_cover_input() {
        assert_eq!(pool_bin(0, 6, 2), (0, 3));
        assert_eq!(pool_bin(1, 6, 2), (3, 6));
        assert_eq!(pool_bin(0, 13, 4), (0, 4));
        assert_eq!(pool_bin(3, 13, 4), (9, 13));
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom::new(2, 5, 6, 3, 2).unwrap();
        let n = 2;
        let x: Vec<f64> = (0..2 * n * 30).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut cols = vec![0.0; g.patch() * n * g.out_pixels()];
        im2col(&g, n, &x, &mut cols);
        let c: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut dx = vec![0.0; x.len()];
        col2im(&g, n, &c, &mut dx);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
