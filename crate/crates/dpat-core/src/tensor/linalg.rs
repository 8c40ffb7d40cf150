//! Row-major f64 matrix kernels shared by matmul and conv2d.
//!
//! The kernels block four output rows per pass so each row of `b` is
//! streamed once per block instead of once per row. Parallel variants split
//! the output by row blocks; every output element is written by exactly one
//! task with a sequential inner sum, so results are bit-identical regardless
//! of thread count.

use rayon::prelude::*;

/// Work size above which the row-block loop goes parallel.
const PAR_THRESHOLD: usize = 1 << 18;

#[inline]
fn rows_nn(c: &mut [f64], a: &[f64], b: &[f64], i0: usize, rows: usize, k: usize, n: usize) {
    match rows {
        4 => {
            let (c0, rest) = c.split_at_mut(n);
            let (c1, rest) = rest.split_at_mut(n);
            let (c2, c3) = rest.split_at_mut(n);
            for p in 0..k {
                let a0 = a[i0 * k + p];
                let a1 = a[(i0 + 1) * k + p];
                let a2 = a[(i0 + 2) * k + p];
                let a3 = a[(i0 + 3) * k + p];
                let brow = &b[p * n..p * n + n];
                for j in 0..n {
                    let bv = brow[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        }
        _ => {
            for (r, crow) in c.chunks_mut(n).enumerate() {
                let i = i0 + r;
                for p in 0..k {
                    let av = a[i * k + p];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &b[p * n..p * n + n];
                    for (cv, bv) in crow.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                }
            }
        }
    }
}

/// c = a(m×k) · b(k×n)
pub fn gemm_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    let block = 4 * n;
    if m * k * n >= PAR_THRESHOLD && m > 4 {
        c.par_chunks_mut(block).enumerate().for_each(|(blk, cb)| {
            rows_nn(cb, a, b, blk * 4, cb.len() / n, k, n);
        });
    } else {
        for (blk, cb) in c.chunks_mut(block).enumerate() {
            rows_nn(cb, a, b, blk * 4, cb.len() / n, k, n);
        }
    }
    c
}

#[inline]
fn rows_nt(c: &mut [f64], a: &[f64], b: &[f64], i0: usize, k: usize, n: usize) {
    for (r, crow) in c.chunks_mut(n).enumerate() {
        let arow = &a[(i0 + r) * k..(i0 + r) * k + k];
        for (j, cv) in crow.iter_mut().enumerate() {
            let brow = &b[j * k..j * k + k];
            let mut acc = 0.0;
            for (av, bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *cv = acc;
        }
    }
}

/// c = a(m×k) · b(n×k)ᵀ — both operands traversed along contiguous rows.
pub fn gemm_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![0.0; m * n];
    if m * k * n >= PAR_THRESHOLD && m > 1 {
        c.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, ci)| rows_nt(ci, a, b, i, k, n));
    } else {
        rows_nt(&mut c, a, b, 0, k, n);
    }
    c
}

#[inline]
fn rows_tn(c: &mut [f64], a: &[f64], b: &[f64], i0: usize, rows: usize, m: usize, k: usize, n: usize) {
    match rows {
        4 => {
            let (c0, rest) = c.split_at_mut(n);
            let (c1, rest) = rest.split_at_mut(n);
            let (c2, c3) = rest.split_at_mut(n);
            for p in 0..k {
                let acol = &a[p * m + i0..p * m + i0 + 4];
                let (a0, a1, a2, a3) = (acol[0], acol[1], acol[2], acol[3]);
                let brow = &b[p * n..p * n + n];
                for j in 0..n {
                    let bv = brow[j];
                    c0[j] += a0 * bv;
                    c1[j] += a1 * bv;
                    c2[j] += a2 * bv;
                    c3[j] += a3 * bv;
                }
            }
        }
        _ => {
            for (r, crow) in c.chunks_mut(n).enumerate() {
                let i = i0 + r;
                for p in 0..k {
                    let av = a[p * m + i];
                    if av == 0.0 {
                        continue;
                    }
                    let brow = &b[p * n..p * n + n];
                    for (cv, bv) in crow.iter_mut().zip(brow) {
                        *cv += av * bv;
                    }
                }
            }
        }
    }
}

/// c = a(k×m)ᵀ · b(k×n)
pub fn gemm_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    let block = 4 * n;
    if m * k * n >= PAR_THRESHOLD && m > 4 {
        c.par_chunks_mut(block).enumerate().for_each(|(blk, cb)| {
            rows_tn(cb, a, b, blk * 4, cb.len() / n, m, k, n);
        });
    } else {
        for (blk, cb) in c.chunks_mut(block).enumerate() {
            rows_tn(cb, a, b, blk * 4, cb.len() / n, m, k, n);
        }
    }
    c
}

/// Unfolds `x` (c_in×h×w) into a (c_in·k·k)×(h·w) patch matrix for a same-
/// padded dilated convolution. Out-of-bounds taps read as zero.
pub fn im2col(x: &[f64], c_in: usize, h: usize, w: usize, k: usize, dilation: usize) -> Vec<f64> {
    let pad = (k - 1) * dilation / 2;
    let hw = h * w;
    let mut col = vec![0.0; c_in * k * k * hw];
    for c in 0..c_in {
        let plane = &x[c * hw..(c + 1) * hw];
        for kh in 0..k {
            for kw in 0..k {
                let row = &mut col[((c * k + kh) * k + kw) * hw..((c * k + kh) * k + kw + 1) * hw];
                let dy = (kh * dilation) as isize - pad as isize;
                let dx = (kw * dilation) as isize - pad as isize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).clamp(0, w as isize) as usize;
                    if x_lo >= x_hi {
                        continue;
                    }
                    let src = &plane[(sy as usize) * w..(sy as usize) * w + w];
                    let dst = &mut row[y * w + x_lo..y * w + x_hi];
                    let src = &src[(x_lo as isize + dx) as usize..(x_hi as isize + dx) as usize];
                    dst.copy_from_slice(src);
                }
            }
        }
    }
    col
}

/// Transposed counterpart of [`im2col`]: accumulates a patch-matrix gradient
/// back onto the (c_in×h×w) input layout.
pub fn col2im(col: &[f64], c_in: usize, h: usize, w: usize, k: usize, dilation: usize) -> Vec<f64> {
    let pad = (k - 1) * dilation / 2;
    let hw = h * w;
    let mut x = vec![0.0; c_in * hw];
    for c in 0..c_in {
        let plane = &mut x[c * hw..(c + 1) * hw];
        for kh in 0..k {
            for kw in 0..k {
                let row = &col[((c * k + kh) * k + kw) * hw..((c * k + kh) * k + kw + 1) * hw];
                let dy = (kh * dilation) as isize - pad as isize;
                let dx = (kw * dilation) as isize - pad as isize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x_lo = (-dx).max(0) as usize;
                    let x_hi = (w as isize - dx).clamp(0, w as isize) as usize;
                    if x_lo >= x_hi {
                        continue;
                    }
                    let dst = &mut plane
                        [(sy as usize) * w + (x_lo as isize + dx) as usize
                            ..(sy as usize) * w + (x_hi as isize + dx) as usize];
                    let src = &row[y * w + x_lo..y * w + x_hi];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
    x
}
