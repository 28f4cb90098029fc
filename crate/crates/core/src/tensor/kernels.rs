//! Raw compute kernels shared by the tensor ops.
//!
//! Parallel loops are partitioned by output element, never by reduction
//! axis, so results are bitwise-identical regardless of thread count.
//! Reductions accumulate in `T::Acc` (f64) per the numeric policy.

use num_traits::Zero;
use rayon::prelude::*;

use crate::scalar::{dot, Scalar};

/// `a (m,k) x b (k,n)` row-major.
pub fn matmul_nn<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    // Transpose b once so inner products read contiguous memory.
    let bt = transpose(b, k, n);
    matmul_nt(a, m, k, &bt, n)
}

/// `a (m,k) x b^T` where `b` is stored as `(n,k)` row-major.
pub fn matmul_nt<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    out.par_chunks_mut(n)
        .zip(a.par_chunks(k))
        .for_each(|(out_row, a_row)| {
            for (j, o) in out_row.iter_mut().enumerate() {
                *o = T::from_acc(dot(a_row, &b[j * k..(j + 1) * k]));
            }
        });
    out
}

/// Single-threaded `a (m,k) x b^T`, used inside per-batch parallel loops.
pub fn matmul_nt_seq<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for (out_row, a_row) in out.chunks_mut(n).zip(a.chunks(k)) {
        for (j, o) in out_row.iter_mut().enumerate() {
            *o = T::from_acc(dot(a_row, &b[j * k..(j + 1) * k]));
        }
    }
    out
}

/// Single-threaded `a^T (k,m) x b (m,n)` with `a` stored as `(m,k)`.
pub fn matmul_tn_seq<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut acc = vec![T::Acc::zero(); k * n];
    for r in 0..m {
        let b_row = &b[r * n..(r + 1) * n];
        for i in 0..k {
            let coef = a[r * k + i].acc();
            let acc_row = &mut acc[i * n..(i + 1) * n];
            for (s, &bv) in acc_row.iter_mut().zip(b_row) {
                *s += coef * bv.acc();
            }
        }
    }
    acc.into_iter().map(T::from_acc).collect()
}

/// `a^T (k,m) x b (m,n)` where `a` is stored as `(m,k)` row-major.
pub fn matmul_tn<T: Scalar>(a: &[T], m: usize, k: usize, b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); k * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, out_row)| {
        let mut acc = vec![T::Acc::zero(); n];
        for r in 0..m {
            let coef = a[r * k + i].acc();
            let b_row = &b[r * n..(r + 1) * n];
            for (s, &bv) in acc.iter_mut().zip(b_row) {
                *s += coef * bv.acc();
            }
        }
        for (o, s) in out_row.iter_mut().zip(acc) {
            *o = T::from_acc(s);
        }
    });
    out
}

pub fn transpose<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Output spatial extent of a strided window op: `floor((in + 2*pad - k)/stride) + 1`.
pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

pub struct ConvDims {
    pub batch: usize,
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvDims {
    fn patch_len(&self) -> usize {
        self.in_channels * self.k_h * self.k_w
    }
}

/// Receptive fields laid out kernel-major: row `j = (ci, kh, kw)` holds the
/// value under kernel tap `j` for every output position, contiguously. This
/// layout makes the conv contractions (short kernel axes) vectorize across
/// output positions instead.
fn im2colt<T: Scalar>(x_n: &[T], d: &ConvDims, colt: &mut [T]) {
    let positions = d.out_h * d.out_w;
    let (sh, sw) = d.stride;
    let (ph, pw) = d.padding;
    debug_assert_eq!(colt.len(), d.patch_len() * positions);
    let mut j = 0;
    for ci in 0..d.in_channels {
        let plane = &x_n[ci * d.in_h * d.in_w..(ci + 1) * d.in_h * d.in_w];
        for kh in 0..d.k_h {
            for kw in 0..d.k_w {
                let row = &mut colt[j * positions..(j + 1) * positions];
                for oh in 0..d.out_h {
                    let h = (oh * sh + kh) as isize - ph as isize;
                    let dst = &mut row[oh * d.out_w..(oh + 1) * d.out_w];
                    if h < 0 || h >= d.in_h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[h as usize * d.in_w..(h as usize + 1) * d.in_w];
                    if sw == 1 {
                        // Contiguous run with zero fringes where the window
                        // hangs past the input.
                        let w0 = kw as isize - pw as isize;
                        for (ow, slot) in dst.iter_mut().enumerate() {
                            let w = w0 + ow as isize;
                            *slot = if w < 0 || w >= d.in_w as isize {
                                T::zero()
                            } else {
                                src[w as usize]
                            };
                        }
                    } else {
                        for (ow, slot) in dst.iter_mut().enumerate() {
                            let w = (ow * sw + kw) as isize - pw as isize;
                            *slot = if w < 0 || w >= d.in_w as isize {
                                T::zero()
                            } else {
                                src[w as usize]
                            };
                        }
                    }
                }
                j += 1;
            }
        }
    }
}

/// `out_row[pos] += coef * src_row[pos]` over a full row, eight lanes wide.
#[inline]
fn axpy<T: Scalar>(coef: T, src: &[T], dst: &mut [T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d = *d + coef * s;
    }
}

/// Cross-correlation forward. `weight` is `(out_c, in_c, k_h, k_w)` row-major,
/// `bias` has `out_c` entries. Parallel over batch samples.
pub fn conv2d_forward<T: Scalar>(input: &[T], weight: &[T], bias: &[T], d: &ConvDims) -> Vec<T> {
    let in_plane = d.in_channels * d.in_h * d.in_w;
    let out_plane = d.out_channels * d.out_h * d.out_w;
    let positions = d.out_h * d.out_w;
    let patch_len = d.patch_len();
    let mut out = vec![T::zero(); d.batch * out_plane];
    out.par_chunks_mut(out_plane)
        .zip(input.par_chunks(in_plane))
        .for_each(|(out_n, x_n)| {
            let mut colt = vec![T::zero(); patch_len * positions];
            im2colt(x_n, d, &mut colt);
            for co in 0..d.out_channels {
                let w_row = &weight[co * patch_len..(co + 1) * patch_len];
                let out_row = &mut out_n[co * positions..(co + 1) * positions];
                out_row.fill(bias[co]);
                for (j, &w) in w_row.iter().enumerate() {
                    axpy(w, &colt[j * positions..(j + 1) * positions], out_row);
                }
            }
        });
    out
}

/// Gradient w.r.t. conv input. Parallel over batch samples.
pub fn conv2d_backward_input<T: Scalar>(grad_out: &[T], weight: &[T], d: &ConvDims) -> Vec<T> {
    let in_plane = d.in_channels * d.in_h * d.in_w;
    let out_plane = d.out_channels * d.out_h * d.out_w;
    let positions = d.out_h * d.out_w;
    let patch_len = d.patch_len();
    let (sh, sw) = d.stride;
    let (ph, pw) = d.padding;
    let mut grad_in = vec![T::zero(); d.batch * in_plane];
    grad_in
        .par_chunks_mut(in_plane)
        .zip(grad_out.par_chunks(out_plane))
        .for_each(|(gx_n, gy_n)| {
            // dcolt[j][pos] = sum_co gy[co][pos] * w[co][j], then scatter-add
            // each kernel-tap row back onto the input (col2im).
            let mut dcolt = vec![T::zero(); patch_len * positions];
            for co in 0..d.out_channels {
                let gy_row = &gy_n[co * positions..(co + 1) * positions];
                let w_row = &weight[co * patch_len..(co + 1) * patch_len];
                for (j, &w) in w_row.iter().enumerate() {
                    axpy(w, gy_row, &mut dcolt[j * positions..(j + 1) * positions]);
                }
            }
            let mut j = 0;
            for ci in 0..d.in_channels {
                let plane_base = ci * d.in_h * d.in_w;
                for kh in 0..d.k_h {
                    for kw in 0..d.k_w {
                        let row = &dcolt[j * positions..(j + 1) * positions];
                        for oh in 0..d.out_h {
                            let h = (oh * sh + kh) as isize - ph as isize;
                            if h < 0 || h >= d.in_h as isize {
                                continue;
                            }
                            let src = &row[oh * d.out_w..(oh + 1) * d.out_w];
                            let dst_base = plane_base + h as usize * d.in_w;
                            for (ow, &v) in src.iter().enumerate() {
                                let w = (ow * sw + kw) as isize - pw as isize;
                                if w >= 0 && w < d.in_w as isize {
                                    gx_n[dst_base + w as usize] += v;
                                }
                            }
                        }
                        j += 1;
                    }
                }
            }
        });
    grad_in
}

/// Gradients w.r.t. conv weight and bias. Per-sample partials are computed in
/// parallel and reduced in batch order.
pub fn conv2d_backward_params<T: Scalar>(
    input: &[T],
    grad_out: &[T],
    d: &ConvDims,
) -> (Vec<T>, Vec<T>) {
    let in_plane = d.in_channels * d.in_h * d.in_w;
    let out_plane = d.out_channels * d.out_h * d.out_w;
    let positions = d.out_h * d.out_w;
    let patch_len = d.patch_len();
    let partials: Vec<(Vec<T::Acc>, Vec<T::Acc>)> = (0..d.batch)
        .into_par_iter()
        .map(|n| {
            let x_n = &input[n * in_plane..(n + 1) * in_plane];
            let gy_n = &grad_out[n * out_plane..(n + 1) * out_plane];
            let mut colt = vec![T::zero(); patch_len * positions];
            im2colt(x_n, d, &mut colt);
            let mut gw = Vec::with_capacity(d.out_channels * patch_len);
            let mut gb = Vec::with_capacity(d.out_channels);
            let ones = vec![T::one(); positions];
            for co in 0..d.out_channels {
                let gy_row = &gy_n[co * positions..(co + 1) * positions];
                for j in 0..patch_len {
                    gw.push(dot(gy_row, &colt[j * positions..(j + 1) * positions]));
                }
                gb.push(dot(gy_row, &ones));
            }
            (gw, gb)
        })
        .collect();

    let mut gw_total = vec![T::Acc::zero(); d.out_channels * patch_len];
    let mut gb_total = vec![T::Acc::zero(); d.out_channels];
    for (gw, gb) in partials {
        for (t, v) in gw_total.iter_mut().zip(gw) {
            *t += v;
        }
        for (t, v) in gb_total.iter_mut().zip(gb) {
            *t += v;
        }
    }
    (
        gw_total.into_iter().map(T::from_acc).collect(),
        gb_total.into_iter().map(T::from_acc).collect(),
    )
}

pub struct PoolDims {
    pub batch: usize,
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub k_h: usize,
    pub k_w: usize,
    pub stride: (usize, usize),
    pub out_h: usize,
    pub out_w: usize,
}

pub fn avg_pool2d_forward<T: Scalar>(input: &[T], d: &PoolDims) -> Vec<T> {
    let plane_in = d.in_h * d.in_w;
    let plane_out = d.out_h * d.out_w;
    let window = T::from_f64((d.k_h * d.k_w) as f64);
    let mut out = vec![T::zero(); d.batch * d.channels * plane_out];
    out.par_chunks_mut(plane_out)
        .zip(input.par_chunks(plane_in))
        .for_each(|(out_p, in_p)| {
            for oh in 0..d.out_h {
                for ow in 0..d.out_w {
                    let mut acc = T::Acc::zero();
                    for kh in 0..d.k_h {
                        let row = (oh * d.stride.0 + kh) * d.in_w + ow * d.stride.1;
                        for kw in 0..d.k_w {
                            acc += in_p[row + kw].acc();
                        }
                    }
                    out_p[oh * d.out_w + ow] = T::from_acc(acc) / window;
                }
            }
        });
    out
}

pub fn avg_pool2d_backward<T: Scalar>(grad_out: &[T], d: &PoolDims) -> Vec<T> {
    let plane_in = d.in_h * d.in_w;
    let plane_out = d.out_h * d.out_w;
    let inv_window = T::one() / T::from_f64((d.k_h * d.k_w) as f64);
    let mut grad_in = vec![T::zero(); d.batch * d.channels * plane_in];
    grad_in
        .par_chunks_mut(plane_in)
        .zip(grad_out.par_chunks(plane_out))
        .for_each(|(gx_p, gy_p)| {
            for oh in 0..d.out_h {
                for ow in 0..d.out_w {
                    let g = gy_p[oh * d.out_w + ow] * inv_window;
                    for kh in 0..d.k_h {
                        let row = (oh * d.stride.0 + kh) * d.in_w + ow * d.stride.1;
                        for kw in 0..d.k_w {
                            gx_p[row + kw] += g;
                        }
                    }
                }
            }
        });
    grad_in
}
