//! Forward implementations of the differentiable ops.

use num_traits::{Float, Zero};
use rand::RngCore;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{dot, wide_sum, Scalar};
use crate::tensor::kernels::{self, ConvDims, PoolDims};
use crate::tensor::{Op, Tensor};

/// Element counts above this run elementwise maps in parallel.
const PAR_THRESHOLD: usize = 1 << 16;

/// Eight-lane sum of squared deviations, flushing to the wide accumulator in
/// fixed 64-element blocks (same determinism argument as `scalar::dot`).
fn sum_sq_dev<T: Scalar>(xs: &[T], mu: T) -> T::Acc {
    let mut acc = T::Acc::zero();
    let mut i = 0;
    while i + 64 <= xs.len() {
        let mut lanes = [T::zero(); 8];
        for k in 0..8 {
            let p = &xs[i + k * 8..i + k * 8 + 8];
            for j in 0..8 {
                let d = p[j] - mu;
                lanes[j] = lanes[j] + d * d;
            }
        }
        let block = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
            + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
        acc += block.acc();
        i += 64;
    }
    while i < xs.len() {
        let d = xs[i].acc() - mu.acc();
        acc += d * d;
        i += 1;
    }
    acc
}

impl<T: Scalar> Tensor<T> {
    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(Error::shape("add", self.shape(), other.shape()));
        }
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Add(self.clone(), other.clone()),
        ))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        if self.shape() != other.shape() {
            return Err(Error::shape("mul", self.shape(), other.shape()));
        }
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Mul(self.clone(), other.clone()),
        ))
    }

    /// Multiply by a plain constant.
    pub fn scale(&self, c: T) -> Tensor<T> {
        let values = self.values().iter().map(|&v| v * c).collect();
        Tensor::from_op(self.shape().to_vec(), values, Op::Scale(self.clone(), c))
    }

    /// Multiply every element by a single-element tensor (gradients flow to
    /// both factors).
    pub fn mul_scalar_tensor(&self, s: &Tensor<T>) -> Result<Tensor<T>> {
        if s.len() != 1 {
            return Err(Error::invalid(format!(
                "mul_scalar_tensor: scaling tensor must hold one element, got shape {:?}",
                s.shape()
            )));
        }
        let sv = s.values()[0];
        let values = self.values().iter().map(|&v| v * sv).collect();
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::MulScalarTensor(self.clone(), s.clone()),
        ))
    }

    /// 2D matrix product.
    pub fn matmul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_rank(2, "matmul lhs")?;
        other.check_rank(2, "matmul rhs")?;
        let (m, k) = (self.dim(0), self.dim(1));
        if other.dim(0) != k {
            return Err(Error::shape("matmul", self.shape(), other.shape()));
        }
        let n = other.dim(1);
        let values = kernels::matmul_nn(self.values(), m, k, other.values(), n);
        Ok(Tensor::from_op(
            vec![m, n],
            values,
            Op::Matmul(self.clone(), other.clone()),
        ))
    }

    /// Batched matrix product over a shared leading axis.
    pub fn bmm(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_rank(3, "bmm lhs")?;
        other.check_rank(3, "bmm rhs")?;
        let (b, m, k) = (self.dim(0), self.dim(1), self.dim(2));
        if other.dim(0) != b || other.dim(1) != k {
            return Err(Error::shape("bmm", self.shape(), other.shape()));
        }
        let n = other.dim(2);
        let mut values = vec![T::zero(); b * m * n];
        values
            .par_chunks_mut(m * n)
            .zip(self.values().par_chunks(m * k))
            .zip(other.values().par_chunks(k * n))
            .for_each(|((out, a), rhs)| {
                let rhs_t = kernels::transpose(rhs, k, n);
                for i in 0..m {
                    let a_row = &a[i * k..(i + 1) * k];
                    for j in 0..n {
                        out[i * n + j] = T::from_acc(dot(a_row, &rhs_t[j * k..(j + 1) * k]));
                    }
                }
            });
        Ok(Tensor::from_op(
            vec![b, m, n],
            values,
            Op::Bmm(self.clone(), other.clone()),
        ))
    }

    /// Affine map `x @ w + bias` with the bias broadcast over rows.
    pub fn linear(&self, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_rank(2, "linear input")?;
        weight.check_rank(2, "linear weight")?;
        bias.check_rank(1, "linear bias")?;
        let (m, k) = (self.dim(0), self.dim(1));
        if weight.dim(0) != k {
            return Err(Error::shape("linear", self.shape(), weight.shape()));
        }
        let n = weight.dim(1);
        if bias.dim(0) != n {
            return Err(Error::shape("linear bias", weight.shape(), bias.shape()));
        }
        let mut values = kernels::matmul_nn(self.values(), m, k, weight.values(), n);
        for row in values.chunks_mut(n) {
            for (v, &b) in row.iter_mut().zip(bias.values()) {
                *v += b;
            }
        }
        Ok(Tensor::from_op(
            vec![m, n],
            values,
            Op::Linear {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
            },
        ))
    }

    /// 2D cross-correlation over NCHW input with symmetric zero padding.
    pub fn conv2d(
        &self,
        weight: &Tensor<T>,
        bias: &Tensor<T>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Tensor<T>> {
        self.check_rank(4, "conv2d input")?;
        weight.check_rank(4, "conv2d weight")?;
        bias.check_rank(1, "conv2d bias")?;
        if stride.0 == 0 || stride.1 == 0 {
            return Err(Error::invalid("conv2d: stride components must be >= 1"));
        }
        let (batch, in_c, in_h, in_w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (out_c, w_in_c, k_h, k_w) =
            (weight.dim(0), weight.dim(1), weight.dim(2), weight.dim(3));
        if in_c != w_in_c {
            return Err(Error::shape("conv2d channels", self.shape(), weight.shape()));
        }
        if bias.dim(0) != out_c {
            return Err(Error::shape("conv2d bias", weight.shape(), bias.shape()));
        }
        if in_h + 2 * padding.0 < k_h || in_w + 2 * padding.1 < k_w {
            return Err(Error::shape("conv2d kernel exceeds input", self.shape(), weight.shape()));
        }
        let out_h = kernels::conv_out_dim(in_h, k_h, stride.0, padding.0);
        let out_w = kernels::conv_out_dim(in_w, k_w, stride.1, padding.1);
        let dims = ConvDims {
            batch,
            in_channels: in_c,
            in_h,
            in_w,
            out_channels: out_c,
            k_h,
            k_w,
            stride,
            padding,
            out_h,
            out_w,
        };
        let values = kernels::conv2d_forward(self.values(), weight.values(), bias.values(), &dims);
        Ok(Tensor::from_op(
            vec![batch, out_c, out_h, out_w],
            values,
            Op::Conv2d {
                input: self.clone(),
                weight: weight.clone(),
                bias: bias.clone(),
                stride,
                padding,
            },
        ))
    }

    /// Zero-pad the spatial axes of an NCHW tensor by (top, bottom, left, right).
    pub fn pad_zero2d(&self, pad: (usize, usize, usize, usize)) -> Result<Tensor<T>> {
        self.check_rank(4, "pad_zero2d input")?;
        let (batch, chans, in_h, in_w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let (top, bottom, left, right) = pad;
        let out_h = in_h + top + bottom;
        let out_w = in_w + left + right;
        let mut values = vec![T::zero(); batch * chans * out_h * out_w];
        for p in 0..batch * chans {
            let src = &self.values()[p * in_h * in_w..(p + 1) * in_h * in_w];
            let dst = &mut values[p * out_h * out_w..(p + 1) * out_h * out_w];
            for h in 0..in_h {
                let src_row = &src[h * in_w..(h + 1) * in_w];
                let start = (h + top) * out_w + left;
                dst[start..start + in_w].copy_from_slice(src_row);
            }
        }
        Ok(Tensor::from_op(
            vec![batch, chans, out_h, out_w],
            values,
            Op::PadZero2d {
                input: self.clone(),
                pad,
            },
        ))
    }

    /// Mean over sliding windows of an NCHW tensor (no padding).
    pub fn avg_pool2d(&self, kernel: (usize, usize), stride: (usize, usize)) -> Result<Tensor<T>> {
        self.check_rank(4, "avg_pool2d input")?;
        if stride.0 == 0 || stride.1 == 0 || kernel.0 == 0 || kernel.1 == 0 {
            return Err(Error::invalid("avg_pool2d: kernel/stride must be >= 1"));
        }
        let (batch, chans, in_h, in_w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        if kernel.0 > in_h || kernel.1 > in_w {
            return Err(Error::shape(
                "avg_pool2d window exceeds input",
                self.shape(),
                &[kernel.0, kernel.1],
            ));
        }
        let out_h = kernels::conv_out_dim(in_h, kernel.0, stride.0, 0);
        let out_w = kernels::conv_out_dim(in_w, kernel.1, stride.1, 0);
        let dims = PoolDims {
            batch,
            channels: chans,
            in_h,
            in_w,
            k_h: kernel.0,
            k_w: kernel.1,
            stride,
            out_h,
            out_w,
        };
        let values = kernels::avg_pool2d_forward(self.values(), &dims);
        Ok(Tensor::from_op(
            vec![batch, chans, out_h, out_w],
            values,
            Op::AvgPool2d {
                input: self.clone(),
                kernel,
                stride,
            },
        ))
    }

    /// Mean over both spatial axes, yielding `(N, C)`.
    pub fn global_avg_pool(&self) -> Result<Tensor<T>> {
        self.check_rank(4, "global_avg_pool input")?;
        let (batch, chans) = (self.dim(0), self.dim(1));
        let pooled = self.avg_pool2d((self.dim(2), self.dim(3)), (1, 1))?;
        pooled.reshape(&[batch, chans])
    }

    /// Normalize per channel using this batch's statistics; returns the output
    /// plus the batch mean/variance so the caller can update running stats.
    pub fn batch_norm_train(
        &self,
        scale: &Tensor<T>,
        shift: &Tensor<T>,
        eps: T,
    ) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
        self.check_rank(4, "batch_norm input")?;
        let (batch, chans, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let m = batch * h * w;
        if m < 2 {
            return Err(Error::invalid(
                "batch_norm: training mode needs at least 2 values per channel (got a single-element batch)",
            ));
        }
        check_affine(scale, shift, chans)?;
        let plane = h * w;
        let mut mean = vec![T::zero(); chans];
        let mut var = vec![T::zero(); chans];
        mean.par_iter_mut()
            .zip(var.par_iter_mut())
            .enumerate()
            .for_each(|(c, (mean_c, var_c))| {
                let mut acc = T::Acc::zero();
                for n in 0..batch {
                    let start = (n * chans + c) * plane;
                    acc = acc + wide_sum(&self.values()[start..start + plane]);
                }
                let mu = acc / T::acc_from_f64(m as f64);
                let mu_t = T::from_acc(mu);
                let mut vacc = T::Acc::zero();
                for n in 0..batch {
                    let start = (n * chans + c) * plane;
                    vacc = vacc + sum_sq_dev(&self.values()[start..start + plane], mu_t);
                }
                *mean_c = mu_t;
                *var_c = T::from_acc(vacc / T::acc_from_f64(m as f64));
            });
        let out = self.batch_norm_apply(scale, shift, &mean, &var, eps, true)?;
        Ok((out, mean, var))
    }

    /// Normalize per channel with externally supplied (running) statistics.
    pub fn batch_norm_eval(
        &self,
        scale: &Tensor<T>,
        shift: &Tensor<T>,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> Result<Tensor<T>> {
        self.check_rank(4, "batch_norm input")?;
        let chans = self.dim(1);
        check_affine(scale, shift, chans)?;
        if running_mean.len() != chans || running_var.len() != chans {
            return Err(Error::shape(
                "batch_norm running stats",
                self.shape(),
                &[running_mean.len(), running_var.len()],
            ));
        }
        self.batch_norm_apply(scale, shift, running_mean, running_var, eps, false)
    }

    fn batch_norm_apply(
        &self,
        scale: &Tensor<T>,
        shift: &Tensor<T>,
        mean: &[T],
        var: &[T],
        eps: T,
        batch_stats: bool,
    ) -> Result<Tensor<T>> {
        let (_batch, chans, h, w) = (self.dim(0), self.dim(1), self.dim(2), self.dim(3));
        let plane = h * w;
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut normalized = vec![T::zero(); self.len()];
        let mut values = vec![T::zero(); self.len()];
        normalized
            .par_chunks_mut(plane)
            .zip(values.par_chunks_mut(plane))
            .zip(self.values().par_chunks(plane))
            .enumerate()
            .for_each(|(p, ((norm_p, val_p), x_p))| {
                let c = p % chans;
                let (mu, is) = (mean[c], inv_std[c]);
                let (g, b) = (scale.values()[c], shift.values()[c]);
                for i in 0..x_p.len() {
                    let xh = (x_p[i] - mu) * is;
                    norm_p[i] = xh;
                    val_p[i] = g * xh + b;
                }
            });
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::BatchNorm {
                input: self.clone(),
                scale: scale.clone(),
                shift: shift.clone(),
                normalized,
                inv_std,
                batch_stats,
            },
        ))
    }

    /// Normalize over the last axis with learnable affine parameters.
    pub fn layer_norm(&self, scale: &Tensor<T>, shift: &Tensor<T>, eps: T) -> Result<Tensor<T>> {
        let last = *self
            .shape()
            .last()
            .ok_or_else(|| Error::invalid("layer_norm on empty shape"))?;
        check_affine(scale, shift, last)?;
        let rows = self.len() / last;
        let mut normalized = vec![T::zero(); self.len()];
        let mut values = vec![T::zero(); self.len()];
        let mut inv_std = vec![T::zero(); rows];
        for r in 0..rows {
            let xs = &self.values()[r * last..(r + 1) * last];
            let mu = wide_sum(xs) / T::acc_from_f64(last as f64);
            let mut vacc = T::Acc::zero();
            for &x in xs {
                let d = x.acc() - mu;
                vacc += d * d;
            }
            let var = T::from_acc(vacc / T::acc_from_f64(last as f64));
            let is = T::one() / (var + eps).sqrt();
            inv_std[r] = is;
            let mu_t = T::from_acc(mu);
            for i in 0..last {
                let xh = (xs[i] - mu_t) * is;
                normalized[r * last + i] = xh;
                values[r * last + i] = scale.values()[i] * xh + shift.values()[i];
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::LayerNorm {
                input: self.clone(),
                scale: scale.clone(),
                shift: shift.clone(),
                normalized,
                inv_std,
            },
        ))
    }

    /// Exponential linear unit: `x` for `x > 0`, `alpha * (exp(x) - 1)` otherwise.
    pub fn elu(&self, alpha: T) -> Result<Tensor<T>> {
        if alpha <= T::zero() {
            return Err(Error::invalid("elu: alpha must be positive"));
        }
        let map = |x: &T| {
            if *x > T::zero() {
                *x
            } else {
                alpha * (x.exp() - T::one())
            }
        };
        let values = if self.len() >= PAR_THRESHOLD {
            self.values().par_iter().map(map).collect()
        } else {
            self.values().iter().map(map).collect()
        };
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Elu {
                input: self.clone(),
                alpha,
            },
        ))
    }

    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&self, axis: usize) -> Result<Tensor<T>> {
        if axis >= self.shape().len() {
            return Err(Error::invalid(format!(
                "softmax: axis {axis} out of range for shape {:?}",
                self.shape()
            )));
        }
        let axis_len = self.dim(axis);
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let outer: usize = self.shape()[..axis].iter().product();
        let mut values = vec![T::zero(); self.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * axis_len * inner + i;
                let mut max = T::neg_infinity();
                for j in 0..axis_len {
                    max = max.max(self.values()[base + j * inner]);
                }
                let mut sum = T::Acc::zero();
                for j in 0..axis_len {
                    let e = (self.values()[base + j * inner] - max).exp();
                    values[base + j * inner] = e;
                    sum += e.acc();
                }
                let inv = T::one() / T::from_acc(sum);
                for j in 0..axis_len {
                    values[base + j * inner] *= inv;
                }
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Softmax {
                input: self.clone(),
                axis,
            },
        ))
    }

    /// Inverted dropout: in training, zero each element with probability
    /// `rate` and rescale survivors by `1/(1-rate)`; in eval, the identity.
    pub fn dropout(&self, rate: f64, training: bool, rng: &mut dyn RngCore) -> Result<Tensor<T>> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout: rate {rate} not in [0,1)")));
        }
        if !training || rate == 0.0 {
            return Ok(self.clone());
        }
        let keep = T::from_f64(1.0 / (1.0 - rate));
        let mut mask = vec![T::zero(); self.len()];
        let mut values = vec![T::zero(); self.len()];
        for i in 0..self.len() {
            let u = rand::Rng::gen::<f64>(rng);
            if u >= rate {
                mask[i] = keep;
                values[i] = self.values()[i] * keep;
            }
        }
        Ok(Tensor::from_op(
            self.shape().to_vec(),
            values,
            Op::Dropout {
                input: self.clone(),
                mask,
            },
        ))
    }

    /// Same elements, different shape (row-major order preserved).
    pub fn reshape(&self, new_shape: &[usize]) -> Result<Tensor<T>> {
        if new_shape.iter().product::<usize>() != self.len() {
            return Err(Error::shape("reshape", self.shape(), new_shape));
        }
        Ok(Tensor::from_op(
            new_shape.to_vec(),
            self.values().to_vec(),
            Op::Reshape(self.clone()),
        ))
    }

    /// Reorder axes; output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Tensor<T>> {
        let rank = self.shape().len();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::invalid(format!(
                "permute: {:?} is not a permutation of 0..{}",
                axes, rank
            )));
        }
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.dim(a)).collect();
        let values = permute_values(self.values(), self.shape(), axes, &out_shape);
        Ok(Tensor::from_op(
            out_shape,
            values,
            Op::Permute {
                input: self.clone(),
                axes: axes.to_vec(),
            },
        ))
    }

    /// Sum of all elements, as a single-element tensor.
    pub fn sum_all(&self) -> Tensor<T> {
        let total = T::from_acc(wide_sum(self.values()));
        Tensor::from_op(vec![1], vec![total], Op::SumAll(self.clone()))
    }

    /// Sum of squared elements, as a single-element tensor.
    pub fn sum_squares(&self) -> Tensor<T> {
        let total = T::from_acc(dot(self.values(), self.values()));
        Tensor::from_op(vec![1], vec![total], Op::SumSquares(self.clone()))
    }

    /// Mean cross-entropy of `(N, C)` logits against integer labels, in
    /// log-sum-exp form.
    pub fn cross_entropy_logits(&self, labels: &[usize]) -> Result<Tensor<T>> {
        self.check_rank(2, "cross_entropy logits")?;
        let (rows, classes) = (self.dim(0), self.dim(1));
        if labels.len() != rows {
            return Err(Error::shape("cross_entropy labels", self.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "cross_entropy: label {bad} out of range for {classes} classes"
            )));
        }
        let mut probs = vec![T::zero(); self.len()];
        let mut loss_acc = T::Acc::zero();
        for r in 0..rows {
            let z = &self.values()[r * classes..(r + 1) * classes];
            let max = z.iter().cloned().fold(T::neg_infinity(), T::max);
            let mut sum = T::Acc::zero();
            for (j, &zj) in z.iter().enumerate() {
                let e = (zj - max).exp();
                probs[r * classes + j] = e;
                sum += e.acc();
            }
            let inv = T::one() / T::from_acc(sum);
            for j in 0..classes {
                probs[r * classes + j] *= inv;
            }
            let lse = max.acc() + sum.ln();
            loss_acc += lse - z[labels[r]].acc();
        }
        let loss = T::from_acc(loss_acc / T::acc_from_f64(rows as f64));
        Ok(Tensor::from_op(
            vec![1],
            vec![loss],
            Op::CrossEntropyLogits {
                logits: self.clone(),
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Mean negative log-likelihood of explicit `(N, C)` probabilities.
    pub fn nll_probs(&self, labels: &[usize], floor: T) -> Result<Tensor<T>> {
        self.check_rank(2, "nll probs")?;
        let (rows, classes) = (self.dim(0), self.dim(1));
        if labels.len() != rows {
            return Err(Error::shape("nll labels", self.shape(), &[labels.len()]));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!(
                "nll: label {bad} out of range for {classes} classes"
            )));
        }
        let mut loss_acc = T::Acc::zero();
        for (r, &y) in labels.iter().enumerate() {
            let p = self.values()[r * classes + y].max(floor);
            loss_acc += -p.ln().acc();
        }
        let loss = T::from_acc(loss_acc / T::acc_from_f64(rows as f64));
        Ok(Tensor::from_op(
            vec![1],
            vec![loss],
            Op::NllProbs {
                probs: self.clone(),
                labels: labels.to_vec(),
                floor,
            },
        ))
    }
}

fn check_affine<T: Scalar>(scale: &Tensor<T>, shift: &Tensor<T>, len: usize) -> Result<()> {
    if scale.shape() != [len] || shift.shape() != [len] {
        return Err(Error::shape("affine parameters", scale.shape(), &[len]));
    }
    Ok(())
}

pub(crate) fn permute_values<T: Scalar>(
    values: &[T],
    in_shape: &[usize],
    axes: &[usize],
    out_shape: &[usize],
) -> Vec<T> {
    let rank = in_shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let mut out = vec![T::zero(); values.len()];
    let mut coords = vec![0usize; rank];
    for (out_idx, slot) in out.iter_mut().enumerate() {
        // Decode out_idx into output coordinates, map back to input offset.
        let mut rem = out_idx;
        for i in (0..rank).rev() {
            coords[i] = rem % out_shape[i];
            rem /= out_shape[i];
        }
        let mut in_idx = 0;
        for i in 0..rank {
            in_idx += coords[i] * in_strides[axes[i]];
        }
        *slot = values[in_idx];
    }
    out
}
