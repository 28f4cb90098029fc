//! Shared learnable layers and the training/eval phase plumbing.

use rand::RngCore;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Forward phase: training carries the RNG that drives dropout masks.
pub enum Phase<'r> {
    Train { rng: &'r mut dyn RngCore },
    Eval,
}

impl Phase<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Phase::Train { .. })
    }
}

/// Uniform init in +/- sqrt(1/fan_in).
fn init_bound<T: Scalar>(fan_in: usize) -> T {
    T::from_f64((1.0 / fan_in as f64).sqrt())
}

/// Convolution parameters: weights are `(out_channels, in_channels, k_h, k_w)`.
#[derive(Clone)]
pub struct Conv2dParams<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl<T: Scalar> Conv2dParams<T> {
    pub fn init(
        out_channels: usize,
        in_channels: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut dyn RngCore,
    ) -> Self {
        let fan_in = in_channels * kernel.0 * kernel.1;
        let bound = init_bound::<T>(fan_in);
        Conv2dParams {
            weight: Tensor::uniform(&[out_channels, in_channels, kernel.0, kernel.1], bound, rng)
                .requiring_grad(),
            bias: Tensor::uniform(&[out_channels], bound, rng).requiring_grad(),
            stride,
            padding,
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.conv2d(&self.weight, &self.bias, self.stride, self.padding)
    }

    pub fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

/// Batch normalization with running statistics for eval mode.
#[derive(Clone)]
pub struct BatchNormParams<T: Scalar> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub epsilon: T,
}

/// Deferred running-statistics update produced by a training-mode forward.
pub struct BnUpdate<T: Scalar> {
    pub slot: usize,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    /// Elements per channel in the batch (for the unbiased running variance).
    pub count: usize,
}

impl<T: Scalar> BatchNormParams<T> {
    pub fn init(channels: usize) -> Self {
        BatchNormParams {
            scale: Tensor::full(&[channels], T::one()).requiring_grad(),
            shift: Tensor::zeros(&[channels]).requiring_grad(),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64(0.1),
            epsilon: T::from_f64(1e-5),
        }
    }

    /// Training mode uses batch statistics and emits a deferred running-stat
    /// update; eval mode normalizes with the stored running statistics.
    pub fn apply(
        &self,
        x: &Tensor<T>,
        phase: &Phase,
        slot: usize,
        updates: &mut Vec<BnUpdate<T>>,
    ) -> Result<Tensor<T>> {
        if phase.is_train() {
            let (y, mean, var) = x.batch_norm_train(&self.scale, &self.shift, self.epsilon)?;
            let count = x.len() / x.dim(1);
            updates.push(BnUpdate {
                slot,
                mean,
                var,
                count,
            });
            Ok(y)
        } else {
            x.batch_norm_eval(
                &self.scale,
                &self.shift,
                &self.running_mean,
                &self.running_var,
                self.epsilon,
            )
        }
    }

    /// Fold one batch's statistics into the running estimates
    /// (`new = (1-momentum)*old + momentum*batch`, unbiased variance).
    pub fn absorb(&mut self, update: &BnUpdate<T>) {
        let one = T::one();
        let correction = if update.count > 1 {
            T::from_f64(update.count as f64 / (update.count - 1) as f64)
        } else {
            one
        };
        for c in 0..self.running_mean.len() {
            self.running_mean[c] =
                (one - self.momentum) * self.running_mean[c] + self.momentum * update.mean[c];
            self.running_var[c] = (one - self.momentum) * self.running_var[c]
                + self.momentum * update.var[c] * correction;
        }
    }

    pub fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.scale"), &mut self.scale));
        out.push((format!("{prefix}.shift"), &mut self.shift));
    }

    pub fn named_buffers(&self, prefix: &str, out: &mut Vec<(String, Vec<T>)>) {
        out.push((format!("{prefix}.running_mean"), self.running_mean.clone()));
        out.push((format!("{prefix}.running_var"), self.running_var.clone()));
    }

    pub fn load_buffer(&mut self, suffix: &str, values: Vec<T>) -> bool {
        match suffix {
            "running_mean" if values.len() == self.running_mean.len() => {
                self.running_mean = values;
                true
            }
            "running_var" if values.len() == self.running_var.len() => {
                self.running_var = values;
                true
            }
            _ => false,
        }
    }
}

#[derive(Clone)]
pub struct LinearParams<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Scalar> LinearParams<T> {
    pub fn init(in_dim: usize, out_dim: usize, rng: &mut dyn RngCore) -> Self {
        let bound = init_bound::<T>(in_dim);
        LinearParams {
            weight: Tensor::uniform(&[in_dim, out_dim], bound, rng).requiring_grad(),
            bias: Tensor::uniform(&[out_dim], bound, rng).requiring_grad(),
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.linear(&self.weight, &self.bias)
    }

    pub fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.weight"), &mut self.weight));
        out.push((format!("{prefix}.bias"), &mut self.bias));
    }
}

#[derive(Clone)]
pub struct LayerNormParams<T: Scalar> {
    pub scale: Tensor<T>,
    pub shift: Tensor<T>,
    pub epsilon: T,
}

impl<T: Scalar> LayerNormParams<T> {
    pub fn init(dim: usize) -> Self {
        LayerNormParams {
            scale: Tensor::full(&[dim], T::one()).requiring_grad(),
            shift: Tensor::zeros(&[dim]).requiring_grad(),
            epsilon: T::from_f64(1e-5),
        }
    }

    pub fn apply(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        x.layer_norm(&self.scale, &self.shift, self.epsilon)
    }

    pub fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        out.push((format!("{prefix}.scale"), &mut self.scale));
        out.push((format!("{prefix}.shift"), &mut self.shift));
    }
}

/// Dropout under the current phase.
pub fn dropout<T: Scalar>(x: &Tensor<T>, rate: f64, phase: &mut Phase) -> Result<Tensor<T>> {
    match phase {
        Phase::Train { rng } => x.dropout(rate, true, *rng),
        Phase::Eval => Ok(x.clone()),
    }
}
