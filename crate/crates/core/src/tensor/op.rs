use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Record of the operation that produced a tensor, with whatever forward
/// context its backward rule needs.
pub(crate) enum Op<T: Scalar> {
    Leaf,
    Add(Tensor<T>, Tensor<T>),
    Mul(Tensor<T>, Tensor<T>),
    /// `y = c * x` for a compile-time-known constant.
    Scale(Tensor<T>, T),
    /// `y = x * s` where `s` is a single-element learnable tensor.
    MulScalarTensor(Tensor<T>, Tensor<T>),
    /// 2D `x (m,k) @ w (k,n)`.
    Matmul(Tensor<T>, Tensor<T>),
    /// Batched 3D `(b,m,k) @ (b,k,n)`.
    Bmm(Tensor<T>, Tensor<T>),
    /// `x (n,d) @ w (d,d') + bias (d')` broadcast over rows.
    Linear {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Tensor<T>,
    },
    /// Cross-correlation on NCHW input.
    Conv2d {
        input: Tensor<T>,
        weight: Tensor<T>,
        bias: Tensor<T>,
        stride: (usize, usize),
        padding: (usize, usize),
    },
    /// Zero padding (top, bottom, left, right) of the two spatial axes.
    PadZero2d {
        input: Tensor<T>,
        pad: (usize, usize, usize, usize),
    },
    AvgPool2d {
        input: Tensor<T>,
        kernel: (usize, usize),
        stride: (usize, usize),
    },
    /// Per-channel normalization of NCHW input. `normalized` is x-hat,
    /// `inv_std` is per-channel 1/sqrt(var+eps). `batch_stats` is true when
    /// the statistics were computed from this batch (training mode), which
    /// couples the input gradient through mean and variance.
    BatchNorm {
        input: Tensor<T>,
        scale: Tensor<T>,
        shift: Tensor<T>,
        normalized: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    /// Normalization over the last axis. `inv_std` has one entry per row.
    LayerNorm {
        input: Tensor<T>,
        scale: Tensor<T>,
        shift: Tensor<T>,
        normalized: Vec<T>,
        inv_std: Vec<T>,
    },
    Elu {
        input: Tensor<T>,
        alpha: T,
    },
    Softmax {
        input: Tensor<T>,
        axis: usize,
    },
    /// `mask` entries are 0 or 1/(1-rate) (inverted dropout).
    Dropout {
        input: Tensor<T>,
        mask: Vec<T>,
    },
    Reshape(Tensor<T>),
    Permute {
        input: Tensor<T>,
        axes: Vec<usize>,
    },
    SumAll(Tensor<T>),
    SumSquares(Tensor<T>),
    /// Mean cross-entropy between per-row logits and integer labels,
    /// computed in log-sum-exp form; `probs` is the row softmax saved for
    /// the backward pass.
    CrossEntropyLogits {
        logits: Tensor<T>,
        labels: Vec<usize>,
        probs: Vec<T>,
    },
    /// Mean negative log-likelihood of explicit per-row distributions.
    NllProbs {
        probs: Tensor<T>,
        labels: Vec<usize>,
        floor: T,
    },
}

impl<T: Scalar> Op<T> {
    /// Parents in a fixed order (determines backward traversal order).
    pub(crate) fn parents(&self) -> Vec<&Tensor<T>> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Mul(a, b) | Op::MulScalarTensor(a, b) => vec![a, b],
            Op::Matmul(a, b) | Op::Bmm(a, b) => vec![a, b],
            Op::Scale(x, _) => vec![x],
            Op::Linear {
                input,
                weight,
                bias,
            } => vec![input, weight, bias],
            Op::Conv2d {
                input,
                weight,
                bias,
                ..
            } => vec![input, weight, bias],
            Op::PadZero2d { input, .. } => vec![input],
            Op::AvgPool2d { input, .. } => vec![input],
            Op::BatchNorm {
                input,
                scale,
                shift,
                ..
            } => vec![input, scale, shift],
            Op::LayerNorm {
                input,
                scale,
                shift,
                ..
            } => vec![input, scale, shift],
            Op::Elu { input, .. } => vec![input],
            Op::Softmax { input, .. } => vec![input],
            Op::Dropout { input, .. } => vec![input],
            Op::Reshape(x) => vec![x],
            Op::Permute { input, .. } => vec![input],
            Op::SumAll(x) => vec![x],
            Op::SumSquares(x) => vec![x],
            Op::CrossEntropyLogits { logits, .. } => vec![logits],
            Op::NllProbs { probs, .. } => vec![probs],
        }
    }
}
