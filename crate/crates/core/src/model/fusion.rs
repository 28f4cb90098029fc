//! Decision-level fusion of the two streams and the combined
//! cross-entropy + L2 objective.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Learnable per-stream weights (single-element tensors, unconstrained).
#[derive(Clone)]
pub struct FusionWeights<T: Scalar> {
    pub ct: Tensor<T>,
    pub tc: Tensor<T>,
}

impl<T: Scalar> FusionWeights<T> {
    pub fn init() -> Self {
        FusionWeights {
            ct: Tensor::parameter(&[1], vec![T::from_f64(0.5)]).expect("scalar"),
            tc: Tensor::parameter(&[1], vec![T::from_f64(0.5)]).expect("scalar"),
        }
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        vec![
            ("fusion.ct".to_string(), &mut self.ct),
            ("fusion.tc".to_string(), &mut self.tc),
        ]
    }
}

/// Whether the learnable weights combine raw logits (one softmax after the
/// sum) or per-stream probabilities (softmax before the sum).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FusionMode {
    #[default]
    Logits,
    Probabilities,
}

#[derive(Debug, Clone, Copy)]
pub struct LossConfig {
    /// L2 regularization coefficient.
    pub lambda: f64,
    pub num_classes: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda: 0.01,
            num_classes: 4,
        }
    }
}

/// Fused per-sample class scores. `pre_softmax` is present in logit mode and
/// feeds the numerically stable loss path.
pub struct Fused<T: Scalar> {
    pub pre_softmax: Option<Tensor<T>>,
    pub probs: Tensor<T>,
}

/// Weighted decision-level fusion of the two streams' `(N, M)` scores.
pub fn fuse<T: Scalar>(
    logits_ct: &Tensor<T>,
    logits_tc: &Tensor<T>,
    weights: &FusionWeights<T>,
    mode: FusionMode,
) -> Result<Fused<T>> {
    if logits_ct.shape() != logits_tc.shape() {
        return Err(Error::shape("fuse", logits_ct.shape(), logits_tc.shape()));
    }
    match mode {
        FusionMode::Logits => {
            let z = logits_ct
                .mul_scalar_tensor(&weights.ct)?
                .add(&logits_tc.mul_scalar_tensor(&weights.tc)?)?;
            let probs = z.softmax(1)?;
            Ok(Fused {
                pre_softmax: Some(z),
                probs,
            })
        }
        FusionMode::Probabilities => {
            let p = logits_ct
                .softmax(1)?
                .mul_scalar_tensor(&weights.ct)?
                .add(&logits_tc.softmax(1)?.mul_scalar_tensor(&weights.tc)?)?;
            Ok(Fused {
                pre_softmax: None,
                probs: p,
            })
        }
    }
}

/// Single-stream readout (ablation paths): the stream's scores scaled by its
/// fusion weight, then softmax.
pub fn single_stream<T: Scalar>(logits: &Tensor<T>, weight: &Tensor<T>) -> Result<Fused<T>> {
    let z = logits.mul_scalar_tensor(weight)?;
    Ok(Fused {
        probs: z.softmax(1)?,
        pre_softmax: Some(z),
    })
}

/// Mean cross-entropy plus `(lambda / N_b) * sum of squared parameters`.
/// In logit mode the cross-entropy is evaluated in log-sum-exp form.
pub fn combined_loss<T: Scalar>(
    fused: &Fused<T>,
    labels: &[usize],
    params: &[&Tensor<T>],
    config: &LossConfig,
) -> Result<Tensor<T>> {
    let ce = match &fused.pre_softmax {
        Some(z) => z.cross_entropy_logits(labels)?,
        None => fused.probs.nll_probs(labels, T::from_f64(1e-12))?,
    };
    if config.lambda == 0.0 || params.is_empty() {
        return Ok(ce);
    }
    let mut l2 = params[0].sum_squares();
    for p in &params[1..] {
        l2 = l2.add(&p.sum_squares())?;
    }
    let batch = labels.len().max(1) as f64;
    ce.add(&l2.scale(T::from_f64(config.lambda / batch)))
}

/// Argmax per row; ties break toward the lowest class index.
pub fn predict<T: Scalar>(probs: &Tensor<T>) -> Vec<usize> {
    let classes = probs.dim(1);
    probs
        .values()
        .chunks(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
