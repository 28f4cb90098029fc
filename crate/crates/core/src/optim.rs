//! Adam optimizer with bias-corrected moments, plus the milestone learning
//! rate schedule.

use std::collections::HashMap;


use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{GradStore, Tensor};

/// Per-parameter first/second moment accumulators and the shared step
/// counter.
#[derive(Clone)]
pub struct AdamState<T: Scalar> {
    pub step: u64,
    first: HashMap<String, Vec<T>>,
    second: HashMap<String, Vec<T>>,
}

impl<T: Scalar> Default for AdamState<T> {
    fn default() -> Self {
        AdamState {
            step: 0,
            first: HashMap::new(),
            second: HashMap::new(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::invalid("adam: learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::invalid(format!(
                "adam: beta1 {} must lie in (0, 1)",
                self.beta1
            )));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::invalid(format!(
                "adam: beta2 {} must lie in (0, 1)",
                self.beta2
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::invalid("adam: epsilon must be positive"));
        }
        Ok(())
    }
}

/// One Adam update over the given parameters. Every parameter must have a
/// gradient in `grads`; each tensor is replaced by a fresh leaf with the
/// updated values. Increments the step counter once.
pub fn adam_step<T: Scalar>(
    params: &mut [(String, &mut Tensor<T>)],
    grads: &GradStore<T>,
    state: &mut AdamState<T>,
    hyper: &AdamHyper,
) -> Result<()> {
    hyper.validate()?;
    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64(hyper.beta1);
    let b2 = T::from_f64(hyper.beta2);
    let correction1 = T::from_f64(1.0 - hyper.beta1.powi(t));
    let correction2 = T::from_f64(1.0 - hyper.beta2.powi(t));
    let lr = T::from_f64(hyper.learning_rate);
    let eps = T::from_f64(hyper.epsilon);
    let one = T::one();

    for (name, param) in params.iter_mut() {
        let grad = grads
            .grad(param)
            .ok_or_else(|| Error::invalid(format!("adam: missing gradient for '{name}'")))?;
        let m = state
            .first
            .entry(name.clone())
            .or_insert_with(|| vec![T::zero(); param.len()]);
        let v = state
            .second
            .entry(name.clone())
            .or_insert_with(|| vec![T::zero(); param.len()]);
        if m.len() != param.len() {
            return Err(Error::shape("adam moments", &[m.len()], param.shape()));
        }
        let mut values = param.values().to_vec();
        for i in 0..values.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / correction1;
            let v_hat = v[i] / correction2;
            values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
        }
        **param = Tensor::parameter(param.shape(), values)?;
    }
    Ok(())
}

/// Milestone schedule: the learning rate for an epoch is the base rate times
/// the product of every multiplier whose milestone epoch has been reached.
pub fn scheduled_lr(base: f64, milestones: &[(usize, f64)], epoch: usize) -> f64 {
    let mut lr = base;
    for &(at, mult) in milestones {
        if epoch >= at {
            lr *= mult;
        }
    }
    lr
}
