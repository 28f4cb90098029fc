//! Central finite-difference gradient checking.
//!
//! Test support: the checker only reruns forward passes, so it stays
//! independent of the analytic backward rules it verifies.

use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Relative error with a floor on the denominator.
pub fn rel_err<T: Scalar>(analytic: T, numeric: T) -> f64 {
    let a = analytic.to_f64();
    let n = numeric.to_f64();
    (a - n).abs() / (a.abs() + n.abs()).max(1e-6)
}

/// Central finite difference of `f` w.r.t. element `idx` of `input`.
///
/// `f` must rebuild its computation from the perturbed leaf and return a
/// scalar loss value.
pub fn fd_partial<T, F>(input: &Tensor<T>, idx: usize, step: f64, mut f: F) -> T
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    let perturbed = |delta: f64| {
        let mut values = input.values().to_vec();
        values[idx] += T::from_f64(delta);
        Tensor::parameter(input.shape(), values).expect("same shape")
    };
    let plus = f(&perturbed(step));
    let minus = f(&perturbed(-step));
    T::from_f64((plus.to_f64() - minus.to_f64()) / (2.0 * step))
}

/// Check analytic gradients of `loss_fn` w.r.t. every element of `input`
/// against central differences. Returns the worst relative error.
///
/// `analytic` is the gradient slice produced by the backward pass for this
/// input; `loss_fn` recomputes the scalar loss from a fresh leaf.
pub fn check_gradient<T, F>(
    input: &Tensor<T>,
    analytic: &[T],
    step: f64,
    tol: f64,
    mut loss_fn: F,
) -> f64
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    check_gradient_at(
        input,
        analytic,
        step,
        tol,
        &(0..input.len()).collect::<Vec<_>>(),
        &mut loss_fn,
    )
}

/// Same as [`check_gradient`] but only at the given element indices, for
/// parameters too large to sweep exhaustively.
pub fn check_gradient_at<T, F>(
    input: &Tensor<T>,
    analytic: &[T],
    step: f64,
    tol: f64,
    indices: &[usize],
    loss_fn: &mut F,
) -> f64
where
    T: Scalar,
    F: FnMut(&Tensor<T>) -> T,
{
    assert_eq!(analytic.len(), input.len(), "gradient length mismatch");
    let mut worst = 0.0f64;
    for &idx in indices {
        let numeric = fd_partial(input, idx, step, &mut *loss_fn);
        let err = rel_err(analytic[idx], numeric);
        assert!(
            err < tol,
            "gradient mismatch at element {idx}: analytic={:?} numeric={:?} rel_err={err:.3e}",
            analytic[idx],
            numeric
        );
        worst = worst.max(err);
    }
    worst
}

/// Deterministic spread of `count` probe indices over a tensor of length `len`.
pub fn probe_indices(len: usize, count: usize) -> Vec<usize> {
    if len <= count {
        return (0..len).collect();
    }
    (0..count).map(|i| i * len / count).collect()
}
