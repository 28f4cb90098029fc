//! Finite-difference verification of every differentiable primitive, plus
//! forward oracles (explicit loop implementations) for conv, pooling,
//! normalization, and the linear map.
//!
//! Checks run in f64 so central differences with step 1e-5 are meaningful.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcct_core::backward;
use tcct_core::gradcheck::{check_gradient, rel_err};
use tcct_core::Tensor64 as T64;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_values(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

/// Six-nested-loop cross-correlation oracle.
fn conv_oracle(
    x: &[f64],
    (n, c, h, w): (usize, usize, usize, usize),
    wt: &[f64],
    (co, _ci, kh, kw): (usize, usize, usize, usize),
    bias: &[f64],
) -> Vec<f64> {
    let oh = h - kh + 1;
    let ow = w - kw + 1;
    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for o in 0..co {
            for y in 0..oh {
                for z in 0..ow {
                    let mut acc = bias[o];
                    for i in 0..c {
                        for dy in 0..kh {
                            for dz in 0..kw {
                                acc += x[((b * c + i) * h + y + dy) * w + z + dz]
                                    * wt[((o * c + i) * kh + dy) * kw + dz];
                            }
                        }
                    }
                    out[((b * co + o) * oh + y) * ow + z] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv2d_width_from_stream_parameters() {
    let x = T64::zeros(&[1, 1, 1, 280]);
    let w = T64::zeros(&[40, 1, 1, 25]);
    let b = T64::zeros(&[40]);
    let y = x.conv2d(&w, &b, (1, 1), (0, 0)).unwrap();
    assert_eq!(y.shape(), &[1, 40, 1, 256]);
}

#[test]
fn conv2d_identity_kernel() {
    let x = T64::full(&[1, 1, 2, 2], 1.0);
    let w = T64::constant(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let b = T64::zeros(&[1]);
    let y = x.conv2d(&w, &b, (1, 1), (0, 0)).unwrap();
    assert_eq!(y.values(), x.values());
}

#[test]
fn conv2d_matches_loop_oracle() {
    let mut r = rng(11);
    let x = random_values(1 * 2 * 4 * 9, &mut r);
    let wt = random_values(3 * 2 * 2 * 3, &mut r);
    let bias = random_values(3, &mut r);
    let xt = T64::constant(&[1, 2, 4, 9], x.clone()).unwrap();
    let wtt = T64::constant(&[3, 2, 2, 3], wt.clone()).unwrap();
    let bt = T64::constant(&[3], bias.clone()).unwrap();
    let y = xt.conv2d(&wtt, &bt, (1, 1), (0, 0)).unwrap();
    let want = conv_oracle(&x, (1, 2, 4, 9), &wt, (3, 2, 2, 3), &bias);
    for (a, b) in y.values().iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn conv2d_rejects_channel_mismatch() {
    let x = T64::zeros(&[1, 2, 4, 4]);
    let w = T64::zeros(&[3, 5, 2, 2]);
    let b = T64::zeros(&[3]);
    let err = x.conv2d(&w, &b, (1, 1), (0, 0)).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[1, 2, 4, 4]") && msg.contains("[3, 5, 2, 2]"), "{msg}");
}

#[test]
fn conv2d_gradients() {
    let mut r = rng(12);
    let x = T64::parameter(&[2, 2, 3, 5], random_values(60, &mut r)).unwrap();
    let w = T64::parameter(&[3, 2, 2, 3], random_values(36, &mut r)).unwrap();
    let b = T64::parameter(&[3], random_values(3, &mut r)).unwrap();

    let loss = |xx: &T64, ww: &T64, bb: &T64| {
        xx.conv2d(ww, bb, (1, 2), (1, 0)).unwrap().sum_squares()
    };
    let grads = backward(&loss(&x, &w, &b)).unwrap();

    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| {
        loss(p, &w, &b).item()
    });
    check_gradient(&w, grads.grad(&w).unwrap(), STEP, TOL, |p| {
        loss(&x, p, &b).item()
    });
    check_gradient(&b, grads.grad(&b).unwrap(), STEP, TOL, |p| {
        loss(&x, &w, p).item()
    });
}

// ---------------------------------------------------------------------------
// avg_pool2d
// ---------------------------------------------------------------------------

#[test]
fn avg_pool_width_from_stream_parameters() {
    let x = T64::zeros(&[1, 40, 1, 256]);
    let y = x.avg_pool2d((1, 75), (1, 15)).unwrap();
    assert_eq!(y.shape(), &[1, 40, 1, 13]);
}

#[test]
fn avg_pool_constant_input() {
    let x = T64::full(&[1, 1, 2, 12], 3.25);
    let y = x.avg_pool2d((2, 3), (1, 2)).unwrap();
    assert!(y.values().iter().all(|&v| (v - 3.25).abs() < 1e-15));
}

#[test]
fn avg_pool_pairwise_means() {
    let vals: Vec<f64> = (0..10).map(|i| i as f64).collect();
    let x = T64::constant(&[1, 1, 1, 10], vals).unwrap();
    let y = x.avg_pool2d((1, 2), (1, 2)).unwrap();
    assert_eq!(y.values(), &[0.5, 2.5, 4.5, 6.5, 8.5]);
}

#[test]
fn avg_pool_rejects_oversized_window() {
    let x = T64::zeros(&[1, 1, 2, 4]);
    assert!(x.avg_pool2d((3, 2), (1, 1)).is_err());
}

#[test]
fn avg_pool_gradients() {
    let mut r = rng(13);
    let x = T64::parameter(&[1, 2, 3, 10], random_values(60, &mut r)).unwrap();
    let loss = |xx: &T64| xx.avg_pool2d((2, 3), (1, 2)).unwrap().sum_squares();
    let grads = backward(&loss(&x)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| loss(p).item());
}

// ---------------------------------------------------------------------------
// shape formula sweep (kernels 1-5, strides 1-3, padding 0-2)
// ---------------------------------------------------------------------------

#[test]
fn conv_and_pool_shape_sweep() {
    for k in 1..=5usize {
        for s in 1..=3usize {
            for p in 0..=2usize {
                let (h, w) = (7, 9);
                let x = T64::zeros(&[1, 1, h, w]);
                let wt = T64::zeros(&[2, 1, k, k]);
                let b = T64::zeros(&[2]);
                let y = x.conv2d(&wt, &b, (s, s), (p, p)).unwrap();
                assert_eq!(y.dim(2), (h + 2 * p - k) / s + 1);
                assert_eq!(y.dim(3), (w + 2 * p - k) / s + 1);
                if k <= h && k <= w {
                    let pooled = x.avg_pool2d((k, k), (s, s)).unwrap();
                    assert_eq!(pooled.dim(2), (h - k) / s + 1);
                    assert_eq!(pooled.dim(3), (w - k) / s + 1);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// batch_norm
// ---------------------------------------------------------------------------

fn two_pass_stats(xs: &[f64]) -> (f64, f64) {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

#[test]
fn batch_norm_training_normalizes() {
    let mut r = rng(14);
    let x = T64::constant(&[4, 3, 2, 2], random_values(48, &mut r)).unwrap();
    let scale = T64::full(&[3], 1.0);
    let shift = T64::zeros(&[3]);
    let (y, _, _) = x.batch_norm_train(&scale, &shift, 1e-12).unwrap();
    // Gather per-channel outputs and verify mean 0, var 1.
    for c in 0..3 {
        let mut vals = Vec::new();
        for n in 0..4 {
            for i in 0..4 {
                vals.push(y.values()[(n * 3 + c) * 4 + i]);
            }
        }
        let (mean, var) = two_pass_stats(&vals);
        assert!(mean.abs() < 1e-6, "channel {c} mean {mean}");
        assert!((var - 1.0).abs() < 1e-6, "channel {c} var {var}");
    }
}

#[test]
fn batch_norm_eval_identity_stats() {
    let mut r = rng(15);
    let eps = 1e-5;
    let x = T64::constant(&[2, 2, 1, 3], random_values(12, &mut r)).unwrap();
    let scale = T64::full(&[2], 1.0);
    let shift = T64::zeros(&[2]);
    let y = x
        .batch_norm_eval(&scale, &shift, &[0.0, 0.0], &[1.0, 1.0], eps)
        .unwrap();
    for (yv, xv) in y.values().iter().zip(x.values()) {
        assert!((yv - xv / (1.0 + eps).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn batch_norm_matches_two_pass_oracle() {
    let mut r = rng(16);
    let x = T64::constant(&[4, 3, 2, 2], random_values(48, &mut r)).unwrap();
    let scale = T64::constant(&[3], vec![0.5, 1.5, 2.0]).unwrap();
    let shift = T64::constant(&[3], vec![-1.0, 0.25, 3.0]).unwrap();
    let eps = 1e-5;
    let (y, mean, var) = x.batch_norm_train(&scale, &shift, eps).unwrap();
    for c in 0..3 {
        let mut vals = Vec::new();
        for n in 0..4 {
            for i in 0..4 {
                vals.push(x.values()[(n * 3 + c) * 4 + i]);
            }
        }
        let (m, v) = two_pass_stats(&vals);
        assert!((mean[c] - m).abs() < 1e-10);
        assert!((var[c] - v).abs() < 1e-10);
        for n in 0..4 {
            for i in 0..4 {
                let idx = (n * 3 + c) * 4 + i;
                let want = scale.values()[c] * (x.values()[idx] - m) / (v + eps).sqrt()
                    + shift.values()[c];
                assert!((y.values()[idx] - want).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn batch_norm_rejects_single_element_batch() {
    let x = T64::zeros(&[1, 3, 1, 1]);
    let scale = T64::full(&[3], 1.0);
    let shift = T64::zeros(&[3]);
    assert!(x.batch_norm_train(&scale, &shift, 1e-5).is_err());
}

#[test]
fn batch_norm_gradients_training_mode() {
    let mut r = rng(17);
    let x = T64::parameter(&[3, 2, 2, 2], random_values(24, &mut r)).unwrap();
    let scale = T64::parameter(&[2], vec![1.2, 0.7]).unwrap();
    let shift = T64::parameter(&[2], vec![0.1, -0.4]).unwrap();
    let loss = |xx: &T64, sc: &T64, sh: &T64| {
        let (y, _, _) = xx.batch_norm_train(sc, sh, 1e-5).unwrap();
        // A non-symmetric readout so mean/var coupling is exercised.
        let w = T64::constant(&[24], (0..24).map(|i| (i as f64) * 0.13 - 1.0).collect()).unwrap();
        y.reshape(&[24]).unwrap().mul(&w).unwrap().sum_all()
    };
    let grads = backward(&loss(&x, &scale, &shift)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| {
        loss(p, &scale, &shift).item()
    });
    check_gradient(&scale, grads.grad(&scale).unwrap(), STEP, TOL, |p| {
        loss(&x, p, &shift).item()
    });
    check_gradient(&shift, grads.grad(&shift).unwrap(), STEP, TOL, |p| {
        loss(&x, &scale, p).item()
    });
}

#[test]
fn batch_norm_gradients_eval_mode() {
    let mut r = rng(18);
    let x = T64::parameter(&[2, 2, 1, 3], random_values(12, &mut r)).unwrap();
    let scale = T64::parameter(&[2], vec![1.5, 0.5]).unwrap();
    let shift = T64::parameter(&[2], vec![-0.2, 0.3]).unwrap();
    let rm = [0.1, -0.3];
    let rv = [1.4, 0.8];
    let loss = |xx: &T64, sc: &T64, sh: &T64| {
        xx.batch_norm_eval(sc, sh, &rm, &rv, 1e-5)
            .unwrap()
            .sum_squares()
    };
    let grads = backward(&loss(&x, &scale, &shift)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| {
        loss(p, &scale, &shift).item()
    });
    check_gradient(&scale, grads.grad(&scale).unwrap(), STEP, TOL, |p| {
        loss(&x, p, &shift).item()
    });
}

// ---------------------------------------------------------------------------
// elu
// ---------------------------------------------------------------------------

#[test]
fn elu_fixed_point_and_asymptote() {
    let x = T64::constant(&[3], vec![0.0, -10.0, 2.0]).unwrap();
    let y = x.elu(1.0).unwrap();
    assert_eq!(y.values()[0], 0.0);
    assert!(y.values()[1] > -1.0 && y.values()[1] < -0.9999);
    assert_eq!(y.values()[2], 2.0);
}

#[test]
fn elu_gradient_matches_analytic_and_fd() {
    let x = T64::parameter(&[1], vec![-0.5]).unwrap();
    let loss = |xx: &T64| xx.elu(1.0).unwrap().sum_all();
    let grads = backward(&loss(&x)).unwrap();
    let expected = (-0.5f64).exp();
    assert!(rel_err(grads.grad(&x).unwrap()[0], expected) < 1e-9);
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, 1e-6, |p| loss(p).item());
}

#[test]
fn elu_gradients_mixed_signs() {
    let mut r = rng(19);
    let x = T64::parameter(&[12], random_values(12, &mut r)).unwrap();
    let loss = |xx: &T64| xx.elu(0.8).unwrap().sum_squares();
    let grads = backward(&loss(&x)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| loss(p).item());
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

#[test]
fn linear_identity_weights() {
    let x = T64::constant(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let mut eye = vec![0.0; 9];
    for i in 0..3 {
        eye[i * 3 + i] = 1.0;
    }
    let w = T64::constant(&[3, 3], eye).unwrap();
    let b = T64::zeros(&[3]);
    let y = x.linear(&w, &b).unwrap();
    assert_eq!(y.values(), x.values());
}

#[test]
fn linear_hand_example() {
    let x = T64::constant(&[1, 2], vec![1.0, 2.0]).unwrap();
    let w = T64::constant(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let b = T64::constant(&[2], vec![3.0, 3.0]).unwrap();
    let y = x.linear(&w, &b).unwrap();
    assert_eq!(y.values(), &[4.0, 5.0]);
}

#[test]
fn linear_matches_triple_loop() {
    let mut r = rng(20);
    let xv = random_values(15, &mut r);
    let wv = random_values(20, &mut r);
    let bv = random_values(4, &mut r);
    let x = T64::constant(&[3, 5], xv.clone()).unwrap();
    let w = T64::constant(&[5, 4], wv.clone()).unwrap();
    let b = T64::constant(&[4], bv.clone()).unwrap();
    let y = x.linear(&w, &b).unwrap();
    for i in 0..3 {
        for j in 0..4 {
            let mut acc = bv[j];
            for k in 0..5 {
                acc += xv[i * 5 + k] * wv[k * 4 + j];
            }
            assert!((y.values()[i * 4 + j] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn linear_rejects_dimension_mismatch() {
    let x = T64::zeros(&[3, 5]);
    let w = T64::zeros(&[4, 4]);
    let b = T64::zeros(&[4]);
    assert!(x.linear(&w, &b).is_err());
}

#[test]
fn linear_gradients() {
    let mut r = rng(21);
    let x = T64::parameter(&[3, 5], random_values(15, &mut r)).unwrap();
    let w = T64::parameter(&[5, 4], random_values(20, &mut r)).unwrap();
    let b = T64::parameter(&[4], random_values(4, &mut r)).unwrap();
    let loss = |xx: &T64, ww: &T64, bb: &T64| xx.linear(ww, bb).unwrap().sum_squares();
    let grads = backward(&loss(&x, &w, &b)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| {
        loss(p, &w, &b).item()
    });
    check_gradient(&w, grads.grad(&w).unwrap(), STEP, TOL, |p| {
        loss(&x, p, &b).item()
    });
    check_gradient(&b, grads.grad(&b).unwrap(), STEP, TOL, |p| {
        loss(&x, &w, p).item()
    });
}

// ---------------------------------------------------------------------------
// softmax
// ---------------------------------------------------------------------------

#[test]
fn softmax_uniform_inputs() {
    let x = T64::full(&[4], 2.5);
    let y = x.softmax(0).unwrap();
    for &v in y.values() {
        assert!((v - 0.25).abs() < 1e-15);
    }
}

#[test]
fn softmax_overflow_safety() {
    let x = T64::constant(&[2], vec![1000.0, 0.0]).unwrap();
    let y = x.softmax(0).unwrap();
    assert!(y.values()[0].is_finite() && y.values()[1].is_finite());
    assert!((y.values()[0] - 1.0).abs() < 1e-9);
    assert!(y.values()[1] < 1e-9);
}

#[test]
fn softmax_matches_exp_normalize_oracle() {
    let mut r = rng(22);
    let xv = random_values(6, &mut r);
    let x = T64::constant(&[6], xv.clone()).unwrap();
    let y = x.softmax(0).unwrap();
    let exps: Vec<f64> = xv.iter().map(|v| v.exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut sum = 0.0;
    for (i, &v) in y.values().iter().enumerate() {
        assert!(v >= 0.0);
        assert!(rel_err(v, exps[i] / total) < 1e-12);
        sum += v;
    }
    assert!((sum - 1.0).abs() < 1e-12);
}

#[test]
fn softmax_interior_axis_slices_sum_to_one() {
    let mut r = rng(23);
    let x = T64::constant(&[2, 5, 3], random_values(30, &mut r)).unwrap();
    let y = x.softmax(1).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            let mut sum = 0.0;
            for j in 0..5 {
                sum += y.values()[(o * 5 + j) * 3 + i];
            }
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn softmax_gradients() {
    let mut r = rng(24);
    let x = T64::parameter(&[2, 4], random_values(8, &mut r)).unwrap();
    let w = T64::constant(&[8], random_values(8, &mut r)).unwrap();
    let loss = |xx: &T64| {
        xx.softmax(1)
            .unwrap()
            .reshape(&[8])
            .unwrap()
            .mul(&w)
            .unwrap()
            .sum_all()
    };
    let grads = backward(&loss(&x)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| loss(p).item());
}

// ---------------------------------------------------------------------------
// dropout
// ---------------------------------------------------------------------------

#[test]
fn dropout_rate_zero_and_eval_are_identity() {
    let mut r = rng(25);
    let x = T64::constant(&[64], random_values(64, &mut r)).unwrap();
    let y_train = x.dropout(0.0, true, &mut r).unwrap();
    let y_eval = x.dropout(0.7, false, &mut r).unwrap();
    assert_eq!(y_train.values(), x.values());
    assert_eq!(y_eval.values(), x.values());
}

#[test]
fn dropout_survivor_mean_within_three_standard_errors() {
    let n = 100_000;
    let mut r = rng(26);
    let x = T64::full(&[n], 1.0);
    let y = x.dropout(0.5, true, &mut r).unwrap();
    let mean: f64 = y.values().iter().sum::<f64>() / n as f64;
    // Elements are 0 or 2 with probability 1/2 each: variance 1, so the
    // standard error of the mean is 1/sqrt(n).
    let se = 1.0 / (n as f64).sqrt();
    assert!(
        (mean - 1.0).abs() < 3.0 * se,
        "mean {mean} deviates more than 3 SE ({se})"
    );
}

#[test]
fn dropout_backward_uses_the_saved_mask() {
    let mut r = rng(27);
    let x = T64::parameter(&[32], vec![1.0; 32]).unwrap();
    let y = x.dropout(0.25, true, &mut r).unwrap();
    let grads = backward(&y.sum_all()).unwrap();
    // d(sum)/dx = mask, which is exactly the forward output here (x = 1).
    assert_eq!(grads.grad(&x).unwrap(), y.values());
}

// ---------------------------------------------------------------------------
// backward plumbing
// ---------------------------------------------------------------------------

#[test]
fn backward_of_sum_is_ones() {
    let x = T64::parameter(&[2, 3], vec![5.0, -1.0, 0.0, 2.0, 2.0, 7.0]).unwrap();
    let grads = backward(&x.sum_all()).unwrap();
    assert_eq!(grads.grad(&x).unwrap(), &[1.0; 6]);
}

#[test]
fn backward_of_sum_of_squares_hand_example() {
    let x = T64::parameter(&[3], vec![1.0, -2.0, 3.0]).unwrap();
    let grads = backward(&x.sum_squares()).unwrap();
    assert_eq!(grads.grad(&x).unwrap(), &[2.0, -4.0, 6.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let x = T64::parameter(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let y = x.scale(2.0);
    assert!(backward(&y).is_err());
}

#[test]
fn non_participating_leaf_gets_zero_gradient() {
    let x = T64::parameter(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let unused = T64::parameter(&[2], vec![4.0, 5.0]).unwrap();
    let grads = backward(&x.sum_all()).unwrap();
    assert!(grads.grad(&unused).is_none());
    assert_eq!(grads.grad_or_zeros(&unused), vec![0.0, 0.0]);
}

#[test]
fn gradients_accumulate_across_reuse() {
    let x = T64::parameter(&[2], vec![3.0, -1.0]).unwrap();
    // loss = sum(x*x): each use of x contributes x once => total 2x.
    let grads = backward(&x.mul(&x).unwrap().sum_all()).unwrap();
    assert_eq!(grads.grad(&x).unwrap(), &[6.0, -2.0]);
}

// ---------------------------------------------------------------------------
// remaining primitives
// ---------------------------------------------------------------------------

#[test]
fn matmul_and_bmm_gradients() {
    let mut r = rng(28);
    let a = T64::parameter(&[3, 4], random_values(12, &mut r)).unwrap();
    let b = T64::parameter(&[4, 2], random_values(8, &mut r)).unwrap();
    let loss = |aa: &T64, bb: &T64| aa.matmul(bb).unwrap().sum_squares();
    let grads = backward(&loss(&a, &b)).unwrap();
    check_gradient(&a, grads.grad(&a).unwrap(), STEP, TOL, |p| {
        loss(p, &b).item()
    });
    check_gradient(&b, grads.grad(&b).unwrap(), STEP, TOL, |p| {
        loss(&a, p).item()
    });

    let a3 = T64::parameter(&[2, 3, 4], random_values(24, &mut r)).unwrap();
    let b3 = T64::parameter(&[2, 4, 2], random_values(16, &mut r)).unwrap();
    let loss3 = |aa: &T64, bb: &T64| aa.bmm(bb).unwrap().sum_squares();
    let grads = backward(&loss3(&a3, &b3)).unwrap();
    check_gradient(&a3, grads.grad(&a3).unwrap(), STEP, TOL, |p| {
        loss3(p, &b3).item()
    });
    check_gradient(&b3, grads.grad(&b3).unwrap(), STEP, TOL, |p| {
        loss3(&a3, p).item()
    });
}

#[test]
fn layer_norm_gradients() {
    let mut r = rng(29);
    let x = T64::parameter(&[3, 5], random_values(15, &mut r)).unwrap();
    let scale = T64::parameter(&[5], vec![1.0, 0.5, 1.5, 2.0, 0.8]).unwrap();
    let shift = T64::parameter(&[5], vec![0.0, 0.1, -0.1, 0.2, 0.0]).unwrap();
    let w = T64::constant(&[15], random_values(15, &mut r)).unwrap();
    let loss = |xx: &T64, sc: &T64, sh: &T64| {
        xx.layer_norm(sc, sh, 1e-5)
            .unwrap()
            .reshape(&[15])
            .unwrap()
            .mul(&w)
            .unwrap()
            .sum_all()
    };
    let grads = backward(&loss(&x, &scale, &shift)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| {
        loss(p, &scale, &shift).item()
    });
    check_gradient(&scale, grads.grad(&scale).unwrap(), STEP, TOL, |p| {
        loss(&x, p, &shift).item()
    });
    check_gradient(&shift, grads.grad(&shift).unwrap(), STEP, TOL, |p| {
        loss(&x, &scale, p).item()
    });
}

#[test]
fn pad_permute_reshape_scale_gradients() {
    let mut r = rng(30);
    let x = T64::parameter(&[1, 2, 2, 3], random_values(12, &mut r)).unwrap();
    let loss = |xx: &T64| {
        xx.pad_zero2d((0, 0, 1, 2))
            .unwrap()
            .permute(&[0, 3, 1, 2])
            .unwrap()
            .reshape(&[24])
            .unwrap()
            .scale(1.5)
            .sum_squares()
    };
    let grads = backward(&loss(&x)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| loss(p).item());
}

#[test]
fn mul_scalar_tensor_gradients() {
    let mut r = rng(31);
    let x = T64::parameter(&[6], random_values(6, &mut r)).unwrap();
    let s = T64::parameter(&[1], vec![0.7]).unwrap();
    let loss = |xx: &T64, ss: &T64| xx.mul_scalar_tensor(ss).unwrap().sum_squares();
    let grads = backward(&loss(&x, &s)).unwrap();
    check_gradient(&x, grads.grad(&x).unwrap(), STEP, TOL, |p| {
        loss(p, &s).item()
    });
    check_gradient(&s, grads.grad(&s).unwrap(), STEP, TOL, |p| {
        loss(&x, p).item()
    });
}

#[test]
fn cross_entropy_logits_gradients() {
    let mut r = rng(32);
    let z = T64::parameter(&[3, 4], random_values(12, &mut r)).unwrap();
    let labels = [2usize, 0, 3];
    let loss = |zz: &T64| zz.cross_entropy_logits(&labels).unwrap();
    let grads = backward(&loss(&z)).unwrap();
    check_gradient(&z, grads.grad(&z).unwrap(), STEP, TOL, |p| loss(p).item());
}

#[test]
fn nll_probs_gradients() {
    // Keep probabilities well away from the clamp floor.
    let p = T64::parameter(&[2, 4], vec![0.2, 0.3, 0.4, 0.1, 0.25, 0.25, 0.25, 0.25]).unwrap();
    let labels = [1usize, 3];
    let loss = |pp: &T64| pp.nll_probs(&labels, 1e-12).unwrap();
    let grads = backward(&loss(&p)).unwrap();
    check_gradient(&p, grads.grad(&p).unwrap(), STEP, TOL, |q| loss(q).item());
}

// ---------------------------------------------------------------------------
// determinism
// ---------------------------------------------------------------------------

#[test]
fn forward_and_gradients_are_bitwise_deterministic() {
    let run = || {
        let mut r = rng(777);
        let x = T64::parameter(&[2, 3, 4, 6], random_values(144, &mut r)).unwrap();
        let w = T64::parameter(&[2, 3, 2, 3], random_values(36, &mut r)).unwrap();
        let b = T64::parameter(&[2], random_values(2, &mut r)).unwrap();
        let y = x
            .conv2d(&w, &b, (1, 1), (0, 1))
            .unwrap()
            .elu(1.0)
            .unwrap()
            .avg_pool2d((1, 2), (1, 2))
            .unwrap();
        let loss = y.sum_squares();
        let grads = backward(&loss).unwrap();
        (
            loss.item(),
            y.values().to_vec(),
            grads.grad(&x).unwrap().to_vec(),
            grads.grad(&w).unwrap().to_vec(),
        )
    };
    let (l1, y1, gx1, gw1) = run();
    let (l2, y2, gx2, gw2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(y1, y2);
    assert_eq!(gx1, gx2);
    assert_eq!(gw1, gw2);
}
