//! Reverse-mode gradient computation.

use num_traits::Zero;
use std::collections::{HashMap, HashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{dot, wide_sum, Scalar};
use crate::tensor::kernels::{self, ConvDims, PoolDims};
use crate::tensor::ops::permute_values;
use crate::tensor::{Op, Tensor, TensorId};

/// Gradients keyed by tensor id, produced by [`backward`].
pub struct GradStore<T: Scalar> {
    grads: HashMap<TensorId, Vec<T>>,
}

impl<T: Scalar> GradStore<T> {
    pub fn grad(&self, t: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&t.id()).map(|v| v.as_slice())
    }

    /// Gradient of a leaf, with zeros for leaves the loss does not depend on.
    pub fn grad_or_zeros(&self, t: &Tensor<T>) -> Vec<T> {
        self.grads
            .get(&t.id())
            .cloned()
            .unwrap_or_else(|| vec![T::zero(); t.len()])
    }
}

/// Populate gradients of every `requires_grad` leaf reachable from a scalar
/// loss. Rejects non-scalar losses.
pub fn backward<T: Scalar>(loss: &Tensor<T>) -> Result<GradStore<T>> {
    if loss.len() != 1 {
        return Err(Error::invalid(format!(
            "backward: loss must be a scalar, got shape {:?}",
            loss.shape()
        )));
    }

    // Reverse topological order via iterative post-order DFS. Parent order is
    // fixed by Op::parents, so traversal (and thus summation order during
    // accumulation) is deterministic.
    let order = topo_order(loss);

    let mut grads: HashMap<TensorId, Vec<T>> = HashMap::new();
    grads.insert(loss.id(), vec![T::one()]);

    for node in order.iter().rev() {
        if matches!(node.op(), Op::Leaf) {
            continue;
        }
        let grad_out = match grads.remove(&node.id()) {
            Some(g) => g,
            None => continue,
        };
        for (parent, grad) in vjp(node, &grad_out) {
            if !parent.requires_grad() {
                continue;
            }
            match grads.get_mut(&parent.id()) {
                Some(existing) => {
                    for (e, g) in existing.iter_mut().zip(grad) {
                        *e += g;
                    }
                }
                None => {
                    grads.insert(parent.id(), grad);
                }
            }
        }
    }

    // Only leaf gradients remain meaningful to callers; interior ones were
    // consumed above.
    Ok(GradStore { grads })
}

fn topo_order<T: Scalar>(root: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut order = Vec::new();
    let mut visited: HashSet<TensorId> = HashSet::new();
    // (tensor, children_pushed)
    let mut stack: Vec<(Tensor<T>, bool)> = vec![(root.clone(), false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            order.push(node);
            continue;
        }
        if !visited.insert(node.id()) {
            continue;
        }
        // Skip subgraphs that cannot influence any gradient.
        if !node.requires_grad() {
            continue;
        }
        let parents: Vec<Tensor<T>> = node.op().parents().into_iter().cloned().collect();
        stack.push((node, true));
        for p in parents {
            stack.push((p, false));
        }
    }
    order
}

/// Vector-Jacobian products: gradients of the node's parents given the
/// gradient of the node. Parents that do not require gradients may receive
/// an empty placeholder; the caller skips them.
fn vjp<T: Scalar>(node: &Tensor<T>, gy: &[T]) -> Vec<(Tensor<T>, Vec<T>)> {
    match node.op() {
        Op::Leaf => vec![],

        Op::Add(a, b) => vec![(a.clone(), gy.to_vec()), (b.clone(), gy.to_vec())],

        Op::Mul(a, b) => {
            let ga = gy.iter().zip(b.values()).map(|(&g, &bv)| g * bv).collect();
            let gb = gy.iter().zip(a.values()).map(|(&g, &av)| g * av).collect();
            vec![(a.clone(), ga), (b.clone(), gb)]
        }

        Op::Scale(x, c) => {
            let gx = gy.iter().map(|&g| g * *c).collect();
            vec![(x.clone(), gx)]
        }

        Op::MulScalarTensor(x, s) => {
            let sv = s.values()[0];
            let gx = gy.iter().map(|&g| g * sv).collect();
            let mut acc = T::Acc::zero();
            for (&g, &xv) in gy.iter().zip(x.values()) {
                acc += g.acc() * xv.acc();
            }
            vec![(x.clone(), gx), (s.clone(), vec![T::from_acc(acc)])]
        }

        Op::Matmul(a, b) => {
            let (m, k) = (a.dim(0), a.dim(1));
            let n = b.dim(1);
            let ga = if a.requires_grad() {
                kernels::matmul_nt(gy, m, n, b.values(), k)
            } else {
                Vec::new()
            };
            let gb = if b.requires_grad() {
                kernels::matmul_tn(a.values(), m, k, gy, n)
            } else {
                Vec::new()
            };
            vec![(a.clone(), ga), (b.clone(), gb)]
        }

        Op::Bmm(a, b) => {
            let (m, k) = (a.dim(1), a.dim(2));
            let n = b.dim(2);
            let mut ga = vec![T::zero(); a.len()];
            let mut gb = vec![T::zero(); b.len()];
            ga.par_chunks_mut(m * k)
                .zip(gb.par_chunks_mut(k * n))
                .zip(gy.par_chunks(m * n))
                .zip(a.values().par_chunks(m * k))
                .zip(b.values().par_chunks(k * n))
                .for_each(|((((ga_b, gb_b), gy_b), a_b), b_b)| {
                    ga_b.copy_from_slice(&kernels::matmul_nt_seq(gy_b, m, n, b_b, k));
                    gb_b.copy_from_slice(&kernels::matmul_tn_seq(a_b, m, k, gy_b, n));
                });
            vec![(a.clone(), ga), (b.clone(), gb)]
        }

        Op::Linear {
            input,
            weight,
            bias,
        } => {
            let (m, k) = (input.dim(0), input.dim(1));
            let n = weight.dim(1);
            let gx = if input.requires_grad() {
                kernels::matmul_nt(gy, m, n, weight.values(), k)
            } else {
                Vec::new()
            };
            let gw = if weight.requires_grad() {
                kernels::matmul_tn(input.values(), m, k, gy, n)
            } else {
                Vec::new()
            };
            let mut gb = vec![T::Acc::zero(); n];
            for row in gy.chunks(n) {
                for (g, &v) in gb.iter_mut().zip(row) {
                    *g += v.acc();
                }
            }
            vec![
                (input.clone(), gx),
                (weight.clone(), gw),
                (bias.clone(), gb.into_iter().map(T::from_acc).collect()),
            ]
        }

        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
            padding,
        } => {
            let dims = ConvDims {
                batch: input.dim(0),
                in_channels: input.dim(1),
                in_h: input.dim(2),
                in_w: input.dim(3),
                out_channels: weight.dim(0),
                k_h: weight.dim(2),
                k_w: weight.dim(3),
                stride: *stride,
                padding: *padding,
                out_h: node.dim(2),
                out_w: node.dim(3),
            };
            let gx = if input.requires_grad() {
                kernels::conv2d_backward_input(gy, weight.values(), &dims)
            } else {
                Vec::new()
            };
            let (gw, gb) = kernels::conv2d_backward_params(input.values(), gy, &dims);
            vec![
                (input.clone(), gx),
                (weight.clone(), gw),
                (bias.clone(), gb),
            ]
        }

        Op::PadZero2d { input, pad } => {
            let (batch, chans, in_h, in_w) =
                (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
            let (top, _, left, _) = *pad;
            let out_h = node.dim(2);
            let out_w = node.dim(3);
            let mut gx = vec![T::zero(); input.len()];
            for p in 0..batch * chans {
                let src = &gy[p * out_h * out_w..(p + 1) * out_h * out_w];
                let dst = &mut gx[p * in_h * in_w..(p + 1) * in_h * in_w];
                for h in 0..in_h {
                    let start = (h + top) * out_w + left;
                    dst[h * in_w..(h + 1) * in_w].copy_from_slice(&src[start..start + in_w]);
                }
            }
            vec![(input.clone(), gx)]
        }

        Op::AvgPool2d {
            input,
            kernel,
            stride,
        } => {
            let dims = PoolDims {
                batch: input.dim(0),
                channels: input.dim(1),
                in_h: input.dim(2),
                in_w: input.dim(3),
                k_h: kernel.0,
                k_w: kernel.1,
                stride: *stride,
                out_h: node.dim(2),
                out_w: node.dim(3),
            };
            vec![(input.clone(), kernels::avg_pool2d_backward(gy, &dims))]
        }

        Op::BatchNorm {
            input,
            scale,
            shift,
            normalized,
            inv_std,
            batch_stats,
        } => {
            let (batch, chans, h, w) =
                (input.dim(0), input.dim(1), input.dim(2), input.dim(3));
            let plane = h * w;
            let m = T::acc_from_f64((batch * plane) as f64);
            let mut g_scale = vec![T::Acc::zero(); chans];
            let mut g_shift = vec![T::Acc::zero(); chans];
            g_scale
                .par_iter_mut()
                .zip(g_shift.par_iter_mut())
                .enumerate()
                .for_each(|(c, (gs, gb))| {
                    for n in 0..batch {
                        let start = (n * chans + c) * plane;
                        *gb += wide_sum(&gy[start..start + plane]);
                        *gs += dot(&gy[start..start + plane], &normalized[start..start + plane]);
                    }
                });
            let gx = if input.requires_grad() {
                let mut gx = vec![T::zero(); input.len()];
                gx.par_chunks_mut(plane).enumerate().for_each(|(p, gx_p)| {
                    let c = p % chans;
                    let start = p * plane;
                    let coef = scale.values()[c] * inv_std[c];
                    if *batch_stats {
                        let mean_dy = T::from_acc(g_shift[c] / m);
                        let mean_dy_xh = T::from_acc(g_scale[c] / m);
                        for i in 0..plane {
                            gx_p[i] = coef
                                * (gy[start + i] - mean_dy - normalized[start + i] * mean_dy_xh);
                        }
                    } else {
                        for i in 0..plane {
                            gx_p[i] = coef * gy[start + i];
                        }
                    }
                });
                gx
            } else {
                Vec::new()
            };
            vec![
                (input.clone(), gx),
                (
                    scale.clone(),
                    g_scale.into_iter().map(T::from_acc).collect(),
                ),
                (
                    shift.clone(),
                    g_shift.into_iter().map(T::from_acc).collect(),
                ),
            ]
        }

        Op::LayerNorm {
            input,
            scale,
            shift,
            normalized,
            inv_std,
        } => {
            let last = *input.shape().last().unwrap();
            let rows = input.len() / last;
            let inv_last = T::one() / T::from_f64(last as f64);
            let mut g_scale = vec![T::Acc::zero(); last];
            let mut g_shift = vec![T::Acc::zero(); last];
            let mut gx = vec![T::zero(); input.len()];
            for r in 0..rows {
                let base = r * last;
                let mut sum_dyh = T::Acc::zero();
                let mut sum_dyh_xh = T::Acc::zero();
                for i in 0..last {
                    let dyh = gy[base + i] * scale.values()[i];
                    sum_dyh += dyh.acc();
                    sum_dyh_xh += dyh.acc() * normalized[base + i].acc();
                    g_scale[i] += gy[base + i].acc() * normalized[base + i].acc();
                    g_shift[i] += gy[base + i].acc();
                }
                let mean_dyh = T::from_acc(sum_dyh) * inv_last;
                let mean_dyh_xh = T::from_acc(sum_dyh_xh) * inv_last;
                for i in 0..last {
                    let dyh = gy[base + i] * scale.values()[i];
                    gx[base + i] =
                        inv_std[r] * (dyh - mean_dyh - normalized[base + i] * mean_dyh_xh);
                }
            }
            vec![
                (input.clone(), gx),
                (
                    scale.clone(),
                    g_scale.into_iter().map(T::from_acc).collect(),
                ),
                (
                    shift.clone(),
                    g_shift.into_iter().map(T::from_acc).collect(),
                ),
            ]
        }

        Op::Elu { input, alpha } => {
            let alpha = *alpha;
            let map = |((g, x), y): ((&T, &T), &T)| {
                if *x > T::zero() {
                    *g
                } else {
                    // d/dx alpha*(e^x - 1) = alpha*e^x = y + alpha
                    *g * (*y + alpha)
                }
            };
            let zipped = || gy.iter().zip(input.values()).zip(node.values());
            let gx = if gy.len() >= 1 << 16 {
                let mut gx = vec![T::zero(); gy.len()];
                gx.par_chunks_mut(1 << 14).zip(
                    gy.par_chunks(1 << 14)
                        .zip(input.values().par_chunks(1 << 14))
                        .zip(node.values().par_chunks(1 << 14)),
                ).for_each(|(dst, ((g, x), y))| {
                    for (slot, v) in dst.iter_mut().zip(g.iter().zip(x).zip(y).map(map)) {
                        *slot = v;
                    }
                });
                gx
            } else {
                zipped().map(map).collect()
            };
            vec![(input.clone(), gx)]
        }

        Op::Softmax { input, axis } => {
            let axis_len = node.dim(*axis);
            let inner: usize = node.shape()[axis + 1..].iter().product();
            let outer: usize = node.shape()[..*axis].iter().product();
            let y = node.values();
            let mut gx = vec![T::zero(); node.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * axis_len * inner + i;
                    let mut dot_acc = T::Acc::zero();
                    for j in 0..axis_len {
                        let idx = base + j * inner;
                        dot_acc += gy[idx].acc() * y[idx].acc();
                    }
                    let dot_v = T::from_acc(dot_acc);
                    for j in 0..axis_len {
                        let idx = base + j * inner;
                        gx[idx] = y[idx] * (gy[idx] - dot_v);
                    }
                }
            }
            vec![(input.clone(), gx)]
        }

        Op::Dropout { input, mask } => {
            let gx = gy.iter().zip(mask).map(|(&g, &m)| g * m).collect();
            vec![(input.clone(), gx)]
        }

        Op::Reshape(x) => vec![(x.clone(), gy.to_vec())],

        Op::Permute { input, axes } => {
            // Backward permutes the gradient by the inverse permutation.
            let mut inverse = vec![0usize; axes.len()];
            for (i, &a) in axes.iter().enumerate() {
                inverse[a] = i;
            }
            let gx = permute_values(gy, node.shape(), &inverse, input.shape());
            vec![(input.clone(), gx)]
        }

        Op::SumAll(x) => {
            let g = gy[0];
            vec![(x.clone(), vec![g; x.len()])]
        }

        Op::SumSquares(x) => {
            let g = gy[0];
            let two = T::from_f64(2.0);
            let gx = x.values().iter().map(|&v| two * v * g).collect();
            vec![(x.clone(), gx)]
        }

        Op::CrossEntropyLogits {
            logits,
            labels,
            probs,
        } => {
            let (rows, classes) = (logits.dim(0), logits.dim(1));
            let g = gy[0] / T::from_f64(rows as f64);
            let mut gx = vec![T::zero(); logits.len()];
            for r in 0..rows {
                for c in 0..classes {
                    let idx = r * classes + c;
                    let indicator = if labels[r] == c { T::one() } else { T::zero() };
                    gx[idx] = (probs[idx] - indicator) * g;
                }
            }
            vec![(logits.clone(), gx)]
        }

        Op::NllProbs {
            probs,
            labels,
            floor,
        } => {
            let (rows, classes) = (probs.dim(0), probs.dim(1));
            let g = gy[0] / T::from_f64(rows as f64);
            let mut gx = vec![T::zero(); probs.len()];
            for (r, &y) in labels.iter().enumerate() {
                let p = probs.values()[r * classes + y].max(*floor);
                gx[r * classes + y] = -g / p;
            }
            vec![(probs.clone(), gx)]
        }
    }
}
