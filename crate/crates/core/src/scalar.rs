//! Scalar abstraction for the numeric core.
//!
//! Everything numeric is generic over [`Scalar`] so the same code runs in
//! f32 (the production configuration) and f64 (used by the gradient-check
//! suites, where central differences need the extra precision). Reductions
//! accumulate in [`Scalar::Acc`], which is f64 for both element types.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, Zero};
use rand::distributions::uniform::SampleUniform;

/// Element type of tensors and signals.
pub trait Scalar:
    Float
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + SampleUniform
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Wide accumulator used inside reductions (matmul, pooling, statistics).
    type Acc: Float + AddAssign + Send + Sync;

    fn acc(self) -> Self::Acc;
    fn from_acc(acc: Self::Acc) -> Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn acc_from_f64(v: f64) -> Self::Acc;

    /// Little-endian byte encoding used by the checkpoint format.
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
    const BYTE_WIDTH: usize;
}

impl Scalar for f32 {
    type Acc = f64;

    #[inline(always)]
    fn acc(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn from_acc(acc: f64) -> f32 {
        acc as f32
    }
    #[inline(always)]
    fn from_f64(v: f64) -> f32 {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline(always)]
    fn acc_from_f64(v: f64) -> f64 {
        v
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> f32 {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
    const BYTE_WIDTH: usize = 4;
}

impl Scalar for f64 {
    type Acc = f64;

    #[inline(always)]
    fn acc(self) -> f64 {
        self
    }
    #[inline(always)]
    fn from_acc(acc: f64) -> f64 {
        acc
    }
    #[inline(always)]
    fn from_f64(v: f64) -> f64 {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline(always)]
    fn acc_from_f64(v: f64) -> f64 {
        v
    }

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> f64 {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
    const BYTE_WIDTH: usize = 8;
}

/// Dot product with blockwise wide accumulation: products are combined in
/// the element type across eight SIMD-friendly lanes, flushed into the
/// 64-bit accumulator every 64 elements. The fixed blocking keeps results
/// deterministic regardless of thread count.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T::Acc {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::Acc::zero();
    let mut i = 0;
    while i + 64 <= a.len() {
        let mut lanes = [T::zero(); 8];
        for k in 0..8 {
            let pa = &a[i + k * 8..i + k * 8 + 8];
            let pb = &b[i + k * 8..i + k * 8 + 8];
            for j in 0..8 {
                lanes[j] = lanes[j] + pa[j] * pb[j];
            }
        }
        let block = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
            + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
        acc += block.acc();
        i += 64;
    }
    // Short tail (and short dots) accumulate element-wise in 64-bit.
    while i < a.len() {
        acc += a[i].acc() * b[i].acc();
        i += 1;
    }
    acc
}

/// Sum with blockwise wide accumulation (same scheme as [`dot`]).
#[inline]
pub fn wide_sum<T: Scalar>(values: &[T]) -> T::Acc {
    let mut acc = T::Acc::zero();
    let mut i = 0;
    while i + 64 <= values.len() {
        let mut lanes = [T::zero(); 8];
        for k in 0..8 {
            let p = &values[i + k * 8..i + k * 8 + 8];
            for j in 0..8 {
                lanes[j] = lanes[j] + p[j];
            }
        }
        let block = ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3]))
            + ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
        acc += block.acc();
        i += 64;
    }
    while i < values.len() {
        acc += values[i].acc();
        i += 1;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f32> = (0..13).map(|i| i as f32 * 0.5 - 3.0).collect();
        let b: Vec<f32> = (0..13).map(|i| 1.0 - i as f32 * 0.25).collect();
        let naive: f64 = a
            .iter()
            .zip(&b)
            .map(|(&x, &y)| x as f64 * y as f64)
            .sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn wide_sum_of_many_small_terms() {
        let xs = vec![0.1f32; 1_000_000];
        let s = wide_sum(&xs);
        assert!((s - 100_000.0).abs() < 0.5);
    }
}
