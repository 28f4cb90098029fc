//! Continuous wavelet transform with the complex Morlet mother wavelet.
//!
//! Time is measured in samples throughout: column `m` of a coefficient
//! matrix corresponds to physical time `m / sampling_rate`, and a scale `s`
//! (in samples) maps to center frequency `f = C * sampling_rate / s` Hz.
//! Coefficients are computed by direct convolution with the wavelet support
//! truncated where the Gaussian envelope falls below 1e-8 of its peak, with
//! the signal zero-extended at the boundaries.

use num_complex::Complex;
use num_traits::Zero;
use rayon::prelude::*;

use crate::data::SignalMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Envelope threshold for truncating the wavelet support.
const SUPPORT_EPS: f64 = 1e-8;

/// Complex Morlet parameters: a complex sine wave at `center_frequency`
/// cycles per unit time, modulated by a Gaussian window of width
/// `bandwidth` (squared-time units).
#[derive(Debug, Clone, Copy)]
pub struct MorletParams<T: Scalar> {
    pub bandwidth: T,
    pub center_frequency: T,
}

impl<T: Scalar> Default for MorletParams<T> {
    fn default() -> Self {
        MorletParams {
            bandwidth: T::one(),
            center_frequency: T::one(),
        }
    }
}

impl<T: Scalar> MorletParams<T> {
    pub fn validate(&self) -> Result<()> {
        if self.bandwidth <= T::zero() || self.center_frequency <= T::zero() {
            return Err(Error::invalid(
                "morlet: bandwidth and center_frequency must be positive",
            ));
        }
        Ok(())
    }
}

/// `psi(t) = (1/sqrt(pi*B)) * exp(-t^2/B) * exp(2*pi*i*C*t)`
pub fn morlet_sample<T: Scalar>(t: T, params: &MorletParams<T>) -> Complex<T> {
    let pi = T::from_f64(std::f64::consts::PI);
    let norm = T::one() / (pi * params.bandwidth).sqrt();
    let envelope = (-(t * t) / params.bandwidth).exp();
    let phase = T::from_f64(2.0) * pi * params.center_frequency * t;
    Complex::new(
        norm * envelope * phase.cos(),
        norm * envelope * phase.sin(),
    )
}

/// Strictly increasing positive scales (in samples) plus the sampling rate
/// of the signals they will be applied to.
#[derive(Debug, Clone)]
pub struct ScaleGrid<T: Scalar> {
    scales: Vec<T>,
    sampling_rate: T,
}

impl<T: Scalar> ScaleGrid<T> {
    pub fn new(scales: Vec<T>, sampling_rate: T) -> Result<Self> {
        if scales.is_empty() {
            return Err(Error::invalid("scale grid must hold at least one scale"));
        }
        if sampling_rate <= T::zero() {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        if scales[0] <= T::zero() || scales.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid(
                "scales must be positive and strictly increasing",
            ));
        }
        Ok(ScaleGrid {
            scales,
            sampling_rate,
        })
    }

    /// Geometrically spaced scales whose wavelet center frequencies span
    /// `[min_freq, max_freq]` Hz: `s = C * fs / f`.
    pub fn geometric(
        count: usize,
        min_freq: f64,
        max_freq: f64,
        sampling_rate: f64,
        center_frequency: f64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("scale grid must hold at least one scale"));
        }
        if min_freq <= 0.0 || max_freq <= min_freq {
            return Err(Error::invalid("need 0 < min_freq < max_freq"));
        }
        let s_min = center_frequency * sampling_rate / max_freq;
        let s_max = center_frequency * sampling_rate / min_freq;
        let scales = if count == 1 {
            vec![T::from_f64((s_min * s_max).sqrt())]
        } else {
            let ratio = (s_max / s_min).ln() / (count - 1) as f64;
            (0..count)
                .map(|i| T::from_f64(s_min * (ratio * i as f64).exp()))
                .collect()
        };
        ScaleGrid::new(scales, T::from_f64(sampling_rate))
    }

    pub fn scales(&self) -> &[T] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.scales.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scales.is_empty()
    }

    pub fn sampling_rate(&self) -> T {
        self.sampling_rate
    }

    /// Center frequency (Hz) of the wavelet at `scale`.
    pub fn frequency_of_scale(&self, scale: T, params: &MorletParams<T>) -> T {
        params.center_frequency * self.sampling_rate / scale
    }

    /// The scale whose center frequency matches `freq` Hz.
    pub fn scale_for_frequency(&self, freq: T, params: &MorletParams<T>) -> T {
        params.center_frequency * self.sampling_rate / freq
    }
}

/// Precomputed wavelet taps for one (grid, wavelet) pair; reusable across
/// signals of any length.
#[derive(Clone)]
pub struct CwtPlan<T: Scalar> {
    grid: ScaleGrid<T>,
    /// Per scale: (half_width, conj(psi(d/s))/sqrt(s) for d in -hw..=hw,
    /// stored as separate re/im for vectorization).
    taps: Vec<(usize, Vec<T>, Vec<T>)>,
}

impl<T: Scalar> CwtPlan<T> {
    pub fn new(grid: &ScaleGrid<T>, params: &MorletParams<T>) -> Result<Self> {
        params.validate()?;
        // Envelope exp(-u^2/B) falls below SUPPORT_EPS at |u| = sqrt(B ln(1/eps)),
        // i.e. |d| = s * sqrt(B ln(1/eps)) samples.
        let cutoff = (params.bandwidth.to_f64() * (1.0 / SUPPORT_EPS).ln()).sqrt();
        let taps = grid
            .scales
            .iter()
            .map(|&s| {
                let hw = (s.to_f64() * cutoff).ceil() as usize;
                let inv_sqrt_s = T::one() / s.sqrt();
                let mut re = Vec::with_capacity(2 * hw + 1);
                let mut im = Vec::with_capacity(2 * hw + 1);
                for d in -(hw as isize)..=(hw as isize) {
                    let u = T::from_f64(d as f64) / s;
                    let psi = morlet_sample(u, params);
                    // conj(psi) scaled by 1/sqrt(s)
                    re.push(psi.re * inv_sqrt_s);
                    im.push(-psi.im * inv_sqrt_s);
                }
                (hw, re, im)
            })
            .collect();
        Ok(CwtPlan {
            grid: grid.clone(),
            taps,
        })
    }

    pub fn grid(&self) -> &ScaleGrid<T> {
        &self.grid
    }

    /// Largest truncated half-width over all scales, in samples.
    pub fn max_half_width(&self) -> usize {
        self.taps.iter().map(|(hw, _, _)| *hw).max().unwrap_or(0)
    }

    /// Apply the transform to one signal, producing an S x T complex matrix
    /// (row per scale).
    pub fn apply(&self, signal: &[T]) -> Result<Vec<Complex<T>>> {
        let t_len = signal.len();
        if t_len < 2 {
            return Err(Error::invalid(format!(
                "cwt: signal must have at least 2 samples, got {t_len}"
            )));
        }
        let s_len = self.grid.len();
        let mut out = vec![Complex::new(T::zero(), T::zero()); s_len * t_len];
        out.par_chunks_mut(t_len)
            .zip(self.taps.par_iter())
            .for_each(|(row, (hw, taps_re, taps_im))| {
                let hw = *hw as isize;
                for (m, cell) in row.iter_mut().enumerate() {
                    let m = m as isize;
                    // d = n - m ranges over the truncated support intersected
                    // with the signal; outside the signal x is zero.
                    let d_lo = (-hw).max(-m);
                    let d_hi = hw.min(t_len as isize - 1 - m);
                    let mut acc_re = T::Acc::zero();
                    let mut acc_im = T::Acc::zero();
                    for d in d_lo..=d_hi {
                        let x = signal[(m + d) as usize].acc();
                        let k = (d + hw) as usize;
                        acc_re = acc_re + x * taps_re[k].acc();
                        acc_im = acc_im + x * taps_im[k].acc();
                    }
                    *cell = Complex::new(T::from_acc(acc_re), T::from_acc(acc_im));
                }
            });
        Ok(out)
    }
}

/// Continuous wavelet transform of one signal: row `k`, column `m` holds the
/// coefficient at scale `scales[k]` and shift `m` samples.
pub fn cwt<T: Scalar>(
    signal: &[T],
    grid: &ScaleGrid<T>,
    params: &MorletParams<T>,
) -> Result<Vec<Complex<T>>> {
    CwtPlan::new(grid, params)?.apply(signal)
}

/// F x S x T tensor of coefficient magnitudes for one signal matrix.
#[derive(Debug, Clone)]
pub struct Scalogram<T: Scalar> {
    data: Vec<T>,
    feature_count: usize,
    time_len: usize,
    pub scale_grid: ScaleGrid<T>,
    pub feature_names: Vec<String>,
}

impl<T: Scalar> Scalogram<T> {
    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.feature_count, self.scale_grid.len(), self.time_len)
    }

    /// Row of `time_len` magnitudes for one (feature, scale) pair.
    pub fn row(&self, feature: usize, scale: usize) -> &[T] {
        let offset = (feature * self.scale_grid.len() + scale) * self.time_len;
        &self.data[offset..offset + self.time_len]
    }

    pub fn into_values(self) -> Vec<T> {
        self.data
    }
}

/// Transform every feature row of `matrix` and stack the magnitude matrices
/// along a leading feature axis, preserving row order.
pub fn scalogram<T: Scalar>(
    matrix: &SignalMatrix<T>,
    grid: &ScaleGrid<T>,
    params: &MorletParams<T>,
) -> Result<Scalogram<T>> {
    let plan = CwtPlan::new(grid, params)?;
    scalogram_with_plan(matrix, &plan)
}

/// [`scalogram`] against a prebuilt plan (the hot path during training).
pub fn scalogram_with_plan<T: Scalar>(
    matrix: &SignalMatrix<T>,
    plan: &CwtPlan<T>,
) -> Result<Scalogram<T>> {
    let (f_len, t_len) = (matrix.feature_count(), matrix.len());
    let s_len = plan.grid.len();
    let mut data = vec![T::zero(); f_len * s_len * t_len];
    for f in 0..f_len {
        let coeffs = plan.apply(matrix.row(f))?;
        let block = &mut data[f * s_len * t_len..(f + 1) * s_len * t_len];
        for (slot, c) in block.iter_mut().zip(&coeffs) {
            *slot = c.norm();
        }
    }
    Ok(Scalogram {
        data,
        feature_count: f_len,
        time_len: t_len,
        scale_grid: plan.grid.clone(),
        feature_names: matrix.feature_names.clone(),
    })
}
