//! Temporal-frequency stream: a fixed wavelet-scalogram front-end feeding a
//! compact CNN (time-padded conv, pooling, scale-axis conv, global average
//! pooling) and a dense head.

use rand::RngCore;
use rayon::prelude::*;

use crate::data::SignalMatrix;
use crate::error::{Error, Result};
use crate::model::layers::{
    dropout, BatchNormParams, BnUpdate, Conv2dParams, LinearParams, Phase,
};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::wavelet::{scalogram_with_plan, CwtPlan, MorletParams, ScaleGrid};

#[derive(Debug, Clone)]
pub struct TcConfig {
    /// Number of wavelet scales (vertical scalogram size).
    pub scales: usize,
    /// Frequency band covered by the scale grid, in Hz.
    pub min_freq: f64,
    pub max_freq: f64,
    pub sampling_rate: f64,
    pub morlet_bandwidth: f64,
    pub morlet_center: f64,
    /// Temporal kernel of the first convolution (padded to preserve time).
    pub conv1_kernel: usize,
    pub conv1_channels: usize,
    pub conv2_channels: usize,
    /// Time pooling between the two convolutions (kernel = stride).
    pub pool_stride: usize,
    pub dense_hidden: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
}

impl Default for TcConfig {
    fn default() -> Self {
        TcConfig {
            scales: 32,
            min_freq: 0.1,
            max_freq: 15.0,
            sampling_rate: 30.0,
            morlet_bandwidth: 1.0,
            morlet_center: 1.0,
            conv1_kernel: 10,
            conv1_channels: 16,
            conv2_channels: 32,
            pool_stride: 15,
            dense_hidden: 64,
            dropout_rate: 0.3,
            num_classes: 4,
        }
    }
}

impl TcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales < 2 {
            return Err(Error::invalid(
                "tc: need at least 2 scales (the 2x1 convolution consumes one)",
            ));
        }
        if self.min_freq <= 0.0 || self.max_freq <= self.min_freq {
            return Err(Error::invalid("tc: need 0 < min_freq < max_freq"));
        }
        if self.sampling_rate <= 0.0 {
            return Err(Error::invalid("tc: sampling_rate must be positive"));
        }
        if self.morlet_bandwidth <= 0.0 || self.morlet_center <= 0.0 {
            return Err(Error::invalid("tc: morlet parameters must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid("tc: dropout rate must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn morlet<T: Scalar>(&self) -> MorletParams<T> {
        MorletParams {
            bandwidth: T::from_f64(self.morlet_bandwidth),
            center_frequency: T::from_f64(self.morlet_center),
        }
    }

    pub fn scale_grid<T: Scalar>(&self) -> Result<ScaleGrid<T>> {
        ScaleGrid::geometric(
            self.scales,
            self.min_freq,
            self.max_freq,
            self.sampling_rate,
            self.morlet_center,
        )
    }

    /// Left/right time padding preserving the time axis under `conv1_kernel`
    /// (even kernels split (k-1)/2 left, k/2 right).
    pub fn time_padding(&self) -> (usize, usize) {
        ((self.conv1_kernel - 1) / 2, self.conv1_kernel / 2)
    }
}

#[derive(Clone)]
pub struct TcParams<T: Scalar> {
    pub conv1: Conv2dParams<T>,
    pub bn1: BatchNormParams<T>,
    pub conv2: Conv2dParams<T>,
    pub bn2: BatchNormParams<T>,
    pub adjust: LinearParams<T>,
    pub dense_in: LinearParams<T>,
    pub dense_out: LinearParams<T>,
}

pub const BN_SLOT_TC1: usize = 1;
pub const BN_SLOT_TC2: usize = 2;

impl<T: Scalar> TcParams<T> {
    pub fn init(cfg: &TcConfig, features: usize, rng: &mut dyn RngCore) -> Result<Self> {
        cfg.validate()?;
        if features == 0 {
            return Err(Error::invalid("tc: need at least one feature"));
        }
        Ok(TcParams {
            conv1: Conv2dParams::init(
                cfg.conv1_channels,
                features,
                (1, cfg.conv1_kernel),
                (1, 1),
                (0, 0),
                rng,
            ),
            bn1: BatchNormParams::init(cfg.conv1_channels),
            conv2: Conv2dParams::init(
                cfg.conv2_channels,
                cfg.conv1_channels,
                (2, 1),
                (1, 1),
                (0, 0),
                rng,
            ),
            bn2: BatchNormParams::init(cfg.conv2_channels),
            adjust: LinearParams::init(cfg.conv2_channels, cfg.dense_hidden, rng),
            dense_in: LinearParams::init(cfg.dense_hidden, cfg.dense_hidden, rng),
            dense_out: LinearParams::init(cfg.dense_hidden, cfg.num_classes, rng),
        })
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.conv1.named_mut("tc.conv1", &mut out);
        self.bn1.named_mut("tc.bn1", &mut out);
        self.conv2.named_mut("tc.conv2", &mut out);
        self.bn2.named_mut("tc.bn2", &mut out);
        self.adjust.named_mut("tc.adjust", &mut out);
        self.dense_in.named_mut("tc.dense_in", &mut out);
        self.dense_out.named_mut("tc.dense_out", &mut out);
        out
    }
}

/// Scalogram front-end over a batch: `(N, F, S, T)` with the F feature
/// scalograms stacked as input channels. The output carries no gradient
/// (the transform is fixed preprocessing).
pub fn tc_transform<T: Scalar>(
    batch: &[SignalMatrix<T>],
    plan: &CwtPlan<T>,
) -> Result<Tensor<T>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::invalid("tc_transform: empty batch"))?;
    let (features, t_len) = (first.feature_count(), first.len());
    if let Some(bad) = batch
        .iter()
        .find(|m| m.feature_count() != features || m.len() != t_len)
    {
        return Err(Error::shape(
            "tc_transform batch",
            &[bad.feature_count(), bad.len()],
            &[features, t_len],
        ));
    }
    let s_len = plan.grid().len();
    let per_sample = features * s_len * t_len;
    let mut values = vec![T::zero(); batch.len() * per_sample];
    let results: Result<Vec<()>> = values
        .par_chunks_mut(per_sample)
        .zip(batch.par_iter())
        .map(|(chunk, matrix)| {
            let sg = scalogram_with_plan(matrix, plan)?;
            chunk.copy_from_slice(sg.values());
            Ok(())
        })
        .collect();
    results?;
    Tensor::constant(&[batch.len(), features, s_len, t_len], values)
}

/// Full stream over a precomputed `(N, F, S, T)` scalogram tensor.
pub fn tc_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &TcParams<T>,
    cfg: &TcConfig,
    phase: &mut Phase,
    updates: &mut Vec<BnUpdate<T>>,
) -> Result<Tensor<T>> {
    input.check_rank(4, "tc input")?;
    let (left, right) = cfg.time_padding();
    let x = input.pad_zero2d((0, 0, left, right))?;
    let x = params.conv1.apply(&x)?;
    let x = params.bn1.apply(&x, phase, BN_SLOT_TC1, updates)?;
    let x = x.elu(T::one())?;
    let x = x.avg_pool2d((1, cfg.pool_stride), (1, cfg.pool_stride))?;
    let x = params.conv2.apply(&x)?;
    let x = params.bn2.apply(&x, phase, BN_SLOT_TC2, updates)?;
    let x = x.elu(T::one())?;
    let x = x.global_avg_pool()?;
    let x = params.adjust.apply(&x)?.elu(T::one())?;
    let h = params.dense_in.apply(&x)?.elu(T::one())?;
    let h = dropout(&h, cfg.dropout_rate, phase)?;
    params.dense_out.apply(&h)
}
