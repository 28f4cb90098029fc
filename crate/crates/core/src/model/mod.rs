//! The full two-stream model: configuration, parameter state, and the
//! fused forward pass with ablation switches.

pub mod ct;
pub mod fusion;
pub mod layers;
pub mod tc;

pub use ct::{attention, attention_weights, ct_forward, multi_head_attention, CtConfig, CtParams};
pub use fusion::{combined_loss, fuse, predict, single_stream, Fused, FusionMode, FusionWeights, LossConfig};
pub use layers::{BnUpdate, Phase};
pub use tc::{tc_forward, tc_transform, TcConfig, TcParams};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{FeatureStats, SignalMatrix};
use crate::error::{Error, Result};
use crate::optim::{adam_step, AdamHyper, AdamState};
use crate::scalar::Scalar;
use crate::tensor::{GradStore, Tensor};
use crate::wavelet::CwtPlan;
use crate::SIGNAL_LEN;

/// Which parts of the network run. The default runs everything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub ct_only: bool,
    pub tc_only: bool,
    pub no_attention: bool,
    pub no_augmentation: bool,
}

impl Ablation {
    pub fn validate(&self) -> Result<()> {
        if self.ct_only && self.tc_only {
            return Err(Error::invalid("ablation: ct_only and tc_only are exclusive"));
        }
        Ok(())
    }

    pub fn runs_ct(&self) -> bool {
        !self.tc_only
    }

    pub fn runs_tc(&self) -> bool {
        !self.ct_only
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub features: usize,
    pub ct: CtConfig,
    pub tc: TcConfig,
    pub fusion_mode: FusionMode,
    pub loss: LossConfig,
}

impl ModelConfig {
    pub fn new(features: usize) -> Self {
        ModelConfig {
            features,
            ct: CtConfig::default(),
            tc: TcConfig::default(),
            fusion_mode: FusionMode::default(),
            loss: LossConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.features == 0 {
            return Err(Error::invalid("model: need at least one feature"));
        }
        self.ct.validate()?;
        self.tc.validate()?;
        if self.ct.num_classes != self.tc.num_classes || self.ct.num_classes != self.loss.num_classes
        {
            return Err(Error::invalid("model: class-count mismatch across modules"));
        }
        Ok(())
    }
}

/// All learnable parameters of both streams plus the fusion weights, the
/// per-parameter Adam moment accumulators and step counter, the batch-norm
/// running statistics, the input standardization statistics, and the
/// precomputed wavelet plan.
#[derive(Clone)]
pub struct ModelState<T: Scalar> {
    pub config: ModelConfig,
    pub ct: CtParams<T>,
    pub tc: TcParams<T>,
    pub fusion: FusionWeights<T>,
    pub optimizer: AdamState<T>,
    pub input_stats: Option<FeatureStats<T>>,
    cwt_plan: CwtPlan<T>,
}

/// One forward pass over a batch.
pub struct ModelOutput<T: Scalar> {
    pub fused: Fused<T>,
    pub logits_ct: Option<Tensor<T>>,
    pub logits_tc: Option<Tensor<T>>,
    pub bn_updates: Vec<BnUpdate<T>>,
}

impl<T: Scalar> ModelState<T> {
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ct = CtParams::init(&config.ct, config.features, SIGNAL_LEN, &mut rng)?;
        let tc = TcParams::init(&config.tc, config.features, &mut rng)?;
        let cwt_plan = CwtPlan::new(&config.tc.scale_grid()?, &config.tc.morlet())?;
        Ok(ModelState {
            config,
            ct,
            tc,
            fusion: FusionWeights::init(),
            optimizer: AdamState::default(),
            input_stats: None,
            cwt_plan,
        })
    }

    pub fn cwt_plan(&self) -> &CwtPlan<T> {
        &self.cwt_plan
    }

    /// Scalogram front-end for a batch of signal matrices (no gradient).
    pub fn transform(&self, batch: &[SignalMatrix<T>]) -> Result<Tensor<T>> {
        tc_transform(batch, &self.cwt_plan)
    }

    /// Batch tensor `(N, 1, F, T)` for the temporal-spatial stream.
    pub fn ct_input(&self, batch: &[SignalMatrix<T>]) -> Result<Tensor<T>> {
        let first = batch
            .first()
            .ok_or_else(|| Error::invalid("ct_input: empty batch"))?;
        let (features, t_len) = (first.feature_count(), first.len());
        let mut values = Vec::with_capacity(batch.len() * features * t_len);
        for m in batch {
            if m.feature_count() != features || m.len() != t_len {
                return Err(Error::shape(
                    "ct_input batch",
                    &[m.feature_count(), m.len()],
                    &[features, t_len],
                ));
            }
            values.extend_from_slice(m.values());
        }
        Tensor::constant(&[batch.len(), 1, features, t_len], values)
    }

    /// Run the configured streams and fuse. `ct_in`/`tc_in` may be omitted
    /// only when the corresponding stream is ablated away.
    pub fn forward(
        &self,
        ct_in: Option<&Tensor<T>>,
        tc_in: Option<&Tensor<T>>,
        ablation: &Ablation,
        phase: &mut Phase,
    ) -> Result<ModelOutput<T>> {
        ablation.validate()?;
        let mut updates = Vec::new();
        let logits_ct = if ablation.runs_ct() {
            let input = ct_in.ok_or_else(|| Error::invalid("forward: missing CT input"))?;
            Some(ct_forward(
                input,
                &self.ct,
                &self.config.ct,
                !ablation.no_attention,
                phase,
                &mut updates,
            )?)
        } else {
            None
        };
        let logits_tc = if ablation.runs_tc() {
            let input = tc_in.ok_or_else(|| Error::invalid("forward: missing TC input"))?;
            Some(tc_forward(input, &self.tc, &self.config.tc, phase, &mut updates)?)
        } else {
            None
        };
        let fused = match (&logits_ct, &logits_tc) {
            (Some(ct), Some(tc)) => fuse(ct, tc, &self.fusion, self.config.fusion_mode)?,
            (Some(ct), None) => single_stream(ct, &self.fusion.ct)?,
            (None, Some(tc)) => single_stream(tc, &self.fusion.tc)?,
            (None, None) => unreachable!("ablation validation forbids dropping both streams"),
        };
        Ok(ModelOutput {
            fused,
            logits_ct,
            logits_tc,
            bn_updates: updates,
        })
    }

    /// Convenience eval-mode forward straight from signal matrices.
    pub fn forward_signals(
        &self,
        batch: &[SignalMatrix<T>],
        ablation: &Ablation,
    ) -> Result<ModelOutput<T>> {
        let ct_in = if ablation.runs_ct() {
            Some(self.ct_input(batch)?)
        } else {
            None
        };
        let tc_in = if ablation.runs_tc() {
            Some(self.transform(batch)?)
        } else {
            None
        };
        self.forward(ct_in.as_ref(), tc_in.as_ref(), ablation, &mut Phase::Eval)
    }

    /// Apply deferred batch-norm running-statistic updates from a
    /// training-mode forward.
    pub fn absorb_bn_updates(&mut self, updates: &[BnUpdate<T>]) {
        for u in updates {
            match u.slot {
                ct::BN_SLOT_CT => self.ct.bn.absorb(u),
                tc::BN_SLOT_TC1 => self.tc.bn1.absorb(u),
                tc::BN_SLOT_TC2 => self.tc.bn2.absorb(u),
                other => unreachable!("unknown batch-norm slot {other}"),
            }
        }
    }

    /// Every learnable parameter, in a stable order.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = self.ct.named_mut();
        out.extend(self.tc.named_mut());
        out.extend(self.fusion.named_mut());
        out
    }

    fn collect_active<'a>(
        ct: &'a mut CtParams<T>,
        tc: &'a mut TcParams<T>,
        fusion: &'a mut FusionWeights<T>,
        ablation: &Ablation,
    ) -> Vec<(String, &'a mut Tensor<T>)> {
        let mut out = Vec::new();
        let both = !ablation.ct_only && !ablation.tc_only;
        if ablation.runs_ct() {
            out.extend(ct.named_mut());
        }
        if ablation.runs_tc() {
            out.extend(tc.named_mut());
        }
        for (name, t) in fusion.named_mut() {
            let keep = both
                || (name.ends_with(".ct") && ablation.ct_only)
                || (name.ends_with(".tc") && ablation.tc_only);
            if keep {
                out.push((name, t));
            }
        }
        out
    }

    /// Learnable parameters participating under the given ablation, stable
    /// order. These receive gradients, the optimizer step, and the L2 term.
    pub fn active_params_mut(&mut self, ablation: &Ablation) -> Vec<(String, &mut Tensor<T>)> {
        Self::collect_active(&mut self.ct, &mut self.tc, &mut self.fusion, ablation)
    }

    /// Read-only view of the active parameters.
    pub fn active_params(&mut self, ablation: &Ablation) -> Vec<(String, Tensor<T>)> {
        self.active_params_mut(ablation)
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect()
    }

    /// One Adam step over the active parameters using this model's embedded
    /// moment accumulators.
    pub fn optimize(
        &mut self,
        grads: &GradStore<T>,
        hyper: &AdamHyper,
        ablation: &Ablation,
    ) -> Result<()> {
        let ModelState {
            ct,
            tc,
            fusion,
            optimizer,
            ..
        } = self;
        let mut params = Self::collect_active(ct, tc, fusion, ablation);
        adam_step(&mut params, grads, optimizer, hyper)
    }

    /// Non-learnable state that must persist in checkpoints.
    pub fn named_buffers(&self) -> Vec<(String, Vec<T>)> {
        let mut out = Vec::new();
        self.ct.bn.named_buffers("ct.bn", &mut out);
        self.tc.bn1.named_buffers("tc.bn1", &mut out);
        self.tc.bn2.named_buffers("tc.bn2", &mut out);
        if let Some(stats) = &self.input_stats {
            out.push(("stats.mean".to_string(), stats.mean.clone()));
            out.push(("stats.std".to_string(), stats.std.clone()));
        }
        out
    }
}
