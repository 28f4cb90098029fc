//! Temporal-spatial stream: sequential temporal and spatial convolutions,
//! average pooling, a 1x1-convolution token projection, a stack of
//! pre-norm self-attention encoder blocks, and a two-layer dense head.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::model::layers::{
    dropout, BatchNormParams, BnUpdate, Conv2dParams, LayerNormParams, LinearParams, Phase,
};
use crate::scalar::Scalar;
use crate::tensor::{conv_out_dim, Tensor};

#[derive(Debug, Clone)]
pub struct CtConfig {
    pub temporal_filters: usize,
    pub temporal_kernel: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    /// Token embedding width `d` (also the projection channel count).
    pub embed_dim: usize,
    /// Attention heads; must divide `embed_dim`.
    pub heads: usize,
    pub attention_layers: usize,
    /// Hidden width of the per-token feed-forward sub-block.
    pub ff_dim: usize,
    /// Hidden width of the classifier head.
    pub head_hidden: usize,
    pub conv_dropout: f64,
    pub attn_dropout: f64,
    pub num_classes: usize,
}

impl Default for CtConfig {
    fn default() -> Self {
        CtConfig {
            temporal_filters: 40,
            temporal_kernel: 25,
            pool_kernel: 75,
            pool_stride: 15,
            embed_dim: 40,
            heads: 10,
            attention_layers: 6,
            ff_dim: 160,
            head_hidden: 256,
            conv_dropout: 0.5,
            attn_dropout: 0.3,
            num_classes: 4,
        }
    }
}

impl CtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || self.embed_dim % self.heads != 0 {
            return Err(Error::invalid(format!(
                "ct: heads ({}) must divide embed_dim ({})",
                self.heads, self.embed_dim
            )));
        }
        if self.temporal_filters == 0 || self.num_classes == 0 {
            return Err(Error::invalid("ct: zero-sized layer"));
        }
        if !(0.0..1.0).contains(&self.conv_dropout) || !(0.0..1.0).contains(&self.attn_dropout) {
            return Err(Error::invalid("ct: dropout rates must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// Tokens remaining after the temporal convolution and pooling.
    pub fn token_count(&self, signal_len: usize) -> usize {
        let conv_w = conv_out_dim(signal_len, self.temporal_kernel, 1, 0);
        conv_out_dim(conv_w, self.pool_kernel, self.pool_stride, 0)
    }
}

#[derive(Clone)]
pub struct MhaParams<T: Scalar> {
    pub query: LinearParams<T>,
    pub key: LinearParams<T>,
    pub value: LinearParams<T>,
    pub output: LinearParams<T>,
}

impl<T: Scalar> MhaParams<T> {
    fn init(dim: usize, rng: &mut dyn RngCore) -> Self {
        MhaParams {
            query: LinearParams::init(dim, dim, rng),
            key: LinearParams::init(dim, dim, rng),
            value: LinearParams::init(dim, dim, rng),
            output: LinearParams::init(dim, dim, rng),
        }
    }

    fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.query.named_mut(&format!("{prefix}.query"), out);
        self.key.named_mut(&format!("{prefix}.key"), out);
        self.value.named_mut(&format!("{prefix}.value"), out);
        self.output.named_mut(&format!("{prefix}.output"), out);
    }
}

#[derive(Clone)]
pub struct EncoderLayer<T: Scalar> {
    pub norm_attn: LayerNormParams<T>,
    pub attn: MhaParams<T>,
    pub norm_ff: LayerNormParams<T>,
    pub ff_in: LinearParams<T>,
    pub ff_out: LinearParams<T>,
}

impl<T: Scalar> EncoderLayer<T> {
    fn init(cfg: &CtConfig, rng: &mut dyn RngCore) -> Self {
        EncoderLayer {
            norm_attn: LayerNormParams::init(cfg.embed_dim),
            attn: MhaParams::init(cfg.embed_dim, rng),
            norm_ff: LayerNormParams::init(cfg.embed_dim),
            ff_in: LinearParams::init(cfg.embed_dim, cfg.ff_dim, rng),
            ff_out: LinearParams::init(cfg.ff_dim, cfg.embed_dim, rng),
        }
    }

    fn named_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<(String, &'a mut Tensor<T>)>) {
        self.norm_attn.named_mut(&format!("{prefix}.norm_attn"), out);
        self.attn.named_mut(&format!("{prefix}.attn"), out);
        self.norm_ff.named_mut(&format!("{prefix}.norm_ff"), out);
        self.ff_in.named_mut(&format!("{prefix}.ff_in"), out);
        self.ff_out.named_mut(&format!("{prefix}.ff_out"), out);
    }
}

#[derive(Clone)]
pub struct CtParams<T: Scalar> {
    pub temporal: Conv2dParams<T>,
    pub spatial: Conv2dParams<T>,
    pub bn: BatchNormParams<T>,
    pub projection: Conv2dParams<T>,
    pub encoders: Vec<EncoderLayer<T>>,
    pub head_in: LinearParams<T>,
    pub head_out: LinearParams<T>,
}

/// Index of the CT stream's batch-norm slot in [`BnUpdate::slot`].
pub const BN_SLOT_CT: usize = 0;

impl<T: Scalar> CtParams<T> {
    pub fn init(
        cfg: &CtConfig,
        features: usize,
        signal_len: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        cfg.validate()?;
        if features == 0 {
            return Err(Error::invalid("ct: need at least one feature"));
        }
        let tokens = cfg.token_count(signal_len);
        if tokens == 0 {
            return Err(Error::invalid(format!(
                "ct: signal length {signal_len} leaves no tokens after conv/pool"
            )));
        }
        Ok(CtParams {
            temporal: Conv2dParams::init(
                cfg.temporal_filters,
                1,
                (1, cfg.temporal_kernel),
                (1, 1),
                (0, 0),
                rng,
            ),
            spatial: Conv2dParams::init(
                cfg.temporal_filters,
                cfg.temporal_filters,
                (features, 1),
                (1, 1),
                (0, 0),
                rng,
            ),
            bn: BatchNormParams::init(cfg.temporal_filters),
            projection: Conv2dParams::init(
                cfg.embed_dim,
                cfg.temporal_filters,
                (1, 1),
                (1, 1),
                (0, 0),
                rng,
            ),
            encoders: (0..cfg.attention_layers)
                .map(|_| EncoderLayer::init(cfg, rng))
                .collect(),
            head_in: LinearParams::init(tokens * cfg.embed_dim, cfg.head_hidden, rng),
            head_out: LinearParams::init(cfg.head_hidden, cfg.num_classes, rng),
        })
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        self.temporal.named_mut("ct.temporal", &mut out);
        self.spatial.named_mut("ct.spatial", &mut out);
        self.bn.named_mut("ct.bn", &mut out);
        self.projection.named_mut("ct.projection", &mut out);
        for (i, enc) in self.encoders.iter_mut().enumerate() {
            enc.named_mut(&format!("ct.enc{i}"), &mut out);
        }
        self.head_in.named_mut("ct.head_in", &mut out);
        self.head_out.named_mut("ct.head_out", &mut out);
        out
    }
}

/// Scaled dot-product attention per head-batch: `Softmax(QK^T/sqrt(d_k))V`.
/// Inputs are `(B, tokens, d_k)`; the softmax runs over key positions.
pub fn attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<Tensor<T>> {
    if q.shape() != k.shape() || k.shape() != v.shape() {
        return Err(Error::shape("attention", q.shape(), k.shape()));
    }
    let weights = attention_weights(q, k)?;
    weights.bmm(v)
}

/// Row-stochastic attention weight matrices `(B, tokens, tokens)`.
pub fn attention_weights<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>) -> Result<Tensor<T>> {
    let d_k = q.dim(2);
    let scores = q
        .bmm(&k.permute(&[0, 2, 1])?)?
        .scale(T::from_f64(1.0 / (d_k as f64).sqrt()));
    scores.softmax(2)
}

/// Multi-head attention over `(N, tokens, d)` with per-head projections taken
/// as column blocks of full-width maps, heads concatenated, and a final
/// output projection.
pub fn multi_head_attention<T: Scalar>(
    tokens: &Tensor<T>,
    params: &MhaParams<T>,
    heads: usize,
) -> Result<Tensor<T>> {
    let (n, t_len, dim) = (tokens.dim(0), tokens.dim(1), tokens.dim(2));
    if heads == 0 || dim % heads != 0 {
        return Err(Error::invalid(format!(
            "multi_head_attention: {heads} heads do not divide dim {dim}"
        )));
    }
    let d_k = dim / heads;
    let flat = tokens.reshape(&[n * t_len, dim])?;
    let split = |proj: &LinearParams<T>| -> Result<Tensor<T>> {
        proj.apply(&flat)?
            .reshape(&[n, t_len, heads, d_k])?
            .permute(&[0, 2, 1, 3])?
            .reshape(&[n * heads, t_len, d_k])
    };
    let q = split(&params.query)?;
    let k = split(&params.key)?;
    let v = split(&params.value)?;
    let heads_out = attention(&q, &k, &v)?
        .reshape(&[n, heads, t_len, d_k])?
        .permute(&[0, 2, 1, 3])?
        .reshape(&[n * t_len, dim])?;
    params.output.apply(&heads_out)?.reshape(&[n, t_len, dim])
}

/// Convolution front-end: `(N, 1, F, T)` to `(N, tokens, d)`.
pub fn ct_convolution<T: Scalar>(
    input: &Tensor<T>,
    params: &CtParams<T>,
    cfg: &CtConfig,
    phase: &mut Phase,
    updates: &mut Vec<BnUpdate<T>>,
) -> Result<Tensor<T>> {
    input.check_rank(4, "ct input")?;
    let n = input.dim(0);
    let x = params.temporal.apply(input)?;
    let x = params.spatial.apply(&x)?;
    let x = params.bn.apply(&x, phase, BN_SLOT_CT, updates)?;
    let x = x.elu(T::one())?;
    let x = x.avg_pool2d((1, cfg.pool_kernel), (1, cfg.pool_stride))?;
    let x = dropout(&x, cfg.conv_dropout, phase)?;
    let x = params.projection.apply(&x)?;
    let tokens = x.dim(3);
    // (N, d, 1, tokens) -> one d-dimensional token per temporal position.
    x.reshape(&[n, cfg.embed_dim, tokens])?.permute(&[0, 2, 1])
}

/// Full stream: convolution front-end, encoder stack, dense head.
/// `use_attention = false` bypasses the encoder stack (ablation path).
pub fn ct_forward<T: Scalar>(
    input: &Tensor<T>,
    params: &CtParams<T>,
    cfg: &CtConfig,
    use_attention: bool,
    phase: &mut Phase,
    updates: &mut Vec<BnUpdate<T>>,
) -> Result<Tensor<T>> {
    let mut x = ct_convolution(input, params, cfg, phase, updates)?;
    if use_attention {
        for enc in &params.encoders {
            let attn_in = enc.norm_attn.apply(&x)?;
            let attn = multi_head_attention(&attn_in, &enc.attn, cfg.heads)?;
            x = x.add(&dropout(&attn, cfg.attn_dropout, phase)?)?;

            let (n, t_len, dim) = (x.dim(0), x.dim(1), x.dim(2));
            let ff_in = enc.norm_ff.apply(&x)?.reshape(&[n * t_len, dim])?;
            let h = enc.ff_in.apply(&ff_in)?.elu(T::one())?;
            let h = dropout(&h, cfg.attn_dropout, phase)?;
            let ff = enc.ff_out.apply(&h)?.reshape(&[n, t_len, dim])?;
            x = x.add(&dropout(&ff, cfg.attn_dropout, phase)?)?;
        }
    }
    let (n, t_len, dim) = (x.dim(0), x.dim(1), x.dim(2));
    let flat = x.reshape(&[n, t_len * dim])?;
    let h = params.head_in.apply(&flat)?.elu(T::one())?;
    let h = dropout(&h, cfg.attn_dropout, phase)?;
    params.head_out.apply(&h)
}
