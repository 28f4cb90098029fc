//! Flat key-value run configuration (`section.key = value` lines, `#`
//! comments) merged with command-line `--set` overrides. Every field is
//! validated before any command does work.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use tcct_core::model::{Ablation, FusionMode, ModelConfig};
use tcct_core::train::TrainConfig;

/// A configuration problem; the message names the offending field.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub data_root: PathBuf,
    pub manifest: PathBuf,
    pub features: Vec<String>,
    pub standardize: bool,
    pub loss_lambda: f64,
    pub fusion_mode: FusionMode,
    pub ct_temporal_filters: usize,
    pub ct_temporal_kernel: usize,
    pub ct_pool_kernel: usize,
    pub ct_pool_stride: usize,
    pub ct_embed_dim: usize,
    pub ct_heads: usize,
    pub ct_attention_layers: usize,
    pub ct_ff_dim: usize,
    pub ct_head_hidden: usize,
    pub ct_conv_dropout: f64,
    pub ct_attn_dropout: f64,
    pub tc_scales: usize,
    pub tc_min_freq: f64,
    pub tc_max_freq: f64,
    pub tc_sampling_rate: f64,
    pub tc_morlet_bandwidth: f64,
    pub tc_morlet_center: f64,
    pub tc_conv1_kernel: usize,
    pub tc_conv1_channels: usize,
    pub tc_conv2_channels: usize,
    pub tc_pool_stride: usize,
    pub tc_dense_hidden: usize,
    pub tc_dropout: f64,
    pub augment_segments: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub scheduler: Vec<(usize, f64)>,
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub out_checkpoint: PathBuf,
    pub out_metrics: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            data_root: PathBuf::from("."),
            manifest: PathBuf::from("manifest.csv"),
            features: vec!["pose_Rx".into(), "pose_Ry".into()],
            standardize: true,
            loss_lambda: 0.01,
            fusion_mode: FusionMode::Logits,
            ct_temporal_filters: 40,
            ct_temporal_kernel: 25,
            ct_pool_kernel: 75,
            ct_pool_stride: 15,
            ct_embed_dim: 40,
            ct_heads: 10,
            ct_attention_layers: 6,
            ct_ff_dim: 160,
            ct_head_hidden: 256,
            ct_conv_dropout: 0.5,
            ct_attn_dropout: 0.3,
            tc_scales: 32,
            tc_min_freq: 0.1,
            tc_max_freq: 15.0,
            tc_sampling_rate: 30.0,
            tc_morlet_bandwidth: 1.0,
            tc_morlet_center: 1.0,
            tc_conv1_kernel: 10,
            tc_conv1_channels: 16,
            tc_conv2_channels: 32,
            tc_pool_stride: 15,
            tc_dense_hidden: 64,
            tc_dropout: 0.3,
            augment_segments: 4,
            learning_rate: train.learning_rate,
            beta1: train.beta1,
            beta2: train.beta2,
            adam_epsilon: train.adam_epsilon,
            batch_size: train.batch_size,
            scheduler: train.scheduler,
            early_stop_patience: train.early_stop_patience,
            max_epochs: train.max_epochs,
            seed: train.seed,
            ablation: Ablation::default(),
            out_checkpoint: PathBuf::from("model.ckpt"),
            out_metrics: PathBuf::from("metrics.csv"),
        }
    }
}

impl RunConfig {
    /// Parse a config file, then apply `key=value` overrides.
    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        // Paths in the file resolve relative to the file's directory.
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.data_root = base.to_path_buf();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("line {}: expected 'key = value'", lineno + 1)))?;
            cfg.set(key.trim(), value.trim(), Some(base))?;
        }
        for entry in overrides {
            let (key, value) = entry
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("override '{entry}': expected key=value")))?;
            cfg.set(key.trim(), value.trim(), None)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<(), ConfigError> {
        let path_of = |v: &str| match base {
            Some(b) if !Path::new(v).is_absolute() => b.join(v),
            _ => PathBuf::from(v),
        };
        match key {
            "data.root" => self.data_root = path_of(value),
            "data.manifest" => self.manifest = path_of(value),
            "data.features" => {
                self.features = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "data.standardize" => self.standardize = parse_bool(key, value)?,
            "data.sampling_rate" => self.tc_sampling_rate = parse_f64(key, value)?,
            "model.fusion_mode" => {
                self.fusion_mode = match value {
                    "logits" => FusionMode::Logits,
                    "probabilities" => FusionMode::Probabilities,
                    other => {
                        return Err(ConfigError(format!(
                            "model.fusion_mode: unknown mode '{other}' (logits|probabilities)"
                        )))
                    }
                }
            }
            "model.loss_lambda" => self.loss_lambda = parse_f64(key, value)?,
            "ct.temporal_filters" => self.ct_temporal_filters = parse_usize(key, value)?,
            "ct.temporal_kernel" => self.ct_temporal_kernel = parse_usize(key, value)?,
            "ct.pool_kernel" => self.ct_pool_kernel = parse_usize(key, value)?,
            "ct.pool_stride" => self.ct_pool_stride = parse_usize(key, value)?,
            "ct.embed_dim" => self.ct_embed_dim = parse_usize(key, value)?,
            "ct.heads" => self.ct_heads = parse_usize(key, value)?,
            "ct.attention_layers" => self.ct_attention_layers = parse_usize(key, value)?,
            "ct.ff_dim" => self.ct_ff_dim = parse_usize(key, value)?,
            "ct.head_hidden" => self.ct_head_hidden = parse_usize(key, value)?,
            "ct.conv_dropout" => self.ct_conv_dropout = parse_f64(key, value)?,
            "ct.attn_dropout" => self.ct_attn_dropout = parse_f64(key, value)?,
            "tc.scales" => self.tc_scales = parse_usize(key, value)?,
            "tc.min_freq" => self.tc_min_freq = parse_f64(key, value)?,
            "tc.max_freq" => self.tc_max_freq = parse_f64(key, value)?,
            "tc.morlet_bandwidth" => self.tc_morlet_bandwidth = parse_f64(key, value)?,
            "tc.morlet_center" => self.tc_morlet_center = parse_f64(key, value)?,
            "tc.conv1_kernel" => self.tc_conv1_kernel = parse_usize(key, value)?,
            "tc.conv1_channels" => self.tc_conv1_channels = parse_usize(key, value)?,
            "tc.conv2_channels" => self.tc_conv2_channels = parse_usize(key, value)?,
            "tc.pool_stride" => self.tc_pool_stride = parse_usize(key, value)?,
            "tc.dense_hidden" => self.tc_dense_hidden = parse_usize(key, value)?,
            "tc.dropout" => self.tc_dropout = parse_f64(key, value)?,
            "augment.segments" => self.augment_segments = parse_usize(key, value)?,
            "train.learning_rate" => self.learning_rate = parse_f64(key, value)?,
            "train.beta1" => self.beta1 = parse_f64(key, value)?,
            "train.beta2" => self.beta2 = parse_f64(key, value)?,
            "train.adam_epsilon" => self.adam_epsilon = parse_f64(key, value)?,
            "train.batch_size" => self.batch_size = parse_usize(key, value)?,
            "train.scheduler" => {
                let mut milestones = Vec::new();
                for part in value.split(',').filter(|s| !s.trim().is_empty()) {
                    let (epoch, mult) = part.trim().split_once(':').ok_or_else(|| {
                        ConfigError(format!(
                            "train.scheduler: milestone '{part}' must be epoch:multiplier"
                        ))
                    })?;
                    milestones.push((parse_usize("train.scheduler", epoch)?, parse_f64("train.scheduler", mult)?));
                }
                self.scheduler = milestones;
            }
            "train.early_stop_patience" => self.early_stop_patience = parse_usize(key, value)?,
            "train.max_epochs" => self.max_epochs = parse_usize(key, value)?,
            "train.seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| ConfigError(format!("train.seed: '{value}' is not an integer")))?
            }
            "train.ablation" => {
                let mut ablation = Ablation::default();
                let known: BTreeSet<&str> =
                    ["ct_only", "tc_only", "no_attention", "no_augmentation", "none"]
                        .into_iter()
                        .collect();
                for flag in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    if !known.contains(flag) {
                        return Err(ConfigError(format!(
                            "train.ablation: unknown flag '{flag}'"
                        )));
                    }
                    match flag {
                        "ct_only" => ablation.ct_only = true,
                        "tc_only" => ablation.tc_only = true,
                        "no_attention" => ablation.no_attention = true,
                        "no_augmentation" => ablation.no_augmentation = true,
                        _ => {}
                    }
                }
                self.ablation = ablation;
            }
            "out.checkpoint" => self.out_checkpoint = path_of(value),
            "out.metrics" => self.out_metrics = path_of(value),
            other => return Err(ConfigError(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Check every field against its module's invariants.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model_config()
            .validate()
            .map_err(|e| ConfigError(e.to_string()))?;
        self.train_config()
            .validate()
            .map_err(|e| map_train_error(e, self))?;
        if self.features.is_empty() {
            return Err(ConfigError("data.features: need at least one feature".into()));
        }
        if tcct_core::SIGNAL_LEN % self.augment_segments != 0 {
            return Err(ConfigError(format!(
                "augment.segments: {} does not divide the signal length {}",
                self.augment_segments,
                tcct_core::SIGNAL_LEN
            )));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut mc = ModelConfig::new(self.features.len());
        mc.fusion_mode = self.fusion_mode;
        mc.loss.lambda = self.loss_lambda;
        mc.ct.temporal_filters = self.ct_temporal_filters;
        mc.ct.temporal_kernel = self.ct_temporal_kernel;
        mc.ct.pool_kernel = self.ct_pool_kernel;
        mc.ct.pool_stride = self.ct_pool_stride;
        mc.ct.embed_dim = self.ct_embed_dim;
        mc.ct.heads = self.ct_heads;
        mc.ct.attention_layers = self.ct_attention_layers;
        mc.ct.ff_dim = self.ct_ff_dim;
        mc.ct.head_hidden = self.ct_head_hidden;
        mc.ct.conv_dropout = self.ct_conv_dropout;
        mc.ct.attn_dropout = self.ct_attn_dropout;
        mc.tc.scales = self.tc_scales;
        mc.tc.min_freq = self.tc_min_freq;
        mc.tc.max_freq = self.tc_max_freq;
        mc.tc.sampling_rate = self.tc_sampling_rate;
        mc.tc.morlet_bandwidth = self.tc_morlet_bandwidth;
        mc.tc.morlet_center = self.tc_morlet_center;
        mc.tc.conv1_kernel = self.tc_conv1_kernel;
        mc.tc.conv1_channels = self.tc_conv1_channels;
        mc.tc.conv2_channels = self.tc_conv2_channels;
        mc.tc.pool_stride = self.tc_pool_stride;
        mc.tc.dense_hidden = self.tc_dense_hidden;
        mc.tc.dropout_rate = self.tc_dropout;
        mc
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_epsilon: self.adam_epsilon,
            batch_size: self.batch_size,
            scheduler: self.scheduler.clone(),
            early_stop_patience: self.early_stop_patience,
            max_epochs: self.max_epochs,
            seed: self.seed,
            sr_segments: self.augment_segments,
            ablation: self.ablation,
        }
    }
}

fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("{key}: '{value}' is not a number")))
}

fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError(format!("{key}: '{value}' is not a non-negative integer")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(ConfigError(format!("{key}: '{value}' is not a boolean"))),
    }
}

/// Attribute hyperparameter failures to the config field that set them.
fn map_train_error(e: tcct_core::Error, cfg: &RunConfig) -> ConfigError {
    let msg = e.to_string();
    let field = if msg.contains("beta1") {
        format!("train.beta1 = {}", cfg.beta1)
    } else if msg.contains("beta2") {
        format!("train.beta2 = {}", cfg.beta2)
    } else if msg.contains("learning_rate") {
        format!("train.learning_rate = {}", cfg.learning_rate)
    } else {
        String::new()
    };
    if field.is_empty() {
        ConfigError(msg)
    } else {
        ConfigError(format!("{msg} ({field})"))
    }
}
