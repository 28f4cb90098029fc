//! Training loop: Adam over S&R-augmented 2N batches, milestone learning
//! rate schedule, early stopping on validation accuracy, metrics CSV, and
//! best-checkpoint tracking. Ablation switches select which stream(s) run
//! and whether augmentation is applied.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augment::sr_augment_with_rng;
use crate::data::{Dataset, LabeledSample};
use crate::error::{Error, Result};
use crate::model::{combined_loss, predict, Ablation, ModelState, Phase};
use crate::optim::{scheduled_lr, AdamHyper};
use crate::scalar::Scalar;
use crate::tensor::{backward, Tensor};
use crate::wavelet::{scalogram_with_plan, CwtPlan};
use crate::NUM_CLASSES;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    /// `(epoch, multiplier)` milestones applied cumulatively.
    pub scheduler: Vec<(usize, f64)>,
    /// Epochs without validation improvement before stopping.
    pub early_stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// S&R segment count.
    pub sr_segments: usize,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0005,
            beta1: 0.6,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            batch_size: 72,
            scheduler: vec![(50, 0.5), (100, 0.5)],
            early_stop_patience: 20,
            max_epochs: 200,
            seed: 0,
            sr_segments: 4,
            ablation: Ablation::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper().validate()?;
        if self.batch_size == 0 {
            return Err(Error::invalid("train: batch_size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("train: max_epochs must be >= 1"));
        }
        if self.early_stop_patience == 0 {
            return Err(Error::invalid("train: early_stop_patience must be >= 1"));
        }
        if self.sr_segments == 0 {
            return Err(Error::invalid("train: sr_segments must be >= 1"));
        }
        self.ablation.validate()
    }

    fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub stopped_early: bool,
}

/// Optional artifacts written during training.
#[derive(Default)]
pub struct TrainOutputs<'a> {
    /// Best-validation checkpoint, rewritten on every improvement.
    pub checkpoint: Option<&'a Path>,
    /// Per-epoch metrics CSV (header: epoch,train_loss,train_acc,val_acc,lr,seconds).
    pub metrics_csv: Option<&'a Path>,
}

/// Patience-based early stopping on validation accuracy (strict improvement).
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    since_improvement: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
            since_improvement: 0,
        }
    }

    /// Record one epoch's metric; returns true when it improved on the best.
    pub fn observe(&mut self, epoch: usize, metric: f64) -> bool {
        if metric > self.best {
            self.best = metric;
            self.best_epoch = epoch;
            self.since_improvement = 0;
            true
        } else {
            self.since_improvement += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_improvement >= self.patience
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// Precomputed per-sample scalograms for a dataset (the CWT front-end is
/// fixed, so these never change during training).
pub struct ScalogramCache<T: Scalar> {
    rows: Vec<Vec<T>>,
    features: usize,
    scales: usize,
    time_len: usize,
}

impl<T: Scalar> ScalogramCache<T> {
    pub fn build(dataset: &Dataset<T>, plan: &CwtPlan<T>) -> Result<Self> {
        let rows: Result<Vec<Vec<T>>> = dataset
            .samples
            .par_iter()
            .map(|s| Ok(scalogram_with_plan(&s.signals, plan)?.into_values()))
            .collect();
        let rows = rows?;
        let features = dataset.feature_count();
        let scales = plan.grid().len();
        let time_len = dataset
            .samples
            .first()
            .map(|s| s.signals.len())
            .unwrap_or(0);
        Ok(ScalogramCache {
            rows,
            features,
            scales,
            time_len,
        })
    }

    /// Assemble the `(N, F, S, T)` tensor for a batch of sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<T>> {
        let per = self.features * self.scales * self.time_len;
        let mut values = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            values.extend_from_slice(&self.rows[i]);
        }
        Tensor::constant(
            &[indices.len(), self.features, self.scales, self.time_len],
            values,
        )
    }
}

pub struct EvalReport {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

/// Eval-mode accuracy and confusion matrix over a dataset.
pub fn evaluate<T: Scalar>(
    dataset: &Dataset<T>,
    model: &ModelState<T>,
    ablation: &Ablation,
) -> Result<EvalReport> {
    let cache = if ablation.runs_tc() {
        Some(ScalogramCache::build(dataset, model.cwt_plan())?)
    } else {
        None
    };
    evaluate_cached(dataset, model, ablation, cache.as_ref())
}

/// [`evaluate`] against a prebuilt scalogram cache.
pub fn evaluate_cached<T: Scalar>(
    dataset: &Dataset<T>,
    model: &ModelState<T>,
    ablation: &Ablation,
    cache: Option<&ScalogramCache<T>>,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::invalid("evaluate: empty dataset"));
    }
    let mut correct = 0usize;
    let mut confusion = [[0usize; NUM_CLASSES]; NUM_CLASSES];
    let chunk = 72;
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for batch_idx in indices.chunks(chunk) {
        let signals: Vec<_> = batch_idx
            .iter()
            .map(|&i| dataset.samples[i].signals.clone())
            .collect();
        let ct_in = if ablation.runs_ct() {
            Some(model.ct_input(&signals)?)
        } else {
            None
        };
        let tc_in = if ablation.runs_tc() {
            Some(match cache {
                Some(c) => c.batch(batch_idx)?,
                None => model.transform(&signals)?,
            })
        } else {
            None
        };
        let out = model.forward(ct_in.as_ref(), tc_in.as_ref(), ablation, &mut Phase::Eval)?;
        let preds = predict(&out.fused.probs);
        for (&i, pred) in batch_idx.iter().zip(preds) {
            let truth = dataset.samples[i].label;
            confusion[truth][pred] += 1;
            if truth == pred {
                correct += 1;
            }
        }
    }
    Ok(EvalReport {
        accuracy: correct as f64 / dataset.len() as f64,
        correct,
        total: dataset.len(),
        confusion,
    })
}

/// One epoch's worth of training iterations with persistent RNG streams,
/// shared by [`train`] and the benchmarking harness.
pub struct EpochRunner<'a, T: Scalar> {
    train_set: &'a Dataset<T>,
    cfg: &'a TrainConfig,
    cache: Option<&'a ScalogramCache<T>>,
    indices: Vec<usize>,
    shuffle_rng: ChaCha8Rng,
    sr_rng: ChaCha8Rng,
    dropout_rng: ChaCha8Rng,
}

impl<'a, T: Scalar> EpochRunner<'a, T> {
    pub fn new(
        train_set: &'a Dataset<T>,
        cfg: &'a TrainConfig,
        cache: Option<&'a ScalogramCache<T>>,
    ) -> Self {
        EpochRunner {
            train_set,
            cfg,
            cache,
            indices: (0..train_set.len()).collect(),
            shuffle_rng: stream_rng(cfg.seed, 1),
            sr_rng: stream_rng(cfg.seed, 2),
            dropout_rng: stream_rng(cfg.seed, 3),
        }
    }

    /// Run one epoch: shuffled batches, S&R augmentation (2N batches unless
    /// disabled), forward, combined loss, backward, Adam. Returns the mean
    /// iteration loss and the training accuracy over the original samples.
    pub fn run(&mut self, model: &mut ModelState<T>, hyper: &AdamHyper) -> Result<(f64, f64)> {
        let ablation = self.cfg.ablation;
        self.indices.shuffle(&mut self.shuffle_rng);

        let mut loss_sum = 0.0f64;
        let mut iterations = 0usize;
        let mut train_correct = 0usize;
        let mut train_seen = 0usize;

        for chunk in self.indices.chunks(self.cfg.batch_size) {
            let originals: Vec<LabeledSample<T>> = chunk
                .iter()
                .map(|&i| self.train_set.samples[i].clone())
                .collect();
            let mut batch = originals.clone();
            if !ablation.no_augmentation {
                let synthetic =
                    sr_augment_with_rng(&originals, self.cfg.sr_segments, &mut self.sr_rng)?;
                batch.extend(synthetic);
            }
            let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
            let signals: Vec<_> = batch.iter().map(|s| s.signals.clone()).collect();

            let ct_in = if ablation.runs_ct() {
                Some(model.ct_input(&signals)?)
            } else {
                None
            };
            let tc_in = if ablation.runs_tc() {
                // Originals come from the cache when one is available;
                // augmented samples are new signals and always need a fresh
                // transform.
                let origin = match self.cache {
                    Some(cache) => cache.batch(chunk)?,
                    None => model.transform(&signals[..chunk.len()])?,
                };
                if batch.len() > chunk.len() {
                    let fresh = model.transform(&signals[chunk.len()..])?;
                    let mut values = origin.values().to_vec();
                    values.extend_from_slice(fresh.values());
                    let mut shape = origin.shape().to_vec();
                    shape[0] = batch.len();
                    Some(Tensor::constant(&shape, values)?)
                } else {
                    Some(origin)
                }
            } else {
                None
            };

            let out = model.forward(
                ct_in.as_ref(),
                tc_in.as_ref(),
                &ablation,
                &mut Phase::Train {
                    rng: &mut self.dropout_rng,
                },
            )?;

            let params_snapshot = model.active_params(&ablation);
            let param_refs: Vec<&Tensor<T>> = params_snapshot.iter().map(|(_, t)| t).collect();
            let loss = combined_loss(&out.fused, &labels, &param_refs, &model.config.loss)?;
            let grads = backward(&loss)?;
            model.absorb_bn_updates(&out.bn_updates);
            model.optimize(&grads, hyper, &ablation)?;

            loss_sum += loss.item().to_f64();
            iterations += 1;
            // Training accuracy over the original (non-synthetic) half.
            let preds = predict(&out.fused.probs);
            for (i, &idx) in chunk.iter().enumerate() {
                if preds[i] == self.train_set.samples[idx].label {
                    train_correct += 1;
                }
            }
            train_seen += chunk.len();
        }

        Ok((
            loss_sum / iterations.max(1) as f64,
            train_correct as f64 / train_seen.max(1) as f64,
        ))
    }
}

/// Train on `train_set`, validating each epoch on `val_set`; returns the
/// best-validation model and the per-epoch report.
pub fn train<T: Scalar>(
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    model: ModelState<T>,
    cfg: &TrainConfig,
    outputs: &TrainOutputs,
) -> Result<(ModelState<T>, TrainReport)> {
    train_cached(train_set, val_set, model, cfg, outputs, None, None)
}

/// [`train`] with optional prebuilt scalogram caches (reusable across runs
/// on the same datasets).
pub fn train_cached<T: Scalar>(
    train_set: &Dataset<T>,
    val_set: &Dataset<T>,
    mut model: ModelState<T>,
    cfg: &TrainConfig,
    outputs: &TrainOutputs,
    train_cache: Option<&ScalogramCache<T>>,
    val_cache: Option<&ScalogramCache<T>>,
) -> Result<(ModelState<T>, TrainReport)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::invalid("train: datasets must be nonempty"));
    }
    if train_set.feature_count() != model.config.features {
        return Err(Error::shape(
            "train features",
            &[train_set.feature_count()],
            &[model.config.features],
        ));
    }
    for class in 0..NUM_CLASSES {
        if !train_set.samples.iter().any(|s| s.label == class) {
            log::warn!(
                "train split has no '{}' samples; S&R cannot draw donors for that class",
                crate::data::label_name(class)
            );
        }
    }
    let ablation = cfg.ablation;

    let built_train_cache = match (train_cache, ablation.runs_tc()) {
        (None, true) => Some(ScalogramCache::build(train_set, model.cwt_plan())?),
        _ => None,
    };
    let train_cache = train_cache.or(built_train_cache.as_ref());
    let built_val_cache = match (val_cache, ablation.runs_tc()) {
        (None, true) => Some(ScalogramCache::build(val_set, model.cwt_plan())?),
        _ => None,
    };
    let val_cache = val_cache.or(built_val_cache.as_ref());

    let mut metrics_file = match outputs.metrics_csv {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(w, "epoch,train_loss,train_acc,val_acc,lr,seconds")?;
            Some(w)
        }
        None => None,
    };

    let mut stopper = EarlyStopping::new(cfg.early_stop_patience);
    let mut best: Option<ModelState<T>> = None;
    let mut report = TrainReport::default();
    let mut runner = EpochRunner::new(train_set, cfg, train_cache);

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let lr = scheduled_lr(cfg.learning_rate, &cfg.scheduler, epoch);
        let hyper = AdamHyper {
            learning_rate: lr,
            ..cfg.hyper()
        };
        let (train_loss, train_acc) = runner.run(&mut model, &hyper)?;

        let val = evaluate_cached(val_set, &model, &ablation, val_cache)?;
        let seconds = started.elapsed().as_secs_f64();
        let metrics = EpochMetrics {
            epoch,
            train_loss,
            train_acc,
            val_acc: val.accuracy,
            lr,
            seconds,
        };
        if let Some(w) = metrics_file.as_mut() {
            writeln!(
                w,
                "{},{:.6},{:.6},{:.6},{:e},{:.3}",
                metrics.epoch,
                metrics.train_loss,
                metrics.train_acc,
                metrics.val_acc,
                metrics.lr,
                metrics.seconds
            )?;
            w.flush()?;
        }
        log::info!(
            "epoch {epoch}: loss {:.4} train_acc {:.3} val_acc {:.3} ({:.2}s)",
            metrics.train_loss,
            metrics.train_acc,
            metrics.val_acc,
            seconds
        );
        report.epochs.push(metrics);

        if stopper.observe(epoch, val.accuracy) {
            let snapshot = model.clone();
            if let Some(path) = outputs.checkpoint {
                let mut to_save = snapshot.clone();
                crate::checkpoint::save(&mut to_save, path)?;
            }
            best = Some(snapshot);
        }
        if stopper.should_stop() {
            report.stopped_early = true;
            break;
        }
    }

    let (best_epoch, best_acc) = stopper.best();
    report.best_epoch = best_epoch;
    report.best_val_accuracy = best_acc;
    Ok((best.unwrap_or(model), report))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn early_stopping_plateau_at_epoch_five_halts_by_eight() {
        // Scripted validation curve: improves until epoch 5, then flat.
        let curve = [0.2, 0.4, 0.5, 0.6, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7];
        let mut stopper = EarlyStopping::new(3);
        let mut stopped_at = None;
        for (i, &acc) in curve.iter().enumerate() {
            let epoch = i + 1;
            stopper.observe(epoch, acc);
            if stopper.should_stop() {
                stopped_at = Some(epoch);
                break;
            }
        }
        assert_eq!(stopped_at, Some(8));
        assert_eq!(stopper.best(), (5, 0.7));
    }

    #[test]
    fn early_stopping_never_returns_sub_best_checkpoint() {
        let curve = [0.3, 0.9, 0.5, 0.4, 0.6];
        let mut stopper = EarlyStopping::new(10);
        for (i, &acc) in curve.iter().enumerate() {
            stopper.observe(i + 1, acc);
        }
        assert_eq!(stopper.best(), (2, 0.9));
    }
}
