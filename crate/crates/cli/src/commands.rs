//! Command implementations. Exit-code policy: 0 ok, 2 config error, 3 data
//! error, 4 shape/feature mismatch.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use tcct_core::checkpoint;
use tcct_core::data::{
    label_name, load_dataset, read_sample_csv, standardize, Dataset, Split,
};
use tcct_core::model::{predict, ModelState, Phase};
use tcct_core::optim::AdamHyper;
use tcct_core::synth::{generate, write_dataset_csv, SynthConfig};
use tcct_core::train::{evaluate, train, EpochRunner, ScalogramCache, TrainOutputs};
use tcct_core::wavelet::{scalogram, MorletParams, ScaleGrid};
use tcct_core::{Error as CoreError, F, NUM_CLASSES, SIGNAL_LEN};

use crate::config::RunConfig;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_SHAPE: u8 = 4;

pub struct CmdError {
    pub code: u8,
    pub message: String,
}

impl CmdError {
    pub fn config(message: impl Into<String>) -> Self {
        CmdError {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CmdError {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<CoreError> for CmdError {
    fn from(e: CoreError) -> Self {
        let code = match &e {
            CoreError::ShapeMismatch { .. } | CoreError::Checkpoint(_) => EXIT_SHAPE,
            CoreError::InvalidArgument(_) => EXIT_CONFIG,
            CoreError::Data(_) | CoreError::Io(_) | CoreError::Csv(_) => EXIT_DATA,
        };
        CmdError {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::data(e.to_string())
    }
}

pub type CmdResult = Result<(), CmdError>;

fn load_split(cfg: &RunConfig, split: Split) -> Result<Dataset<F>, CmdError> {
    if !cfg.manifest.exists() {
        return Err(CmdError::data(format!(
            "manifest {} does not exist",
            cfg.manifest.display()
        )));
    }
    Ok(load_dataset::<F>(
        &cfg.data_root,
        &cfg.manifest,
        &cfg.features,
        split,
    )?)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub fn cmd_train(cfg: &RunConfig) -> CmdResult {
    let train_raw = load_split(cfg, Split::Train)?;
    let val_raw = load_split(cfg, Split::Val)?;
    if train_raw.is_empty() {
        return Err(CmdError::data("train split is empty"));
    }
    if val_raw.is_empty() {
        return Err(CmdError::data("val split is empty"));
    }

    let mut model = ModelState::<F>::init(cfg.model_config(), cfg.seed)?;
    let (train_set, val_set) = if cfg.standardize {
        let (train_set, stats) = standardize(&train_raw, None)?;
        let (val_set, _) = standardize(&val_raw, Some(&stats))?;
        model.input_stats = Some(stats);
        (train_set, val_set)
    } else {
        (train_raw, val_raw)
    };

    let outputs = TrainOutputs {
        checkpoint: Some(&cfg.out_checkpoint),
        metrics_csv: Some(&cfg.out_metrics),
    };
    let (mut best, report) = train(&train_set, &val_set, model, &cfg.train_config(), &outputs)?;
    // The per-improvement checkpoints already wrote the best state, but a
    // run whose first epoch never improves (impossible: the first epoch
    // always "improves" on -inf) would leave no file, so write once more.
    checkpoint::save(&mut best, &cfg.out_checkpoint)?;
    println!(
        "trained {} epoch(s); best validation accuracy {:.2}% at epoch {}",
        report.epochs.len(),
        100.0 * report.best_val_accuracy,
        report.best_epoch
    );
    println!("checkpoint: {}", cfg.out_checkpoint.display());
    println!("metrics:    {}", cfg.out_metrics.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn cmd_eval(cfg: &RunConfig, checkpoint_path: &Path, split: Split) -> CmdResult {
    let raw = load_split(cfg, split)?;
    if raw.is_empty() {
        return Err(CmdError::data(format!("{split} split is empty")));
    }
    let model = ModelState::<F>::init(cfg.model_config(), 0)?;
    let model = checkpoint::load(model, checkpoint_path)?;
    let dataset = match &model.input_stats {
        Some(stats) => standardize(&raw, Some(stats))?.0,
        None => raw,
    };
    let report = evaluate(&dataset, &model, &cfg.ablation)?;
    println!("accuracy: {:.2}%", 100.0 * report.accuracy);
    println!("confusion matrix (rows: truth, columns: prediction):");
    print!("{:>16}", "");
    for c in 0..NUM_CLASSES {
        print!("{:>16}", label_name(c));
    }
    println!();
    for (t, row) in report.confusion.iter().enumerate() {
        print!("{:>16}", label_name(t));
        for count in row {
            print!("{count:>16}");
        }
        println!();
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

pub fn cmd_infer(cfg: &RunConfig, checkpoint_path: &Path, sample: &Path) -> CmdResult {
    let model = ModelState::<F>::init(cfg.model_config(), 0)?;
    let model = checkpoint::load(model, checkpoint_path)?;
    let raw = read_sample_csv::<F>(sample, &cfg.features, &sample.display().to_string())?;
    let mut signals = raw.normalize_length(SIGNAL_LEN)?;
    if let Some(stats) = &model.input_stats {
        signals.apply_stats(stats);
    }
    let out = model.forward_signals(&[signals], &cfg.ablation)?;
    let probs = out.fused.probs;
    let class = predict(&probs)[0];
    println!("prediction: {} (class {class})", label_name(class));
    for c in 0..NUM_CLASSES {
        println!("  p({}) = {:.4}", label_name(c), probs.values()[c]);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub struct BenchArgs {
    pub warmup: usize,
    pub iters: usize,
    pub split: Split,
    pub out_csv: Option<PathBuf>,
}

/// Latency benchmark: per-sample inference (wavelet transform timed
/// separately from the network forward), whole-split batched inference, and
/// one training epoch. Dataset parsing is excluded from every timing.
pub fn cmd_bench(cfg: &RunConfig, checkpoint_path: &Path, args: &BenchArgs) -> CmdResult {
    if args.iters == 0 {
        return Err(CmdError::config("bench: iters must be >= 1"));
    }
    let raw = load_split(cfg, args.split)?;
    if raw.is_empty() {
        return Err(CmdError::data(format!("{} split is empty", args.split)));
    }
    let model = ModelState::<F>::init(cfg.model_config(), 0)?;
    let model = checkpoint::load(model, checkpoint_path)?;
    let dataset = match &model.input_stats {
        Some(stats) => standardize(&raw, Some(stats))?.0,
        None => raw,
    };
    let ablation = cfg.ablation;

    // Per-sample latency, cycling through the split.
    let mut transform_ms = Vec::with_capacity(args.iters);
    let mut forward_ms = Vec::with_capacity(args.iters);
    let mut total_ms = Vec::with_capacity(args.iters);
    for i in 0..args.warmup + args.iters {
        let sample = &dataset.samples[i % dataset.len()];
        let one = [sample.signals.clone()];
        let t0 = Instant::now();
        let tc_in = if ablation.runs_tc() {
            Some(model.transform(&one)?)
        } else {
            None
        };
        let t1 = Instant::now();
        let ct_in = if ablation.runs_ct() {
            Some(model.ct_input(&one)?)
        } else {
            None
        };
        let out = model.forward(ct_in.as_ref(), tc_in.as_ref(), &ablation, &mut Phase::Eval)?;
        let _ = predict(&out.fused.probs);
        let t2 = Instant::now();
        if i >= args.warmup {
            transform_ms.push((t1 - t0).as_secs_f64() * 1000.0);
            forward_ms.push((t2 - t1).as_secs_f64() * 1000.0);
            total_ms.push((t2 - t0).as_secs_f64() * 1000.0);
        }
    }

    // Whole-split batched inference.
    let split_start = Instant::now();
    evaluate(&dataset, &model, &ablation)?;
    let split_wall_s = split_start.elapsed().as_secs_f64();

    // One training epoch over the split (S&R included unless ablated).
    let train_cfg = cfg.train_config();
    let cache = if ablation.runs_tc() {
        Some(ScalogramCache::build(&dataset, model.cwt_plan())?)
    } else {
        None
    };
    let mut train_model = model.clone();
    let mut runner = EpochRunner::new(&dataset, &train_cfg, cache.as_ref());
    let hyper = AdamHyper {
        learning_rate: train_cfg.learning_rate,
        beta1: train_cfg.beta1,
        beta2: train_cfg.beta2,
        epsilon: train_cfg.adam_epsilon,
    };
    let epoch_start = Instant::now();
    runner.run(&mut train_model, &hyper)?;
    let train_epoch_s = epoch_start.elapsed().as_secs_f64();

    let stats = |xs: &[f64]| -> (f64, f64, f64) {
        let mut sorted = xs.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
        let p50 = sorted[(sorted.len() - 1) * 50 / 100];
        let p95 = sorted[(sorted.len() - 1) * 95 / 100];
        (mean, p50, p95)
    };
    let (transform_mean, _, _) = stats(&transform_ms);
    let (forward_mean, _, _) = stats(&forward_ms);
    let (total_mean, total_p50, total_p95) = stats(&total_ms);

    println!("warmup iterations:      {}", args.warmup);
    println!("measured iterations:    {}", args.iters);
    println!("transform mean:         {transform_mean:.3} ms");
    println!("forward+fusion mean:    {forward_mean:.3} ms");
    println!("per-sample total mean:  {total_mean:.3} ms");
    println!("per-sample total p50:   {total_p50:.3} ms");
    println!("per-sample total p95:   {total_p95:.3} ms");
    println!("whole-split inference:  {split_wall_s:.3} s ({} samples)", dataset.len());
    println!("training epoch:         {train_epoch_s:.3} s");

    if let Some(path) = &args.out_csv {
        let mut w = std::fs::File::create(path)?;
        writeln!(
            w,
            "warmup,iters,transform_ms_mean,forward_ms_mean,total_ms_mean,total_ms_p50,total_ms_p95,split_wall_s,train_epoch_s"
        )?;
        writeln!(
            w,
            "{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            args.warmup,
            args.iters,
            transform_mean,
            forward_mean,
            total_mean,
            total_p50,
            total_p95,
            split_wall_s,
            train_epoch_s
        )?;
        println!("report: {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// scalogram
// ---------------------------------------------------------------------------

pub struct ScalogramArgs {
    pub sample: PathBuf,
    pub features: Vec<String>,
    pub out: PathBuf,
    pub scales: usize,
    pub min_freq: f64,
    pub max_freq: f64,
    pub sampling_rate: f64,
}

/// Export per-feature wavelet coefficient magnitudes: one row per
/// (feature, scale) with a scale-value column, one column per time step.
pub fn cmd_scalogram(args: &ScalogramArgs) -> CmdResult {
    let raw = read_sample_csv::<F>(
        &args.sample,
        &args.features,
        &args.sample.display().to_string(),
    )
    .map_err(|e| match e {
        // Unknown feature names exit with the shape/feature code.
        CoreError::Data(msg) if msg.contains("not present") => CmdError {
            code: EXIT_SHAPE,
            message: msg,
        },
        other => CmdError::from(other),
    })?;
    let signals = raw.normalize_length(SIGNAL_LEN)?;
    let grid = ScaleGrid::<F>::geometric(args.scales, args.min_freq, args.max_freq, args.sampling_rate, 1.0)?;
    let sg = scalogram(&signals, &grid, &MorletParams::default())?;

    let mut out = String::new();
    out.push_str("feature,scale");
    for t in 0..SIGNAL_LEN {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for (f, name) in args.features.iter().enumerate() {
        for (k, &scale) in grid.scales().iter().enumerate() {
            out.push_str(name);
            out.push_str(&format!(",{scale}"));
            for &v in sg.row(f, k) {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    std::fs::write(&args.out, out)?;
    println!(
        "wrote {} rows x {} columns to {}",
        args.features.len() * args.scales,
        SIGNAL_LEN + 2,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub struct SynthArgs {
    pub out: PathBuf,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
    pub preset: String,
}

/// Generate a synthetic dataset plus a ready-to-run config file.
pub fn cmd_synth(args: &SynthArgs) -> CmdResult {
    let cfg = match args.preset.as_str() {
        "separable" => SynthConfig::separable(),
        "overfit" => SynthConfig::overfit(),
        other => {
            return Err(CmdError::config(format!(
                "unknown preset '{other}' (separable|overfit)"
            )))
        }
    };
    let train_set = generate::<F>(&cfg, args.train_per_class, args.seed, Split::Train)?;
    let val_set = generate::<F>(&cfg, args.val_per_class, args.seed ^ 0x9e3779b97f4a7c15, Split::Val)?;
    std::fs::create_dir_all(&args.out)?;
    write_dataset_csv(&args.out, &[&train_set, &val_set])?;
    let run_cfg = format!(
        "# generated by `tcct synth --preset {}`\n\
         data.manifest = manifest.csv\n\
         data.features = {}\n\
         train.seed = {}\n\
         out.checkpoint = model.ckpt\n\
         out.metrics = metrics.csv\n",
        args.preset,
        cfg.feature_names().join(","),
        args.seed,
    );
    std::fs::write(args.out.join("run.cfg"), run_cfg)?;
    println!(
        "wrote {} train / {} val samples under {}",
        train_set.len(),
        val_set.len(),
        args.out.display()
    );
    println!("config: {}", args.out.join("run.cfg").display());
    Ok(())
}
