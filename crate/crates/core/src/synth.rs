//! Synthetic labeled datasets: four classes distinguished by the dominant
//! frequency of a shared two-channel carrier, with optional amplitude
//! jitter, random phase, a random active window, a weaker distractor tone at
//! another class's frequency, and additive Gaussian noise.
//!
//! Used by the demo/benchmark tooling and the verification suites.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{label_name, Dataset, LabeledSample, SignalMatrix, Split};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::{NUM_CLASSES, SIGNAL_LEN};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub features: usize,
    pub len: usize,
    pub sampling_rate: f64,
    /// Dominant carrier frequency per class, Hz.
    pub class_freqs: [f64; NUM_CLASSES],
    /// Uniform per-sample amplitude jitter range.
    pub carrier_amp: (f64, f64),
    pub noise_std: f64,
    /// When set, the carrier is active only inside a random window of this
    /// length (shared across channels); otherwise it spans the signal.
    pub window_len: Option<usize>,
    /// Amplitude of a weaker tone at another class's frequency in its own
    /// random window; 0 disables it.
    pub distractor_amp: f64,
    pub random_phase: bool,
}

impl SynthConfig {
    /// Hard fixture: short carrier bursts at random positions, cross-class
    /// distractor bursts, noise.
    pub fn separable() -> Self {
        SynthConfig {
            features: 2,
            len: SIGNAL_LEN,
            sampling_rate: 30.0,
            class_freqs: [0.5, 1.25, 3.0, 7.0],
            carrier_amp: (1.0, 1.4),
            noise_std: 0.5,
            window_len: Some(50),
            distractor_amp: 0.6,
            random_phase: true,
        }
    }

    /// Easy fixture: clean full-length carriers, light noise.
    pub fn overfit() -> Self {
        SynthConfig {
            features: 2,
            len: SIGNAL_LEN,
            sampling_rate: 30.0,
            class_freqs: [0.5, 1.25, 3.0, 7.0],
            carrier_amp: (1.0, 1.0),
            noise_std: 0.05,
            window_len: None,
            distractor_amp: 0.0,
            random_phase: true,
        }
    }

    pub fn feature_names(&self) -> Vec<String> {
        let base = ["pose_Rx", "pose_Ry", "gaze_0_x", "gaze_0_y"];
        (0..self.features)
            .map(|i| {
                base.get(i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("feature_{i}"))
            })
            .collect()
    }
}

/// Generate `per_class` samples for each of the four classes, class-major
/// then index-major order.
pub fn generate<T: Scalar>(
    cfg: &SynthConfig,
    per_class: usize,
    seed: u64,
    split: Split,
) -> Result<Dataset<T>> {
    if per_class == 0 {
        return Err(Error::invalid("synth: per_class must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.noise_std.max(1e-12))
        .map_err(|e| Error::invalid(format!("synth: bad noise std: {e}")))?;
    let names = cfg.feature_names();
    let tau = 2.0 * std::f64::consts::PI;

    let mut samples = Vec::with_capacity(per_class * NUM_CLASSES);
    for class in 0..NUM_CLASSES {
        for index in 0..per_class {
            let amp = rng.gen_range(cfg.carrier_amp.0..=cfg.carrier_amp.1);
            let carrier_freq = cfg.class_freqs[class];
            let window = match cfg.window_len {
                Some(w) if w < cfg.len => {
                    let start = rng.gen_range(0..=cfg.len - w);
                    (start, start + w)
                }
                _ => (0, cfg.len),
            };
            let distractor = if cfg.distractor_amp > 0.0 {
                let other = (class + rng.gen_range(1..NUM_CLASSES)) % NUM_CLASSES;
                let freq = cfg.class_freqs[other];
                let w = cfg.window_len.unwrap_or(cfg.len).min(cfg.len);
                let start = if w < cfg.len {
                    rng.gen_range(0..=cfg.len - w)
                } else {
                    0
                };
                Some((freq, (start, start + w)))
            } else {
                None
            };

            let mut data = Vec::with_capacity(cfg.features * cfg.len);
            for _feature in 0..cfg.features {
                let phase = if cfg.random_phase {
                    rng.gen_range(0.0..tau)
                } else {
                    0.0
                };
                let distractor_phase = if cfg.random_phase {
                    rng.gen_range(0.0..tau)
                } else {
                    0.0
                };
                for t in 0..cfg.len {
                    let time = t as f64 / cfg.sampling_rate;
                    let mut v = noise.sample(&mut rng);
                    if t >= window.0 && t < window.1 {
                        v += amp * (tau * carrier_freq * time + phase).sin();
                    }
                    if let Some((freq, (lo, hi))) = distractor {
                        if t >= lo && t < hi {
                            v += cfg.distractor_amp * (tau * freq * time + distractor_phase).sin();
                        }
                    }
                    data.push(T::from_f64(v));
                }
            }
            let id = format!("{}-{}-{:03}", split, label_name(class), index);
            samples.push(LabeledSample {
                signals: SignalMatrix::new(data, names.clone(), id)?,
                label: class,
            });
        }
    }
    Ok(Dataset {
        samples,
        split,
        feature_selection: names,
    })
}

/// Write datasets as the on-disk layout the loader understands: one
/// `manifest.csv` plus a `samples/` directory of per-sample CSVs.
pub fn write_dataset_csv<T: Scalar>(root: &Path, datasets: &[&Dataset<T>]) -> Result<()> {
    let samples_dir = root.join("samples");
    fs::create_dir_all(&samples_dir)?;
    let mut manifest = String::from("sample_id,path,label,split\n");
    for dataset in datasets {
        for sample in &dataset.samples {
            let id = &sample.signals.sample_id;
            let rel = format!("samples/{id}.csv");
            manifest.push_str(&format!(
                "{id},{rel},{},{}\n",
                label_name(sample.label),
                dataset.split
            ));
            let mut file = String::new();
            file.push_str(&sample.signals.feature_names.join(","));
            file.push('\n');
            for t in 0..sample.signals.len() {
                for f in 0..sample.signals.feature_count() {
                    if f > 0 {
                        file.push(',');
                    }
                    file.push_str(&format!("{}", sample.signals.row(f)[t].to_f64()));
                }
                file.push('\n');
            }
            fs::write(root.join(&rel), file)?;
        }
    }
    fs::write(root.join("manifest.csv"), manifest)?;
    Ok(())
}
