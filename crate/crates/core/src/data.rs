//! Dataset ingestion: per-sample signal CSVs indexed by a manifest, length
//! normalization to [`SIGNAL_LEN`] samples, feature selection, and
//! per-feature standardization.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::scalar::{wide_sum, Scalar};
use crate::SIGNAL_LEN;

/// Engagement levels in index order.
pub const LABEL_NAMES: [&str; 4] = ["Not-Engaged", "Barely-Engaged", "Engaged", "Highly-Engaged"];

/// Samples shorter than this (30% of the target length) are excluded from
/// training; evaluation splits keep them and tile them to full length.
pub const MIN_TRAIN_LEN: usize = 84;

pub fn label_index(name: &str) -> Option<usize> {
    LABEL_NAMES.iter().position(|&n| n == name)
}

pub fn label_name(index: usize) -> &'static str {
    LABEL_NAMES[index]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::data(format!("unknown split '{other}'"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

/// F stacked behavioral feature signals of equal length, row-major.
#[derive(Debug, Clone)]
pub struct SignalMatrix<T: Scalar> {
    data: Vec<T>,
    feature_count: usize,
    len: usize,
    pub feature_names: Vec<String>,
    pub sample_id: String,
}

impl<T: Scalar> SignalMatrix<T> {
    pub fn new(
        data: Vec<T>,
        feature_names: Vec<String>,
        sample_id: impl Into<String>,
    ) -> Result<Self> {
        let feature_count = feature_names.len();
        if feature_count == 0 || data.len() % feature_count != 0 {
            return Err(Error::data(format!(
                "signal matrix with {} values cannot hold {} features",
                data.len(),
                feature_count
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("signal matrix contains non-finite values"));
        }
        let len = data.len() / feature_count;
        Ok(SignalMatrix {
            data,
            feature_count,
            len,
            feature_names,
            sample_id: sample_id.into(),
        })
    }

    pub fn feature_count(&self) -> usize {
        self.feature_count
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn row(&self, feature: usize) -> &[T] {
        &self.data[feature * self.len..(feature + 1) * self.len]
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    /// Standardize each feature row in place with the given statistics.
    pub fn apply_stats(&mut self, stats: &FeatureStats<T>) {
        let len = self.len;
        for f in 0..self.feature_count {
            let (mu, sigma) = (stats.mean[f], stats.std[f]);
            for v in &mut self.data[f * len..(f + 1) * len] {
                *v = (*v - mu) / sigma;
            }
        }
    }

    /// Trim to the first `target` columns, or tile the signal end-to-end
    /// until it reaches `target` columns (excess cut off).
    pub fn normalize_length(&self, target: usize) -> Result<SignalMatrix<T>> {
        if self.len == 0 {
            return Err(Error::data(format!(
                "sample '{}' has zero-length signals",
                self.sample_id
            )));
        }
        if self.len == target {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.feature_count * target);
        for f in 0..self.feature_count {
            let row = self.row(f);
            data.extend((0..target).map(|i| row[i % self.len]));
        }
        SignalMatrix::new(data, self.feature_names.clone(), self.sample_id.clone())
    }
}

#[derive(Debug, Clone)]
pub struct LabeledSample<T: Scalar> {
    pub signals: SignalMatrix<T>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset<T: Scalar> {
    pub samples: Vec<LabeledSample<T>>,
    pub split: Split,
    pub feature_selection: Vec<String>,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_selection.len()
    }
}

/// Per-feature standardization statistics computed on a training split.
#[derive(Debug, Clone)]
pub struct FeatureStats<T: Scalar> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

/// Standardize every feature row to (x - mean)/std. Without supplied stats,
/// statistics are computed from this dataset (the train split) and returned
/// for reuse on validation/test data. Features with a standard deviation
/// under 1e-8 pass through unscaled.
pub fn standardize<T: Scalar>(
    dataset: &Dataset<T>,
    stats: Option<&FeatureStats<T>>,
) -> Result<(Dataset<T>, FeatureStats<T>)> {
    let features = dataset.feature_count();
    if let Some(s) = stats {
        if s.mean.len() != features {
            return Err(Error::shape(
                "standardize stats",
                &[s.mean.len()],
                &[features],
            ));
        }
    }
    let stats = match stats {
        Some(s) => s.clone(),
        None => compute_stats(dataset),
    };
    let mut out = dataset.clone();
    for sample in &mut out.samples {
        sample.signals.apply_stats(&stats);
    }
    Ok((out, stats))
}

fn compute_stats<T: Scalar>(dataset: &Dataset<T>) -> FeatureStats<T> {
    let features = dataset.feature_count();
    let mut mean = vec![T::zero(); features];
    let mut std = vec![T::one(); features];
    let total: usize = dataset.samples.iter().map(|s| s.signals.len()).sum();
    if total == 0 {
        return FeatureStats { mean, std };
    }
    for f in 0..features {
        let mut acc = T::Acc::zero();
        for sample in &dataset.samples {
            acc = acc + wide_sum(sample.signals.row(f));
        }
        let mu = acc / T::acc_from_f64(total as f64);
        let mut vacc = T::Acc::zero();
        for sample in &dataset.samples {
            for &x in sample.signals.row(f) {
                let d = x.acc() - mu;
                vacc = vacc + d * d;
            }
        }
        let sigma = T::from_acc((vacc / T::acc_from_f64(total as f64)).sqrt());
        if sigma.to_f64() >= 1e-8 {
            mean[f] = T::from_acc(mu);
            std[f] = sigma;
        }
        // else: keep (0, 1) so the feature passes through unscaled
    }
    FeatureStats { mean, std }
}

/// Load one split of a dataset.
///
/// The manifest CSV has the exact header `sample_id,path,label,split`; paths
/// are resolved relative to `root`. Samples whose file is missing are skipped
/// with a warning; training samples shorter than [`MIN_TRAIN_LEN`] frames are
/// excluded (evaluation splits tile them instead). Unknown feature or label
/// names reject the whole load.
pub fn load_dataset<T: Scalar>(
    root: &Path,
    manifest: &Path,
    features: &[String],
    split: Split,
) -> Result<Dataset<T>> {
    if features.is_empty() {
        return Err(Error::data("no features requested"));
    }
    let mut reader = csv::Reader::from_path(manifest)
        .map_err(|e| Error::data(format!("cannot open manifest {}: {e}", manifest.display())))?;
    {
        let headers = reader.headers()?;
        let expected = ["sample_id", "path", "label", "split"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::data(format!(
                "manifest header must be 'sample_id,path,label,split', got '{}'",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != 4 {
            return Err(Error::data(format!(
                "manifest row has {} fields, expected 4",
                record.len()
            )));
        }
        let (sample_id, rel_path, label_str, split_str) =
            (&record[0], &record[1], &record[2], &record[3]);
        if Split::from_str(split_str)? != split {
            continue;
        }
        let label = label_index(label_str).ok_or_else(|| {
            Error::data(format!(
                "unknown label '{label_str}' for sample '{sample_id}' (expected one of {:?})",
                LABEL_NAMES
            ))
        })?;
        let path = root.join(rel_path);
        if !path.exists() {
            log::warn!("skipping sample '{sample_id}': file {} not found", path.display());
            continue;
        }
        let raw = read_sample_csv::<T>(&path, features, sample_id)?;
        if split == Split::Train && raw.len() < MIN_TRAIN_LEN {
            log::warn!(
                "excluding training sample '{sample_id}': {} frames < minimum {MIN_TRAIN_LEN}",
                raw.len()
            );
            continue;
        }
        let signals = raw.normalize_length(SIGNAL_LEN)?;
        samples.push(LabeledSample { signals, label });
    }

    Ok(Dataset {
        samples,
        split,
        feature_selection: features.to_vec(),
    })
}

/// Parse one sample CSV (header of feature names, one row per frame) and
/// select the requested feature columns in the requested order.
pub fn read_sample_csv<T: Scalar>(
    path: &Path,
    features: &[String],
    sample_id: &str,
) -> Result<SignalMatrix<T>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::data(format!("cannot open sample {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut column_of = HashMap::new();
    for (i, name) in header.iter().enumerate() {
        column_of.insert(name.as_str(), i);
    }
    let mut columns = Vec::with_capacity(features.len());
    for feature in features {
        match column_of.get(feature.as_str()) {
            Some(&i) => columns.push(i),
            None => {
                return Err(Error::data(format!(
                    "feature '{feature}' not present in {} (available: {})",
                    path.display(),
                    header.join(", ")
                )))
            }
        }
    }

    let mut rows: Vec<Vec<T>> = vec![Vec::new(); features.len()];
    for (frame, record) in reader.records().enumerate() {
        let record = record?;
        for (slot, &col) in rows.iter_mut().zip(&columns) {
            let cell = record.get(col).ok_or_else(|| {
                Error::data(format!(
                    "sample '{sample_id}' frame {frame}: missing value in column {col}"
                ))
            })?;
            let value: f64 = cell.trim().parse().map_err(|_| {
                Error::data(format!(
                    "sample '{sample_id}' frame {frame}: cannot parse '{cell}' as a number"
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::data(format!(
                    "sample '{sample_id}' frame {frame}: non-finite value"
                )));
            }
            slot.push(T::from_f64(value));
        }
    }

    let len = rows[0].len();
    if len == 0 {
        return Err(Error::data(format!("sample '{sample_id}' has no frames")));
    }
    let mut data = Vec::with_capacity(features.len() * len);
    for row in rows {
        data.extend(row);
    }
    SignalMatrix::new(data, features.to_vec(), sample_id)
}
