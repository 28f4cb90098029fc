//! Binary checkpoint format: a version header followed by named tensors
//! (learnable parameters, batch-norm running statistics, and input
//! standardization statistics) with shapes and raw little-endian values.

use std::collections::HashMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::FeatureStats;
use crate::error::{Error, Result};
use crate::model::ModelState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"TCCT";
const VERSION: u32 = 1;

/// Serialize every named parameter and buffer of `model` to `path`.
pub fn save<T: Scalar>(model: &mut ModelState<T>, path: &Path) -> Result<()> {
    let mut entries: Vec<(String, Vec<usize>, Vec<T>)> = Vec::new();
    for (name, tensor) in model.named_params_mut() {
        entries.push((name, tensor.shape().to_vec(), tensor.values().to_vec()));
    }
    for (name, values) in model.named_buffers() {
        let len = values.len();
        entries.push((name, vec![len], values));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::BYTE_WIDTH as u8);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, shape, values) in entries {
        let name_bytes = name.as_bytes();
        out.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(shape.len() as u8);
        for dim in &shape {
            out.extend_from_slice(&(*dim as u32).to_le_bytes());
        }
        for v in values {
            v.write_le(&mut out);
        }
    }

    let tmp = path.with_extension("tmp");
    fs::File::create(&tmp)?.write_all(&out)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Parse a checkpoint into name -> (shape, values).
pub fn read_entries<T: Scalar>(path: &Path) -> Result<HashMap<String, (Vec<usize>, Vec<T>)>> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(|e| Error::Checkpoint(format!("cannot open {}: {e}", path.display())))?
        .read_to_end(&mut bytes)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        if *cursor + n > bytes.len() {
            return Err(Error::Checkpoint("truncated checkpoint".into()));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };

    if take(&mut cursor, 4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic (not a checkpoint file)".into()));
    }
    let version = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {VERSION})"
        )));
    }
    let width = take(&mut cursor, 1)?[0] as usize;
    if width != T::BYTE_WIDTH {
        return Err(Error::Checkpoint(format!(
            "scalar width {width} does not match this build ({})",
            T::BYTE_WIDTH
        )));
    }
    let count = u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize;

    let mut entries = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = u16::from_le_bytes(take(&mut cursor, 2)?.try_into().unwrap()) as usize;
        let name = String::from_utf8(take(&mut cursor, name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("non-utf8 tensor name".into()))?;
        let rank = take(&mut cursor, 1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32::from_le_bytes(take(&mut cursor, 4)?.try_into().unwrap()) as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = take(&mut cursor, numel * T::BYTE_WIDTH)?;
        let values = raw
            .chunks_exact(T::BYTE_WIDTH)
            .map(T::read_le)
            .collect::<Vec<T>>();
        entries.insert(name, (shape, values));
    }
    Ok(entries)
}

/// Load a checkpoint into a freshly initialized model. Every parameter and
/// buffer must be present with a matching shape.
pub fn load<T: Scalar>(mut model: ModelState<T>, path: &Path) -> Result<ModelState<T>> {
    let mut entries = read_entries::<T>(path)?;

    for (name, tensor) in model.named_params_mut() {
        let (shape, values) = entries
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("checkpoint is missing tensor '{name}'")))?;
        if shape != tensor.shape() {
            return Err(Error::shape("checkpoint tensor", &shape, tensor.shape()));
        }
        *tensor = Tensor::parameter(&shape, values)?;
    }

    let load_bn = |prefix: &str,
                       entries: &mut HashMap<String, (Vec<usize>, Vec<T>)>,
                       bn: &mut crate::model::layers::BatchNormParams<T>|
     -> Result<()> {
        for suffix in ["running_mean", "running_var"] {
            let key = format!("{prefix}.{suffix}");
            let (shape, values) = entries
                .remove(&key)
                .ok_or_else(|| Error::Checkpoint(format!("checkpoint is missing '{key}'")))?;
            if !bn.load_buffer(suffix, values) {
                return Err(Error::shape(
                    "checkpoint buffer",
                    &shape,
                    &[bn.running_mean.len()],
                ));
            }
        }
        Ok(())
    };
    load_bn("ct.bn", &mut entries, &mut model.ct.bn)?;
    load_bn("tc.bn1", &mut entries, &mut model.tc.bn1)?;
    load_bn("tc.bn2", &mut entries, &mut model.tc.bn2)?;

    match (entries.remove("stats.mean"), entries.remove("stats.std")) {
        (Some((_, mean)), Some((_, std))) => {
            if mean.len() != model.config.features || std.len() != model.config.features {
                return Err(Error::shape(
                    "checkpoint stats",
                    &[mean.len()],
                    &[model.config.features],
                ));
            }
            model.input_stats = Some(FeatureStats { mean, std });
        }
        (None, None) => model.input_stats = None,
        _ => return Err(Error::Checkpoint("incomplete input stats".into())),
    }

    if let Some(stray) = entries.keys().next() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds unknown tensor '{stray}' (architecture mismatch?)"
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelConfig, ModelState};

    fn tiny_config() -> ModelConfig {
        let mut cfg = ModelConfig::new(2);
        cfg.ct.attention_layers = 1;
        cfg.ct.embed_dim = 8;
        cfg.ct.heads = 2;
        cfg.ct.ff_dim = 16;
        cfg.ct.head_hidden = 16;
        cfg.ct.temporal_filters = 6;
        cfg.tc.scales = 4;
        cfg.tc.dense_hidden = 8;
        cfg
    }

    #[test]
    fn roundtrip_preserves_every_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = ModelState::<f32>::init(tiny_config(), 7).unwrap();
        model.input_stats = Some(FeatureStats {
            mean: vec![0.5, -0.5],
            std: vec![2.0, 1.0],
        });
        save(&mut model, &path).unwrap();

        let fresh = ModelState::<f32>::init(tiny_config(), 8).unwrap();
        let mut loaded = load(fresh, &path).unwrap();
        let mut a = model.named_params_mut();
        let b = loaded.named_params_mut();
        assert_eq!(a.len(), b.len());
        for ((an, at), (bn, bt)) in a.iter_mut().zip(b) {
            assert_eq!(*an, bn);
            assert_eq!(at.values(), bt.values(), "mismatch in {an}");
        }
        let stats = loaded.input_stats.as_ref().unwrap();
        assert_eq!(stats.mean, vec![0.5, -0.5]);
        assert_eq!(stats.std, vec![2.0, 1.0]);
    }

    #[test]
    fn feature_count_mismatch_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let mut model = ModelState::<f32>::init(tiny_config(), 7).unwrap();
        save(&mut model, &path).unwrap();

        let mut other = tiny_config();
        other.features = 5;
        let fresh = ModelState::<f32>::init(other, 8).unwrap();
        match load(fresh, &path) {
            Err(Error::ShapeMismatch { .. }) => {}
            Err(other) => panic!("expected shape mismatch, got {other}"),
            Ok(_) => panic!("expected shape mismatch, got success"),
        }
    }

    #[test]
    fn garbage_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(read_entries::<f32>(&path).is_err());
    }
}
