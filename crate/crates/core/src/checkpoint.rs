//! Model checkpoints: magic "ORNC", a JSON header embedding the exact
//! experiment config, model dims, training metadata, and a tensor manifest
//! (name, shape, byte offset), followed by a little-endian f32 payload.
//!
//! save -> load -> save is byte-identical; loading against a model built
//! from a different config is a hard error, never a silent reshape.

use crate::config::{ExperimentConfig, ModelDims};
use crate::model::OrnModel;
use crate::nn::Parameters;
use crate::tensor::Scalar;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ORNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("header parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad checkpoint: {0}")]
    Format(String),
    #[error("config mismatch: checkpoint was produced by a different configuration ({0})")]
    ConfigMismatch(String),
    #[error(transparent)]
    Tensor(#[from] crate::tensor::TensorError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs_completed: usize,
    pub best_epoch: usize,
    pub best_val_metric: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorRecord {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: ExperimentConfig,
    dims: ModelDims,
    meta: TrainingMeta,
    tensors: Vec<TensorRecord>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Serializes the model (parameters in visitation order, f32 payload).
pub fn save<S: Scalar>(
    path: &Path,
    model: &OrnModel<S>,
    meta: &TrainingMeta,
) -> Result<(), CheckpointError> {
    let mut records = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    model.visit(&mut |name, t| {
        records.push(TensorRecord {
            name: name.to_string(),
            shape: t.shape.clone(),
            offset: payload.len() as u64,
        });
        for v in &t.data {
            payload.extend_from_slice(&v.to_f32().to_le_bytes());
        }
    });
    let header = Header {
        config: model.cfg.clone(),
        dims: model.dims.clone(),
        meta: meta.clone(),
        tensors: records,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut buf = Vec::with_capacity(16 + header_json.len() + payload.len());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header_json);
    buf.extend_from_slice(&payload);

    // write via temp file + rename so a failed write never clobbers the
    // last complete checkpoint
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&buf).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

struct Loaded {
    header: Header,
    payload: Vec<u8>,
}

fn read(path: &Path) -> Result<Loaded, CheckpointError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::Format("missing ORNC magic".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    if bytes.len() < 16 + hlen {
        return Err(CheckpointError::Format("truncated header".into()));
    }
    let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])?;
    Ok(Loaded {
        header,
        payload: bytes[16 + hlen..].to_vec(),
    })
}

/// Reads the embedded config and training metadata without the weights.
pub fn peek(path: &Path) -> Result<(ExperimentConfig, ModelDims, TrainingMeta), CheckpointError> {
    let loaded = read(path)?;
    Ok((loaded.header.config, loaded.header.dims, loaded.header.meta))
}

/// Rebuilds the model from the embedded config and fills its parameters.
pub fn load_model<S: Scalar>(path: &Path) -> Result<(OrnModel<S>, TrainingMeta), CheckpointError> {
    let loaded = read(path)?;
    let mut model = OrnModel::<S>::new(&loaded.header.config, &loaded.header.dims, 0)?;
    fill(&mut model, &loaded)?;
    Ok((model, loaded.header.meta))
}

/// Loads weights into an existing model; any config, name, or shape
/// divergence is an error.
pub fn load_into<S: Scalar>(path: &Path, model: &mut OrnModel<S>) -> Result<TrainingMeta, CheckpointError> {
    let loaded = read(path)?;
    if loaded.header.config != model.cfg {
        return Err(CheckpointError::ConfigMismatch(
            "experiment config differs".into(),
        ));
    }
    if loaded.header.dims != model.dims {
        return Err(CheckpointError::ConfigMismatch("model dims differ".into()));
    }
    fill(model, &loaded)?;
    Ok(loaded.header.meta)
}

fn fill<S: Scalar>(model: &mut OrnModel<S>, loaded: &Loaded) -> Result<(), CheckpointError> {
    use std::collections::BTreeMap;
    let mut by_name: BTreeMap<&str, &TensorRecord> = BTreeMap::new();
    for r in &loaded.header.tensors {
        by_name.insert(r.name.as_str(), r);
    }
    let mut expected = 0usize;
    let mut error: Option<String> = None;
    model.visit_mut(&mut |name, t| {
        expected += 1;
        let Some(rec) = by_name.get(name) else {
            error.get_or_insert(format!("missing tensor {name}"));
            return;
        };
        if rec.shape != t.shape {
            error.get_or_insert(format!(
                "tensor {name} shape {:?} != checkpoint {:?}",
                t.shape, rec.shape
            ));
            return;
        }
        let start = rec.offset as usize;
        let n = t.data.len();
        if start + 4 * n > loaded.payload.len() {
            error.get_or_insert(format!("tensor {name} payload out of bounds"));
            return;
        }
        for i in 0..n {
            let le: [u8; 4] = loaded.payload[start + 4 * i..start + 4 * i + 4]
                .try_into()
                .unwrap();
            t.data[i] = S::from_f32(f32::from_le_bytes(le));
        }
    });
    if let Some(e) = error {
        return Err(CheckpointError::ConfigMismatch(e));
    }
    if expected != loaded.header.tensors.len() {
        return Err(CheckpointError::ConfigMismatch(format!(
            "model has {expected} tensors, checkpoint has {}",
            loaded.header.tensors.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BackboneConfig, BlockConfig, Inflation};
    use crate::config::DescriptorDims;
    use crate::recognition::LabelMode;

    fn small_model(seed: u64) -> OrnModel<f32> {
        let cfg = ExperimentConfig {
            backbone: BackboneConfig {
                blocks: vec![
                    BlockConfig {
                        channels_out: 4,
                        inflation: Inflation::Plain2d,
                        spatial_stride: 2,
                    },
                    BlockConfig {
                        channels_out: 4,
                        inflation: Inflation::Plain2d,
                        spatial_stride: 2,
                    },
                ],
                split_at: 1,
                object_head_stride_override: 1,
                spatial_kernel: 3,
                temporal_kernel: 3,
            },
            descriptor: DescriptorDims {
                mask_grid: 6,
                shape_hidden: 6,
                d_b: 4,
            },
            relation_hidden: 8,
            relation_dim: 8,
            d_r: 6,
            d_s: 6,
            ..ExperimentConfig::default()
        };
        let dims = ModelDims {
            frame_height: 32,
            frame_width: 32,
            input_channels: 3,
            num_object_classes: 6,
            num_activities: 2,
            label_mode: LabelMode::SingleLabel,
        };
        OrnModel::new(&cfg, &dims, seed).unwrap()
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let model = small_model(11);
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.ornc");
        let p2 = dir.path().join("b.ornc");
        let meta = TrainingMeta {
            epochs_completed: 3,
            best_epoch: 2,
            best_val_metric: 0.75,
        };
        save(&p1, &model, &meta).unwrap();
        let (loaded, meta2) = load_model::<f32>(&p1).unwrap();
        assert_eq!(meta, meta2);
        save(&p2, &loaded, &meta2).unwrap();
        assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    }

    #[test]
    fn loaded_weights_match_exactly() {
        let model = small_model(13);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ornc");
        save(&p, &model, &TrainingMeta::default()).unwrap();
        let (loaded, _) = load_model::<f32>(&p).unwrap();
        let mut orig = Vec::new();
        model.visit(&mut |_, t| orig.push(t.data.clone()));
        let mut got = Vec::new();
        loaded.visit(&mut |_, t| got.push(t.data.clone()));
        assert_eq!(orig, got);
    }

    #[test]
    fn mismatched_config_is_a_hard_error() {
        let model = small_model(17);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ornc");
        save(&p, &model, &TrainingMeta::default()).unwrap();

        let mut other = small_model(1);
        other.cfg.relation_dim = 16; // lie about the config
        let err = load_into(&p, &mut other).unwrap_err();
        assert!(matches!(err, CheckpointError::ConfigMismatch(_)));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ornc");
        fs::write(&p, b"ORNC\x01\x00\x00\x00").unwrap();
        assert!(load_model::<f32>(&p).is_err());
    }
}
