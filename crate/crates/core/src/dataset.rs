//! Dataset persistence: a human-readable JSON manifest indexing per-video
//! labels, RLE-encoded annotations, and event logs, with pixel data in
//! binary shards (magic "ORNV", little-endian payload).

use crate::descriptors::InstanceAnnotation;
use crate::rle::{rle_decode, rle_encode, RleError};
use crate::synthetic::{Event, FrameBlock, GeneratedVideo, VideoLabel, WorldConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SHARD_MAGIC: &[u8; 4] = b"ORNV";
pub const SHARD_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest parse error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad shard {path}: {reason}")]
    BadShard { path: PathBuf, reason: String },
    #[error(transparent)]
    Rle(#[from] RleError),
    #[error("annotation rejected at ingestion (video {video}, frame {frame}, instance {instance}): {reason}")]
    BadAnnotation {
        video: u64,
        frame: usize,
        instance: usize,
        reason: String,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AnnotationEntry {
    class_distribution: Vec<f32>,
    score: f32,
    rle: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct VideoEntry {
    id: u64,
    label: VideoLabel,
    shard: String,
    frames: usize,
    height: usize,
    width: usize,
    annotations: Vec<Vec<AnnotationEntry>>,
    events: Vec<Event>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    world: WorldConfig,
    num_videos: usize,
    videos: Vec<VideoEntry>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub world: WorldConfig,
    pub videos: Vec<GeneratedVideo>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

fn write_shard(path: &Path, frames: &FrameBlock) -> Result<(), DataError> {
    let mut buf = Vec::with_capacity(frames.data.len() + 64);
    buf.extend_from_slice(SHARD_MAGIC);
    buf.extend_from_slice(&SHARD_VERSION.to_le_bytes());
    buf.extend_from_slice(&1u32.to_le_bytes()); // dtype 1 = u8
    let dims = [3u64, frames.frames as u64, frames.height as u64, frames.width as u64];
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
    buf.extend_from_slice(&frames.data);
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

fn read_shard(path: &Path) -> Result<FrameBlock, DataError> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .map_err(io_err(path))?
        .read_to_end(&mut bytes)
        .map_err(io_err(path))?;
    let bad = |reason: &str| DataError::BadShard {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 16 || &bytes[..4] != SHARD_MAGIC {
        return Err(bad("missing ORNV magic"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != SHARD_VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let dtype = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if dtype != 1 {
        return Err(bad(&format!("unsupported dtype {dtype}")));
    }
    let ndim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if ndim != 4 || bytes.len() < 16 + 8 * ndim {
        return Err(bad("expected 4 dims"));
    }
    let mut dims = [0usize; 4];
    for (i, d) in dims.iter_mut().enumerate() {
        *d = u64::from_le_bytes(bytes[16 + i * 8..24 + i * 8].try_into().unwrap()) as usize;
    }
    let payload = &bytes[16 + 8 * ndim..];
    let expect: usize = dims.iter().product();
    if payload.len() != expect || dims[0] != 3 {
        return Err(bad(&format!(
            "payload {} bytes, dims {:?} expect {}",
            payload.len(),
            dims,
            expect
        )));
    }
    Ok(FrameBlock {
        frames: dims[1],
        height: dims[2],
        width: dims[3],
        data: payload.to_vec(),
    })
}

/// Writes manifest + shards under `dir`; the manifest lands at
/// `dir/manifest.json`, shards under `dir/shards/`.
pub fn write_dataset(dir: &Path, world: &WorldConfig, videos: &[GeneratedVideo]) -> Result<PathBuf, DataError> {
    let shard_dir = dir.join("shards");
    fs::create_dir_all(&shard_dir).map_err(io_err(&shard_dir))?;
    let mut entries = Vec::with_capacity(videos.len());
    for v in videos {
        let shard_rel = format!("shards/video_{:06}.ornv", v.id);
        write_shard(&dir.join(&shard_rel), &v.frames)?;
        let annotations = v
            .annotations
            .iter()
            .map(|frame| {
                frame
                    .iter()
                    .map(|a| AnnotationEntry {
                        class_distribution: a.class_distribution.clone(),
                        score: a.score,
                        rle: rle_encode(&a.mask),
                    })
                    .collect()
            })
            .collect();
        entries.push(VideoEntry {
            id: v.id,
            label: v.label.clone(),
            shard: shard_rel,
            frames: v.frames.frames,
            height: v.frames.height,
            width: v.frames.width,
            annotations,
            events: v.event_log.clone(),
        });
    }
    let manifest = Manifest {
        format: "orn-dataset".to_string(),
        version: 1,
        world: world.clone(),
        num_videos: entries.len(),
        videos: entries,
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(&path, json).map_err(io_err(&path))?;
    Ok(path)
}

/// Loads a dataset from its manifest, decoding RLE masks and validating
/// every annotation at ingestion.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(manifest_path).map_err(io_err(manifest_path))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for entry in manifest.videos {
        let frames = read_shard(&base.join(&entry.shard))?;
        let mut annotations = Vec::with_capacity(entry.annotations.len());
        for (fi, frame) in entry.annotations.iter().enumerate() {
            let mut frame_out = Vec::with_capacity(frame.len());
            for (ii, a) in frame.iter().enumerate() {
                let mask = rle_decode(&a.rle, entry.height, entry.width)?;
                let ann = InstanceAnnotation {
                    class_distribution: a.class_distribution.clone(),
                    score: a.score,
                    mask,
                };
                ann.validate().map_err(|e| DataError::BadAnnotation {
                    video: entry.id,
                    frame: fi,
                    instance: ii,
                    reason: e.to_string(),
                })?;
                frame_out.push(ann);
            }
            annotations.push(frame_out);
        }
        videos.push(GeneratedVideo {
            id: entry.id,
            frames,
            annotations,
            label: entry.label,
            event_log: entry.events,
        });
    }
    Ok(Dataset {
        world: manifest.world,
        videos,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate, TaskKind};

    #[test]
    fn dataset_roundtrips_exactly() {
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 5,
            ..WorldConfig::default()
        };
        let videos = generate(&world, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(dir.path(), &world, &videos).unwrap();
        let loaded = load_dataset(&manifest).unwrap();
        assert_eq!(loaded.videos.len(), 4);
        for (a, b) in videos.iter().zip(&loaded.videos) {
            assert_eq!(a.frames, b.frames);
            assert_eq!(a.label, b.label);
            assert_eq!(a.event_log, b.event_log);
            assert_eq!(a.annotations.len(), b.annotations.len());
            for (fa, fb) in a.annotations.iter().zip(&b.annotations) {
                assert_eq!(fa.len(), fb.len());
                for (x, y) in fa.iter().zip(fb) {
                    assert_eq!(x.mask, y.mask);
                    assert_eq!(x.class_distribution, y.class_distribution);
                }
            }
        }
    }

    #[test]
    fn same_seed_writes_identical_bytes() {
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 9,
            ..WorldConfig::default()
        };
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let v1 = generate(&world, 3).unwrap();
        let v2 = generate(&world, 3).unwrap();
        let m1 = write_dataset(d1.path(), &world, &v1).unwrap();
        let m2 = write_dataset(d2.path(), &world, &v2).unwrap();
        assert_eq!(fs::read(&m1).unwrap(), fs::read(&m2).unwrap());
        for i in 0..3 {
            let s1 = fs::read(d1.path().join(format!("shards/video_{i:06}.ornv"))).unwrap();
            let s2 = fs::read(d2.path().join(format!("shards/video_{i:06}.ornv"))).unwrap();
            assert_eq!(s1, s2);
        }
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ornv");
        fs::write(&path, b"NOPE....").unwrap();
        assert!(matches!(
            read_shard(&path),
            Err(DataError::BadShard { .. })
        ));
    }
}
