//! Training loop: Adam over batch-accumulated gradients, two-stage
//! schedule (object head first, then joint), per-epoch metrics CSV,
//! early stopping on the validation metric, best checkpoint retained.
//!
//! Determinism: batch elements run in parallel but each derives its RNG
//! from (train seed, epoch, video id), and gradients are summed in fixed
//! batch order, so repeated runs produce identical metrics.

use crate::checkpoint::{self, CheckpointError, TrainingMeta};
use crate::config::ExperimentConfig;
use crate::dataset::DataError;
use crate::evaluate::{draw_clip, evaluate, label_to_target, val_metric, EvalOutcome};
use crate::metrics::{mean_average_precision, accuracy_score, MetricsCsv};
use crate::model::{LossMode, OrnModel};

use crate::optim::Adam;
use crate::recognition::LabelMode;
use crate::synthetic::{mix_seeds, GeneratedVideo, VideoLabel, WorldConfig};
use crate::config::ModelDims;
use crate::tensor::TensorError;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NanLoss { epoch: usize, step: usize },
    #[error("forward/backward failure at epoch {epoch}, step {step}: {source}")]
    Forward {
        epoch: usize,
        step: usize,
        source: TensorError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config error: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_metric: f64,
    pub checkpoint_path: PathBuf,
    pub metrics_path: PathBuf,
    pub final_val: EvalOutcome,
}

/// Dimensions a model needs, derived from the generating world config.
pub fn dims_for_world(world: &WorldConfig) -> ModelDims {
    ModelDims {
        frame_height: world.grid.0,
        frame_width: world.grid.1,
        input_channels: 3,
        num_object_classes: world.num_classes(),
        num_activities: world.num_activities(),
        label_mode: if world.is_multi_label() {
            LabelMode::MultiLabel
        } else {
            LabelMode::SingleLabel
        },
    }
}

/// Trains a model from scratch; returns the report and leaves
/// `best.ornc` + `metrics.csv` in `out_dir`.
pub fn train(
    cfg: &ExperimentConfig,
    world: &WorldConfig,
    train_videos: &[GeneratedVideo],
    val_videos: &[GeneratedVideo],
    out_dir: &Path,
) -> Result<TrainReport, TrainError> {
    if cfg.clip_length == 0 {
        return Err(TrainError::Config("clip_length must be positive".into()));
    }
    if cfg.batch_size == 0 {
        return Err(TrainError::Config("batch_size must be positive".into()));
    }
    if train_videos.is_empty() || val_videos.is_empty() {
        return Err(TrainError::Config("empty train or val split".into()));
    }
    std::fs::create_dir_all(out_dir)?;
    let dims = dims_for_world(world);
    let mut model = OrnModel::<f32>::new(cfg, &dims, cfg.seeds.init)?;
    let mut adam = Adam::new(cfg.optimizer);
    let csv = MetricsCsv::create(&out_dir.join("metrics.csv"))?;
    let checkpoint_path = out_dir.join("best.ornc");

    let mode = dims.label_mode;
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.epochs {
        let epoch_start = Instant::now();
        let loss_mode = if epoch < cfg.phase1_epochs {
            LossMode::ObjectHeadOnly
        } else {
            LossMode::Joint
        };

        let mut order: Vec<usize> = (0..train_videos.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(mix_seeds(&[cfg.seeds.train, epoch as u64, 0xa11]));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0f64;
        let mut epoch_probs: Vec<Vec<f32>> = Vec::with_capacity(train_videos.len());
        let mut epoch_labels: Vec<VideoLabel> = Vec::with_capacity(train_videos.len());
        let mut epoch_acc = 0.0f64;

        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results: Vec<Result<(f64, Vec<f32>, Vec<(String, Vec<f32>)>), TensorError>> =
                batch
                    .par_iter()
                    .map(|&vi| {
                        let video = &train_videos[vi];
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[
                            cfg.seeds.train,
                            epoch as u64,
                            video.id,
                        ]));
                        let clip =
                            draw_clip(video, cfg.clip_length, cfg.pairing.t_prime_policy, &mut rng);
                        let mut g = crate::tensor::Graph::<f32>::new();
                        let fwd = model.forward_clip(
                            &mut g,
                            &clip.frames,
                            &clip.annotations,
                            &clip.t_primes,
                        )?;
                        let target = label_to_target(&video.label);
                        let loss = model.loss(&mut g, &fwd, &target, loss_mode)?;
                        let loss_val = g.scalar(loss) as f64;
                        let probs = fwd.probabilities(&g, mode);
                        g.backward(loss)?;
                        Ok((loss_val, probs, g.param_grads()))
                    })
                    .collect();

            let mut acc: BTreeMap<String, Vec<f32>> = BTreeMap::new();
            for (bi, r) in results.into_iter().enumerate() {
                let (loss_val, probs, grads) = r.map_err(|source| TrainError::Forward {
                    epoch,
                    step,
                    source,
                })?;
                if !loss_val.is_finite() {
                    return Err(TrainError::NanLoss { epoch, step });
                }
                epoch_loss += loss_val;
                let video = &train_videos[batch[bi]];
                epoch_acc += accuracy_score(&probs, &video.label, mode);
                epoch_probs.push(probs);
                epoch_labels.push(video.label.clone());
                for (name, g) in grads {
                    let slot = acc.entry(name).or_insert_with(|| vec![0.0; g.len()]);
                    for (a, b) in slot.iter_mut().zip(&g) {
                        *a += *b;
                    }
                }
            }
            let scale = 1.0 / batch.len() as f32;
            for g in acc.values_mut() {
                for v in g.iter_mut() {
                    *v *= scale;
                }
            }
            adam.step(&mut model, &acc);
        }

        let n_train = train_videos.len() as f64;
        let train_map = mean_average_precision(&epoch_probs, &epoch_labels, dims.num_activities);
        let train_wall = epoch_start.elapsed().as_secs_f64();
        csv.append(
            epoch,
            "train",
            epoch_loss / n_train,
            epoch_acc / n_train,
            train_map,
            train_wall,
        )?;

        let val_start = Instant::now();
        let val = evaluate(&model, val_videos, 1, cfg.seeds.eval)?;
        let val_wall = val_start.elapsed().as_secs_f64();
        csv.append(epoch, "val", val.mean_loss, val.top1, val.map, val_wall)?;
        let metric = val_metric(&val, mode);
        epochs_run = epoch + 1;
        eprintln!(
            "epoch {epoch:3} [{:?}] train_loss {:.4} train_top1 {:.3} val_top1 {:.3} val_mAP {:.3} ({:.1}s)",
            loss_mode,
            epoch_loss / n_train,
            epoch_acc / n_train,
            val.top1,
            val.map,
            train_wall + val_wall,
        );

        if metric > best_val {
            best_val = metric;
            best_epoch = epoch;
            checkpoint::save(
                &checkpoint_path,
                &model,
                &TrainingMeta {
                    epochs_completed: epoch + 1,
                    best_epoch,
                    best_val_metric: best_val,
                },
            )?;
        } else if epoch - best_epoch >= cfg.early_stopping_patience {
            break;
        }
    }

    // final evaluation with full clip aggregation, on the best weights
    checkpoint::load_into(&checkpoint_path, &mut model)?;
    let final_val = evaluate(&model, val_videos, cfg.eval_clips, cfg.seeds.eval)?;
    Ok(TrainReport {
        epochs_run,
        best_epoch,
        best_val_metric: best_val,
        checkpoint_path,
        metrics_path: csv.path().to_path_buf(),
        final_val,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BackboneConfig, BlockConfig, Inflation};
    use crate::config::{AdamConfig, DescriptorDims, Seeds};
    use crate::nn::Parameters;
    use crate::synthetic::{generate, TaskKind};

    pub(crate) fn tiny_train_config(epochs: usize) -> ExperimentConfig {
        ExperimentConfig {
            backbone: BackboneConfig {
                blocks: vec![
                    BlockConfig {
                        channels_out: 4,
                        inflation: Inflation::Sep2p1d,
                        spatial_stride: 2,
                    },
                    BlockConfig {
                        channels_out: 6,
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
                shape_hidden: 8,
                d_b: 4,
            },
            relation_hidden: 12,
            relation_dim: 12,
            d_r: 8,
            d_s: 8,
            clip_length: 3,
            batch_size: 4,
            epochs,
            early_stopping_patience: 50,
            eval_clips: 2,
            seeds: Seeds {
                init: 5,
                train: 6,
                eval: 7,
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_lr_training_keeps_initial_parameters() {
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 40,
            num_distractors: 0,
            ..WorldConfig::default()
        };
        let videos = generate(&world, 10).unwrap();
        let mut cfg = tiny_train_config(1);
        cfg.optimizer = AdamConfig {
            lr: 0.0,
            ..AdamConfig::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let report = train(&cfg, &world, &videos[..8], &videos[8..], dir.path()).unwrap();

        let dims = dims_for_world(&world);
        let init = OrnModel::<f32>::new(&cfg, &dims, cfg.seeds.init).unwrap();
        let (trained, _) = checkpoint::load_model::<f32>(&report.checkpoint_path).unwrap();
        let mut init_params = Vec::new();
        init.visit(&mut |_, t| init_params.push(t.data.clone()));
        let mut trained_params = Vec::new();
        trained.visit(&mut |_, t| trained_params.push(t.data.clone()));
        assert_eq!(init_params, trained_params);
    }

    #[test]
    fn metrics_csv_has_two_rows_per_epoch() {
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 41,
            num_distractors: 0,
            ..WorldConfig::default()
        };
        let videos = generate(&world, 10).unwrap();
        let cfg = tiny_train_config(2);
        let dir = tempfile::tempdir().unwrap();
        let report = train(&cfg, &world, &videos[..8], &videos[8..], dir.path()).unwrap();
        let text = std::fs::read_to_string(&report.metrics_path).unwrap();
        // header + (train + val) per epoch
        assert_eq!(text.lines().count(), 1 + 2 * report.epochs_run);
    }

    #[test]
    fn training_is_deterministic_across_runs() {
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 42,
            num_distractors: 0,
            ..WorldConfig::default()
        };
        let videos = generate(&world, 12).unwrap();
        let cfg = tiny_train_config(2);
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let r1 = train(&cfg, &world, &videos[..10], &videos[10..], d1.path()).unwrap();
        let r2 = train(&cfg, &world, &videos[..10], &videos[10..], d2.path()).unwrap();
        let c1 = std::fs::read(&r1.checkpoint_path).unwrap();
        let c2 = std::fs::read(&r2.checkpoint_path).unwrap();
        assert_eq!(c1, c2, "checkpoints must be byte-identical");
        let m1 = crate::metrics::csv_without_wall(&r1.metrics_path).unwrap();
        let m2 = crate::metrics::csv_without_wall(&r2.metrics_path).unwrap();
        assert_eq!(m1, m2, "metrics (excluding wall clock) must be identical");
    }
}
