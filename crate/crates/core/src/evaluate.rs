//! Evaluation: per video, average the final probability vectors of n
//! sampled clips, then score. Clip and frame-pair sampling derive from a
//! per-(video, clip) seed so results are reproducible and parameters are
//! never touched.

use crate::clipsample::sample_clip;
use crate::config::ModelKind;
use crate::descriptors::InstanceAnnotation;
use crate::metrics::{accuracy_score, mean_average_precision};
use crate::model::{LossMode, OrnModel};
use crate::reasoning::sample_t_prime;
use crate::recognition::{ActivityTarget, LabelMode};
use crate::synthetic::{mix_seeds, GeneratedVideo, VideoLabel};
use crate::tensor::{Graph, Result as TResult};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub(crate) struct ClipInstance<'a> {
    pub frames: Vec<f32>,
    pub annotations: Vec<&'a [InstanceAnnotation]>,
    pub t_primes: Vec<Option<usize>>,
}

/// Samples one clip of a video: frame indices, pixel data, annotation
/// slices, and the per-step past-frame draws.
pub(crate) fn draw_clip<'a>(
    video: &'a GeneratedVideo,
    clip_length: usize,
    policy: crate::reasoning::TPrimePolicy,
    rng: &mut ChaCha8Rng,
) -> ClipInstance<'a> {
    let indices = sample_clip(video.frames.frames, clip_length, rng)
        .expect("clip length validated at configuration time");
    let fb = &video.frames;
    let hw = fb.height * fb.width;
    let mut frames = Vec::with_capacity(3 * clip_length * hw);
    for c in 0..3 {
        for &fi in &indices {
            let base = (c * fb.frames + fi) * hw;
            frames.extend(fb.data[base..base + hw].iter().map(|v| *v as f32 / 255.0));
        }
    }
    let annotations: Vec<&[InstanceAnnotation]> = indices
        .iter()
        .map(|&fi| video.annotations[fi].as_slice())
        .collect();
    let t_primes: Vec<Option<usize>> = (0..clip_length)
        .map(|t| sample_t_prime(t, policy, rng))
        .collect();
    ClipInstance {
        frames,
        annotations,
        t_primes,
    }
}

pub fn label_to_target(label: &VideoLabel) -> ActivityTarget {
    match label {
        VideoLabel::Single(l) => ActivityTarget::Single(*l),
        VideoLabel::Multi(bits) => {
            ActivityTarget::Multi(bits.iter().map(|b| *b as f32).collect())
        }
    }
}

#[derive(Debug, Clone)]
pub struct VideoEval {
    pub id: u64,
    pub averaged_probs: Vec<f32>,
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub top1: f64,
    pub map: f64,
    pub mean_loss: f64,
    pub per_video: Vec<VideoEval>,
}

/// Evaluates the model over a set of videos with n-clip aggregation.
pub fn evaluate(
    model: &OrnModel<f32>,
    videos: &[GeneratedVideo],
    n_clips: usize,
    eval_seed: u64,
) -> TResult<EvalOutcome> {
    assert!(n_clips >= 1, "n_clips must be at least 1");
    let mode = model.dims.label_mode;
    let results: Vec<TResult<(VideoEval, f64)>> = videos
        .par_iter()
        .map(|video| {
            let mut prob_sum = vec![0.0f64; model.dims.num_activities];
            let mut loss_sum = 0.0f64;
            for clip_idx in 0..n_clips {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seeds(&[
                    eval_seed,
                    video.id,
                    clip_idx as u64,
                ]));
                let clip = draw_clip(
                    video,
                    model.cfg.clip_length,
                    model.cfg.pairing.t_prime_policy,
                    &mut rng,
                );
                let mut g = Graph::<f32>::new();
                let fwd =
                    model.forward_clip(&mut g, &clip.frames, &clip.annotations, &clip.t_primes)?;
                let target = label_to_target(&video.label);
                let loss = model.loss(&mut g, &fwd, &target, LossMode::Joint)?;
                loss_sum += g.scalar(loss) as f64;
                for (acc, p) in prob_sum.iter_mut().zip(fwd.probabilities(&g, mode)) {
                    *acc += p as f64;
                }
            }
            let averaged: Vec<f32> = prob_sum
                .iter()
                .map(|p| (*p / n_clips as f64) as f32)
                .collect();
            let accuracy = accuracy_score(&averaged, &video.label, mode);
            Ok((
                VideoEval {
                    id: video.id,
                    averaged_probs: averaged,
                    accuracy,
                },
                loss_sum / n_clips as f64,
            ))
        })
        .collect();

    let mut per_video = Vec::with_capacity(videos.len());
    let mut loss_total = 0.0;
    for r in results {
        let (ve, loss) = r?;
        loss_total += loss;
        per_video.push(ve);
    }
    let top1 = per_video.iter().map(|v| v.accuracy).sum::<f64>() / per_video.len().max(1) as f64;
    let probs: Vec<Vec<f32>> = per_video.iter().map(|v| v.averaged_probs.clone()).collect();
    let labels: Vec<VideoLabel> = videos.iter().map(|v| v.label.clone()).collect();
    let map = mean_average_precision(&probs, &labels, model.dims.num_activities);
    Ok(EvalOutcome {
        top1,
        map,
        mean_loss: loss_total / per_video.len().max(1) as f64,
        per_video,
    })
}

/// The validation metric early stopping tracks: top-1 for single-label
/// tasks, mAP for multi-label.
pub fn val_metric(outcome: &EvalOutcome, mode: LabelMode) -> f64 {
    match mode {
        LabelMode::SingleLabel => outcome.top1,
        LabelMode::MultiLabel => outcome.map,
    }
}

/// Sanity guard used by callers exporting graphs: the full model is
/// required, the activity-only baseline has no object stream.
pub fn requires_object_stream(model: &OrnModel<f32>) -> bool {
    model.cfg.model_kind == ModelKind::Full
}
