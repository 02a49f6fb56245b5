//! The assembled two-head model: backbone, object descriptors, relational
//! reasoning, context stream, classification heads, and the joint loss.

use crate::backbone::Backbone;
use crate::config::{ExperimentConfig, ModelDims, ModelKind};
use crate::context::{gap, run_context};
use crate::descriptors::{
    assemble, mask_pool, pixel_cells, select_topk, Descriptor, InstanceAnnotation, MaskEmbedder,
};
use crate::nn::{Gru, Mlp, Parameters};
use crate::reasoning::{relate, run_clip, FPhiKind, FPhiVars, PairingMode, RelateOutput};
use crate::recognition::{
    activity_loss, final_probabilities, ActivityTarget, HeadParams, LabelMode,
};
use crate::tensor::{Graph, Result as TResult, Scalar, Tensor, TensorError, VarId};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Which terms enter the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Averaged-logit activity term plus the auxiliary object term.
    Joint,
    /// Object-head-only pretraining: y2 activity term plus auxiliary term;
    /// the activity stream receives no gradient.
    ObjectHeadOnly,
}

#[derive(Clone)]
pub struct OrnModel<S: Scalar> {
    pub cfg: ExperimentConfig,
    pub dims: ModelDims,
    pub backbone: Backbone<S>,
    pub mask_embedder: MaskEmbedder<S>,
    pub h_theta: Mlp<S>,
    pub f_phi_gru: Option<Gru<S>>,
    pub f_phi_mlp: Option<Mlp<S>>,
    pub f_gamma: Gru<S>,
    pub heads: HeadParams<S>,
}

impl<S: Scalar> OrnModel<S> {
    pub fn new(cfg: &ExperimentConfig, dims: &ModelDims, init_seed: u64) -> TResult<Self> {
        cfg.backbone.validate(dims.frame_height, dims.frame_width)?;
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let backbone = Backbone::new(&cfg.backbone, dims.input_channels, &mut rng)?;
        let d_u = cfg.backbone.object_channels();
        let d_v = cfg.backbone.activity_channels();
        let len_o = cfg.descriptor.d_b + d_u + dims.num_object_classes;

        let mask_embedder = MaskEmbedder::new(
            "mask_embed",
            cfg.descriptor.mask_grid,
            cfg.descriptor.shape_hidden,
            cfg.descriptor.d_b,
            &mut rng,
        );
        let h_theta = Mlp::new(
            "h_theta",
            &[
                cfg.pairing.clique_size * len_o,
                cfg.relation_hidden,
                cfg.relation_hidden,
                cfg.relation_dim,
            ],
            &mut rng,
        );
        let (f_phi_gru, f_phi_mlp) = match cfg.pairing.f_phi_kind {
            FPhiKind::Recurrent => (
                Some(Gru::new("f_phi", cfg.relation_dim, cfg.d_r, &mut rng)),
                None,
            ),
            FPhiKind::Mlp => (
                None,
                Some(Mlp::new("f_phi", &[cfg.relation_dim, cfg.d_r, cfg.d_r], &mut rng)),
            ),
        };
        let f_gamma = Gru::new("f_gamma", d_v, cfg.d_s, &mut rng);
        let heads = HeadParams::new(
            dims.num_activities,
            cfg.d_s,
            cfg.d_r,
            dims.num_object_classes,
            d_u,
            &mut rng,
        );
        Ok(OrnModel {
            cfg: cfg.clone(),
            dims: dims.clone(),
            backbone,
            mask_embedder,
            h_theta,
            f_phi_gru,
            f_phi_mlp,
            f_gamma,
            heads,
        })
    }

    fn bind_f_phi(&self, g: &mut Graph<S>) -> FPhiVars {
        match (&self.f_phi_gru, &self.f_phi_mlp) {
            (Some(gru), _) => FPhiVars::Recurrent(gru.bind(g)),
            (_, Some(mlp)) => FPhiVars::Mlp(mlp.bind(g)),
            _ => unreachable!("f_phi must exist"),
        }
    }

    /// Builds the per-frame descriptor lists for a clip. Annotations are
    /// capped at k_max per frame by score. Returns descriptors plus the
    /// aux-classifier targets aligned with them.
    fn build_descriptors(
        &self,
        g: &mut Graph<S>,
        u_maps: VarId,
        annotations: &[&[InstanceAnnotation]],
    ) -> TResult<(Vec<Vec<Descriptor>>, Vec<Vec<usize>>)> {
        let embed_vars = self.mask_embedder.bind(g);
        let mut per_frame = Vec::with_capacity(annotations.len());
        let mut targets = Vec::with_capacity(annotations.len());
        for (t, frame_anns) in annotations.iter().enumerate() {
            let u_t = g.frame(u_maps, t)?;
            if self.cfg.pairing.mode == PairingMode::PixelCells {
                let descs = pixel_cells(
                    g,
                    u_t,
                    self.cfg.pixel_grid,
                    self.cfg.descriptor.d_b,
                    self.dims.num_object_classes,
                    t,
                    self.cfg.feature_subset,
                )?;
                per_frame.push(descs);
                targets.push(Vec::new());
                continue;
            }
            let kept = select_topk(frame_anns, self.cfg.k_max);
            let mut descs = Vec::with_capacity(kept.len());
            let mut frame_targets = Vec::with_capacity(kept.len());
            for idx in kept {
                let ann = &frame_anns[idx];
                let b = self.mask_embedder.embed(g, &embed_vars, &ann.mask)?;
                let u = mask_pool(g, u_t, &ann.mask)?;
                let cdist: Vec<S> = ann
                    .class_distribution
                    .iter()
                    .map(|p| S::from_f32(*p))
                    .collect();
                let c = g.from_vec(&[self.dims.num_object_classes], cdist)?;
                let o = assemble(g, b, u, c, self.cfg.feature_subset)?;
                descs.push(Descriptor {
                    o,
                    u,
                    class_index: ann.class_index(),
                    frame_index: t,
                    instance_index: idx,
                });
                frame_targets.push(ann.class_index());
            }
            per_frame.push(descs);
            targets.push(frame_targets);
        }
        Ok((per_frame, targets))
    }
}

/// On-graph outputs of one clip forward pass.
pub struct ClipForward {
    pub y1: VarId,
    pub y2: Option<VarId>,
    /// Averaged logits (or y1 alone for the activity-only model).
    pub logits: VarId,
    pub aux_logits: Vec<VarId>,
    pub aux_targets: Vec<usize>,
    pub aux_distributions: Vec<Vec<f32>>,
}

impl ClipForward {
    pub fn probabilities<S: Scalar>(&self, g: &Graph<S>, mode: LabelMode) -> Vec<f32> {
        final_probabilities(g.data(self.logits), mode)
            .into_iter()
            .map(|v| v.to_f32())
            .collect()
    }
}

impl<S: Scalar> OrnModel<S> {
    /// Forward pass over one clip. `frames` is `[3, L, H, W]` row-major
    /// float data; `annotations` has one entry per clip frame; `t_primes`
    /// are the sampled past-frame indices.
    pub fn forward_clip(
        &self,
        g: &mut Graph<S>,
        frames: &[S],
        annotations: &[&[InstanceAnnotation]],
        t_primes: &[Option<usize>],
    ) -> TResult<ClipForward> {
        let l = annotations.len();
        let shape = [
            self.dims.input_channels,
            l,
            self.dims.frame_height,
            self.dims.frame_width,
        ];
        if frames.len() != shape.iter().product::<usize>() {
            return Err(TensorError::DataLength {
                len: frames.len(),
                shape: shape.to_vec(),
            });
        }
        let clip = g.from_vec(&shape, frames.to_vec())?;
        let maps = self.backbone.forward(g, clip)?;

        // context stream
        let gamma_vars = self.f_gamma.bind(g);
        let mut v_frames = Vec::with_capacity(l);
        for t in 0..l {
            let v_t = g.frame(maps.v, t)?;
            v_frames.push(gap(g, v_t)?);
        }
        let h = run_context(g, &v_frames, &gamma_vars, self.cfg.context_aggregation)?;
        let head_vars = self.heads.bind(g);

        if self.cfg.model_kind == ModelKind::ActivityOnly {
            let y1 = head_vars.w.apply(g, h)?;
            return Ok(ClipForward {
                y1,
                y2: None,
                logits: y1,
                aux_logits: Vec::new(),
                aux_targets: Vec::new(),
                aux_distributions: Vec::new(),
            });
        }

        // object stream
        let (per_frame, per_frame_targets) = self.build_descriptors(g, maps.u, annotations)?;
        let h_theta_vars = self.h_theta.bind(g);
        let f_phi_vars = self.bind_f_phi(g);
        let r = run_clip(
            g,
            &per_frame,
            t_primes,
            &self.cfg.pairing,
            &h_theta_vars,
            self.cfg.relation_dim,
            &f_phi_vars,
        )?;

        let pred = head_vars.predict(g, h, r)?;

        let mut aux_logits = Vec::new();
        let mut aux_targets = Vec::new();
        let mut aux_distributions = Vec::new();
        for (frame_descs, frame_targets) in per_frame.iter().zip(&per_frame_targets) {
            for (d, &target) in frame_descs.iter().zip(frame_targets) {
                aux_logits.push(head_vars.classify_object(g, d.u)?);
                aux_targets.push(target);
            }
            let _ = frame_descs;
        }
        if self.cfg.soft_aux_targets {
            for (frame_anns, frame_targets) in annotations.iter().zip(&per_frame_targets) {
                let kept = select_topk(frame_anns, self.cfg.k_max);
                for &idx in kept.iter().take(frame_targets.len()) {
                    aux_distributions.push(frame_anns[idx].class_distribution.clone());
                }
            }
        }

        Ok(ClipForward {
            y1: pred.y1,
            y2: Some(pred.y2),
            logits: pred.averaged,
            aux_logits,
            aux_targets,
            aux_distributions,
        })
    }

    /// Training loss for one clip forward.
    pub fn loss(
        &self,
        g: &mut Graph<S>,
        fwd: &ClipForward,
        target: &ActivityTarget,
        mode: LossMode,
    ) -> TResult<VarId> {
        let activity_logits = match (mode, fwd.y2) {
            (LossMode::ObjectHeadOnly, Some(y2)) => y2,
            _ => fwd.logits,
        };
        let mut loss = activity_loss(g, activity_logits, target)?;
        if self.cfg.soft_aux_targets && !fwd.aux_distributions.is_empty() {
            for (&logits, dist) in fwd.aux_logits.iter().zip(&fwd.aux_distributions) {
                let mut term: Option<VarId> = None;
                for (c, q) in dist.iter().enumerate() {
                    if *q <= 0.0 {
                        continue;
                    }
                    let ce = g.cross_entropy_logits(logits, c)?;
                    let weighted = g.scale(ce, *q as f64)?;
                    term = Some(match term {
                        None => weighted,
                        Some(t) => g.add(t, weighted)?,
                    });
                }
                if let Some(t) = term {
                    loss = g.add(loss, t)?;
                }
            }
        } else {
            for (&logits, &t) in fwd.aux_logits.iter().zip(&fwd.aux_targets) {
                let aux = g.cross_entropy_logits(logits, t)?;
                loss = g.add(loss, aux)?;
            }
        }
        Ok(loss)
    }

    /// Traced relation pass over one clip for interaction-graph export:
    /// per (t', t) pair, the L1 mass of h_theta per (past class, current
    /// class) edge.
    pub fn trace_interactions(
        &self,
        g: &mut Graph<S>,
        frames: &[S],
        annotations: &[&[InstanceAnnotation]],
        t_primes: &[Option<usize>],
    ) -> TResult<Vec<((usize, usize), f64)>> {
        let l = annotations.len();
        let shape = [
            self.dims.input_channels,
            l,
            self.dims.frame_height,
            self.dims.frame_width,
        ];
        let clip = g.from_vec(&shape, frames.to_vec())?;
        let maps = self.backbone.forward(g, clip)?;
        let (per_frame, _) = self.build_descriptors(g, maps.u, annotations)?;
        let h_theta_vars = self.h_theta.bind(g);
        let mut out = Vec::new();
        for (t, tp) in t_primes.iter().enumerate() {
            let Some(tp) = tp else { continue };
            let RelateOutput {
                rows, pair_classes, ..
            } = relate(
                g,
                &per_frame[*tp],
                &per_frame[t],
                &self.cfg.pairing,
                &h_theta_vars,
                self.cfg.relation_dim,
                true,
            )?;
            if let Some(rows) = rows {
                let h = self.cfg.relation_dim;
                let data = g.data(rows);
                for (row, classes) in pair_classes.iter().enumerate() {
                    let l1: f64 = data[row * h..(row + 1) * h]
                        .iter()
                        .map(|v| v.to_f64().abs())
                        .sum();
                    out.push((*classes, l1));
                }
            }
        }
        Ok(out)
    }
}

impl<S: Scalar> Parameters<S> for OrnModel<S> {
    fn visit(&self, f: &mut dyn FnMut(&str, &Tensor<S>)) {
        self.backbone.visit(f);
        self.mask_embedder.visit(f);
        self.h_theta.visit(f);
        if let Some(gru) = &self.f_phi_gru {
            gru.visit(f);
        }
        if let Some(mlp) = &self.f_phi_mlp {
            mlp.visit(f);
        }
        self.f_gamma.visit(f);
        self.heads.visit(f);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<S>)) {
        self.backbone.visit_mut(f);
        self.mask_embedder.visit_mut(f);
        self.h_theta.visit_mut(f);
        if let Some(gru) = &mut self.f_phi_gru {
            gru.visit_mut(f);
        }
        if let Some(mlp) = &mut self.f_phi_mlp {
            mlp.visit_mut(f);
        }
        self.f_gamma.visit_mut(f);
        self.heads.visit_mut(f);
    }
}

/// Tiny but complete configuration used by the micro gradient check.
pub fn micro_experiment_config() -> ExperimentConfig {
    use crate::backbone::{BackboneConfig, BlockConfig, Inflation};
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
                    inflation: Inflation::Full3d,
                    spatial_stride: 2,
                },
            ],
            split_at: 1,
            object_head_stride_override: 1,
            spatial_kernel: 3,
            temporal_kernel: 3,
        },
        descriptor: crate::config::DescriptorDims {
            mask_grid: 6,
            shape_hidden: 6,
            d_b: 4,
        },
        relation_hidden: 8,
        relation_dim: 8,
        d_r: 6,
        d_s: 6,
        clip_length: 2,
        ..ExperimentConfig::default()
    }
}

/// Full-model finite-difference check on a two-frame, two-object clip
/// drawn from the synthetic world. Returns the report; the max relative
/// error is expected to stay within 1e-4 in 64-bit mode.
pub fn micro_grad_check(eps: f64, seed: u64) -> TResult<crate::tensor::GradCheckReport> {
    use crate::synthetic::{generate_video, TaskKind, WorldConfig};
    let world = WorldConfig {
        task: TaskKind::OrderedSwap,
        seed,
        num_distractors: 0,
        ..WorldConfig::default()
    };
    let video = generate_video(&world, 0).expect("micro scene generation");
    let dims = ModelDims {
        frame_height: world.grid.0,
        frame_width: world.grid.1,
        input_channels: 3,
        num_object_classes: world.num_classes(),
        num_activities: world.num_activities(),
        label_mode: LabelMode::SingleLabel,
    };
    let mut model = OrnModel::<f64>::new(&micro_experiment_config(), &dims, seed ^ 0x5eed)?;
    // Check at a generic parameter point. At the literal init, zero biases
    // put ReLU kinks exactly at the evaluation point wherever a receptive
    // field is all-dead (pre-activation == bias == 0), and central
    // differences straddle the kink at any eps.
    {
        use rand::Rng;
        let mut jitter = ChaCha8Rng::seed_from_u64(seed ^ 0x6a1773);
        model.visit_mut(&mut |_, t| {
            for v in t.data.iter_mut() {
                *v += jitter.random_range(0.02..0.08) * if jitter.random_bool(0.5) { 1.0 } else { -1.0 };
            }
        });
    }

    // two frames from either end of the video: a genuine before/after pair
    let frame_indices = [0usize, video.frames.frames - 1];
    let fb = &video.frames;
    let hw = fb.height * fb.width;
    let mut frames = Vec::with_capacity(3 * 2 * hw);
    for c in 0..3 {
        for &fi in &frame_indices {
            let base = (c * fb.frames + fi) * hw;
            frames.extend(fb.data[base..base + hw].iter().map(|v| *v as f64 / 255.0));
        }
    }
    let annotations: Vec<&[InstanceAnnotation]> = frame_indices
        .iter()
        .map(|&fi| video.annotations[fi].as_slice())
        .collect();
    assert_eq!(annotations[0].len(), 2, "micro clip must have two objects");
    let t_primes = [None, Some(0)];
    let target = match video.label {
        crate::synthetic::VideoLabel::Single(l) => ActivityTarget::Single(l),
        _ => unreachable!(),
    };
    finite_difference_check(&model, &frames, &annotations, &t_primes, &target, eps)
}

/// Finite-difference check of the complete two-head loss against the
/// analytic gradients, over every parameter of the model. Frame-pair
/// sampling is held fixed by passing `t_primes` explicitly. Run on an
/// `OrnModel<f64>`; 32-bit finite differences are unreliable.
pub fn finite_difference_check(
    model: &OrnModel<f64>,
    frames: &[f64],
    annotations: &[&[InstanceAnnotation]],
    t_primes: &[Option<usize>],
    target: &ActivityTarget,
    eps: f64,
) -> TResult<crate::tensor::GradCheckReport> {
    let mut params = std::collections::BTreeMap::new();
    model.visit(&mut |name, t| {
        params.insert(name.to_string(), t.clone());
    });
    crate::tensor::check_gradients(&mut params, eps, |g, p| {
        let mut probe = model.clone();
        probe.visit_mut(&mut |name, t| {
            t.data.clone_from(&p[name].data);
        });
        let fwd = probe.forward_clip(g, frames, annotations, t_primes)?;
        probe.loss(g, &fwd, target, LossMode::Joint)
    })
}

/// Casts a model to another scalar type (used to run f64 gradient checks
/// on f32 training checkpoints).
pub fn cast_model<A: Scalar, B: Scalar>(m: &OrnModel<A>) -> TResult<OrnModel<B>> {
    let mut out = OrnModel::<B>::new(&m.cfg, &m.dims, 0)?;
    let mut source: std::collections::BTreeMap<String, Tensor<B>> = Default::default();
    m.visit(&mut |name, t| {
        source.insert(name.to_string(), t.cast::<B>());
    });
    out.visit_mut(&mut |name, t| {
        let src = source
            .get(name)
            .unwrap_or_else(|| panic!("missing param {name} while casting"));
        assert_eq!(src.shape, t.shape);
        t.data.clone_from(&src.data);
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::{BackboneConfig, BlockConfig, Inflation};
    use crate::synthetic::{generate_video, TaskKind, WorldConfig};

    pub(crate) fn micro_backbone() -> BackboneConfig {
        BackboneConfig {
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
        }
    }

    pub(crate) fn micro_config() -> ExperimentConfig {
        ExperimentConfig {
            backbone: micro_backbone(),
            descriptor: crate::config::DescriptorDims {
                mask_grid: 6,
                shape_hidden: 6,
                d_b: 4,
            },
            relation_hidden: 8,
            relation_dim: 8,
            d_r: 6,
            d_s: 6,
            clip_length: 3,
            ..ExperimentConfig::default()
        }
    }

    fn micro_dims() -> ModelDims {
        ModelDims {
            frame_height: 32,
            frame_width: 32,
            input_channels: 3,
            num_object_classes: 6,
            num_activities: 2,
            label_mode: LabelMode::SingleLabel,
        }
    }

    #[test]
    fn forward_produces_valid_probabilities() {
        let cfg = micro_config();
        let dims = micro_dims();
        let model = OrnModel::<f32>::new(&cfg, &dims, 7).unwrap();
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 3,
            ..WorldConfig::default()
        };
        let video = generate_video(&world, 0).unwrap();
        let l = 3usize;
        let frames: Vec<f32> = {
            // first 3 frames of the video block
            let fb = &video.frames;
            let mut out = Vec::new();
            for c in 0..3 {
                for t in 0..l {
                    for i in 0..fb.height * fb.width {
                        out.push(fb.data[(c * fb.frames + t) * fb.height * fb.width + i] as f32 / 255.0);
                    }
                }
            }
            out
        };
        let anns: Vec<&[InstanceAnnotation]> =
            video.annotations[..l].iter().map(|v| v.as_slice()).collect();
        let mut g = Graph::<f32>::new();
        let fwd = model
            .forward_clip(&mut g, &frames, &anns, &[None, Some(0), Some(1)])
            .unwrap();
        let probs = fwd.probabilities(&g, LabelMode::SingleLabel);
        assert_eq!(probs.len(), 2);
        let sum: f32 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-5);
        assert!(!fwd.aux_logits.is_empty());

        let loss = model
            .loss(&mut g, &fwd, &ActivityTarget::Single(0), LossMode::Joint)
            .unwrap();
        assert!(g.scalar(loss).is_finite());
        g.backward(loss).unwrap();
        let grads = g.param_grads();
        assert!(!grads.is_empty());
        // every head of the full model receives gradient somewhere
        let names: Vec<String> = grads.iter().map(|(n, _)| n.clone()).collect();
        assert!(names.iter().any(|n| n.starts_with("backbone.shared")));
        assert!(names.iter().any(|n| n.starts_with("backbone.object")));
        assert!(names.iter().any(|n| n.starts_with("backbone.activity")));
        assert!(names.iter().any(|n| n.starts_with("h_theta")));
        assert!(names.iter().any(|n| n.starts_with("f_phi")));
        assert!(names.iter().any(|n| n.starts_with("f_gamma")));
        assert!(names.iter().any(|n| n.starts_with("mask_embed")));
    }

    #[test]
    fn activity_only_model_has_no_object_gradients() {
        let mut cfg = micro_config();
        cfg.model_kind = ModelKind::ActivityOnly;
        let dims = micro_dims();
        let model = OrnModel::<f32>::new(&cfg, &dims, 7).unwrap();
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 4,
            ..WorldConfig::default()
        };
        let video = generate_video(&world, 0).unwrap();
        let l = 3usize;
        let fb = &video.frames;
        let mut frames = Vec::new();
        for c in 0..3 {
            for t in 0..l {
                for i in 0..fb.height * fb.width {
                    frames.push(fb.data[(c * fb.frames + t) * fb.height * fb.width + i] as f32 / 255.0);
                }
            }
        }
        let anns: Vec<&[InstanceAnnotation]> =
            video.annotations[..l].iter().map(|v| v.as_slice()).collect();
        let mut g = Graph::<f32>::new();
        let fwd = model
            .forward_clip(&mut g, &frames, &anns, &[None, Some(0), Some(1)])
            .unwrap();
        assert!(fwd.y2.is_none());
        let loss = model
            .loss(&mut g, &fwd, &ActivityTarget::Single(1), LossMode::Joint)
            .unwrap();
        g.backward(loss).unwrap();
        let names: Vec<String> = g.param_grads().into_iter().map(|(n, _)| n).collect();
        assert!(names.iter().all(|n| !n.starts_with("h_theta")
            && !n.starts_with("f_phi")
            && !n.starts_with("mask_embed")
            && !n.starts_with("backbone.object")));
        assert!(names.iter().any(|n| n.starts_with("backbone.activity")));
    }

    #[test]
    fn object_head_only_loss_freezes_activity_stream() {
        let cfg = micro_config();
        let dims = micro_dims();
        let model = OrnModel::<f32>::new(&cfg, &dims, 9).unwrap();
        let world = WorldConfig {
            task: TaskKind::OrderedSwap,
            seed: 5,
            ..WorldConfig::default()
        };
        let video = generate_video(&world, 0).unwrap();
        let l = 3usize;
        let fb = &video.frames;
        let mut frames = Vec::new();
        for c in 0..3 {
            for t in 0..l {
                for i in 0..fb.height * fb.width {
                    frames.push(fb.data[(c * fb.frames + t) * fb.height * fb.width + i] as f32 / 255.0);
                }
            }
        }
        let anns: Vec<&[InstanceAnnotation]> =
            video.annotations[..l].iter().map(|v| v.as_slice()).collect();
        let mut g = Graph::<f32>::new();
        let fwd = model
            .forward_clip(&mut g, &frames, &anns, &[None, Some(0), Some(1)])
            .unwrap();
        let loss = model
            .loss(
                &mut g,
                &fwd,
                &ActivityTarget::Single(0),
                LossMode::ObjectHeadOnly,
            )
            .unwrap();
        g.backward(loss).unwrap();
        let names: Vec<String> = g.param_grads().into_iter().map(|(n, _)| n).collect();
        assert!(names
            .iter()
            .all(|n| !n.starts_with("backbone.activity") && !n.starts_with("f_gamma") && n != "heads.w.w"));
        assert!(names.iter().any(|n| n.starts_with("backbone.shared")));
        assert!(names.iter().any(|n| n.starts_with("h_theta")));
    }
}
