//! Experiment configuration: everything a run needs, serialized in full so
//! a checkpoint can embed the exact config that produced it.

use crate::backbone::BackboneConfig;
use crate::context::ContextAggregation;
use crate::descriptors::FeatureSubset;
use crate::reasoning::PairingConfig;
use crate::recognition::LabelMode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Two heads with object-level reasoning.
    Full,
    /// The activity head alone (frame-global baseline).
    ActivityOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorDims {
    /// Mask resize grid fed to the shape perceptron.
    pub mask_grid: usize,
    pub shape_hidden: usize,
    /// Shape embedding size d_b.
    pub d_b: usize,
}

impl Default for DescriptorDims {
    fn default() -> Self {
        DescriptorDims {
            mask_grid: 14,
            shape_hidden: 32,
            d_b: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    /// Parameter initialization.
    pub init: u64,
    /// Training-time stochastics: clip sampling, frame-pair sampling,
    /// batch shuffling.
    pub train: u64,
    /// Evaluation-time clip and pair sampling (per-clip derived).
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            init: 1,
            train: 2,
            eval: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model_kind: ModelKind,
    pub backbone: BackboneConfig,
    pub pairing: PairingConfig,
    pub context_aggregation: ContextAggregation,
    pub descriptor: DescriptorDims,
    /// Width of h_theta's two hidden layers.
    pub relation_hidden: usize,
    /// Relation output dimension H.
    pub relation_dim: usize,
    /// Object reasoning state size d_r.
    pub d_r: usize,
    /// Context state size d_s.
    pub d_s: usize,
    pub feature_subset: FeatureSubset,
    /// Objects kept per frame, by descending detection score.
    pub k_max: usize,
    /// Pooling grid for the pixel-cell ablation.
    pub pixel_grid: usize,
    /// Clip length L.
    pub clip_length: usize,
    pub batch_size: usize,
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub early_stopping_patience: usize,
    /// Epochs of object-head-only training before joint training.
    pub phase1_epochs: usize,
    /// Auxiliary targets as full distributions instead of hard argmax.
    pub soft_aux_targets: bool,
    pub seeds: Seeds,
    /// Clips aggregated per video at evaluation time.
    pub eval_clips: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model_kind: ModelKind::Full,
            backbone: BackboneConfig::default(),
            pairing: PairingConfig::default(),
            context_aggregation: ContextAggregation::SumStates,
            descriptor: DescriptorDims::default(),
            relation_hidden: 64,
            relation_dim: 64,
            d_r: 64,
            d_s: 64,
            feature_subset: FeatureSubset::all(),
            k_max: 8,
            pixel_grid: 7,
            clip_length: 4,
            batch_size: 16,
            optimizer: AdamConfig::default(),
            epochs: 30,
            early_stopping_patience: 5,
            phase1_epochs: 0,
            soft_aux_targets: false,
            seeds: Seeds::default(),
            eval_clips: 10,
        }
    }
}

/// Dataset-determined dimensions a model is built against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub frame_height: usize,
    pub frame_width: usize,
    pub input_channels: usize,
    pub num_object_classes: usize,
    pub num_activities: usize,
    pub label_mode: LabelMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = ExperimentConfig::default();
        let s = serde_json::to_string_pretty(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
    }
}
