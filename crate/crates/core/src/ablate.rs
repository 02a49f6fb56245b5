//! Ablation grid runner: cross-products of configuration axes, trained
//! over shared seeds, one CSV row per run per seed.

use crate::backbone::Inflation;
use crate::config::{ExperimentConfig, ModelKind, Seeds};
use crate::context::ContextAggregation;
use crate::descriptors::FeatureSubset;
use crate::reasoning::{FPhiKind, PairingMode};
use crate::synthetic::{GeneratedVideo, WorldConfig};
use crate::train::{train, TrainError};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    PairingMode(Vec<PairingMode>),
    CliqueSize(Vec<usize>),
    FPhiKind(Vec<FPhiKind>),
    FeatureSubset(Vec<FeatureSubset>),
    /// Inflation pattern over five canonical conv slots plus the
    /// aggregation choice, mapped onto the backbone's blocks.
    InflationPattern(Vec<InflationRow>),
    Aggregation(Vec<ContextAggregation>),
    /// Full model versus the activity-only baseline.
    ModelKind(Vec<ModelKind>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflationRow {
    /// Inflation for the five canonical slots (conv1..conv5).
    pub slots: [Inflation; 5],
    pub aggregation: ContextAggregation,
}

/// The fourteen kernel-inflation rows explored for the single-head
/// architecture study: pure 2-D/3-D/2.5-D stacks, output-side inflation
/// depth sweeps for both kernel types, and input-side inflations.
pub fn inflation_table_rows() -> Vec<InflationRow> {
    use ContextAggregation::{MeanPool, SumStates};
    use Inflation::{Full3d, Plain2d, Sep2p1d};
    let row = |slots: [Inflation; 5], aggregation| InflationRow { slots, aggregation };
    vec![
        row([Plain2d; 5], MeanPool),
        row([Plain2d; 5], SumStates),
        row([Full3d; 5], MeanPool),
        row([Sep2p1d; 5], MeanPool),
        row([Plain2d, Plain2d, Plain2d, Plain2d, Full3d], MeanPool),
        row([Plain2d, Plain2d, Plain2d, Full3d, Full3d], MeanPool),
        row([Plain2d, Plain2d, Full3d, Full3d, Full3d], MeanPool),
        row([Plain2d, Plain2d, Plain2d, Plain2d, Sep2p1d], MeanPool),
        row([Plain2d, Plain2d, Plain2d, Sep2p1d, Sep2p1d], MeanPool),
        row([Plain2d, Plain2d, Sep2p1d, Sep2p1d, Sep2p1d], MeanPool),
        row([Full3d, Plain2d, Plain2d, Plain2d, Plain2d], MeanPool),
        row([Full3d, Full3d, Plain2d, Plain2d, Plain2d], MeanPool),
        row([Sep2p1d, Plain2d, Plain2d, Plain2d, Plain2d], MeanPool),
        row([Sep2p1d, Sep2p1d, Plain2d, Plain2d, Plain2d], MeanPool),
    ]
}

/// Maps canonical slot i (of 5) onto a block index of an n-block backbone.
fn slot_to_block(slot: usize, n_blocks: usize) -> usize {
    if n_blocks == 1 {
        return 0;
    }
    ((slot as f64) * (n_blocks - 1) as f64 / 4.0).round() as usize
}

/// One concrete run of the grid: the base config with axis values applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRun {
    pub run_id: String,
    pub config: ExperimentConfig,
}

fn apply_axis(cfg: &ExperimentConfig, axis: &AblationAxis, index: usize) -> (String, ExperimentConfig) {
    let mut out = cfg.clone();
    let tag = match axis {
        AblationAxis::PairingMode(vals) => {
            out.pairing.mode = vals[index];
            format!("mode={:?}", vals[index])
        }
        AblationAxis::CliqueSize(vals) => {
            out.pairing.clique_size = vals[index];
            format!("clique={}", vals[index])
        }
        AblationAxis::FPhiKind(vals) => {
            out.pairing.f_phi_kind = vals[index];
            format!("fphi={:?}", vals[index])
        }
        AblationAxis::FeatureSubset(vals) => {
            out.feature_subset = vals[index];
            let s = vals[index];
            format!(
                "feat={}{}{}",
                if s.shape { "b" } else { "" },
                if s.appearance { "u" } else { "" },
                if s.class { "c" } else { "" }
            )
        }
        AblationAxis::InflationPattern(vals) => {
            let rowcfg = &vals[index];
            let n = out.backbone.blocks.len();
            for b in out.backbone.blocks.iter_mut() {
                b.inflation = Inflation::Plain2d;
            }
            for (slot, inf) in rowcfg.slots.iter().enumerate() {
                out.backbone.blocks[slot_to_block(slot, n)].inflation = *inf;
            }
            out.context_aggregation = rowcfg.aggregation;
            format!("inflation_row={index}")
        }
        AblationAxis::Aggregation(vals) => {
            out.context_aggregation = vals[index];
            format!("agg={:?}", vals[index])
        }
        AblationAxis::ModelKind(vals) => {
            out.model_kind = vals[index];
            format!("model={:?}", vals[index])
        }
    };
    (tag, out)
}

fn axis_len(axis: &AblationAxis) -> usize {
    match axis {
        AblationAxis::PairingMode(v) => v.len(),
        AblationAxis::CliqueSize(v) => v.len(),
        AblationAxis::FPhiKind(v) => v.len(),
        AblationAxis::FeatureSubset(v) => v.len(),
        AblationAxis::InflationPattern(v) => v.len(),
        AblationAxis::Aggregation(v) => v.len(),
        AblationAxis::ModelKind(v) => v.len(),
    }
}

/// Expands the cross-product of the axes over the base config.
pub fn expand_grid(base: &ExperimentConfig, axes: &[AblationAxis]) -> Vec<AblationRun> {
    let mut runs = vec![AblationRun {
        run_id: "base".to_string(),
        config: base.clone(),
    }];
    if axes.is_empty() {
        return runs;
    }
    runs.clear();
    let mut counters = vec![0usize; axes.len()];
    loop {
        let mut cfg = base.clone();
        let mut tags = Vec::new();
        for (axis, &idx) in axes.iter().zip(&counters) {
            let (tag, next) = apply_axis(&cfg, axis, idx);
            cfg = next;
            tags.push(tag);
        }
        runs.push(AblationRun {
            run_id: tags.join(","),
            config: cfg,
        });
        // odometer increment
        let mut i = axes.len();
        loop {
            if i == 0 {
                return runs;
            }
            i -= 1;
            counters[i] += 1;
            if counters[i] < axis_len(&axes[i]) {
                break;
            }
            counters[i] = 0;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationResult {
    pub run_id: String,
    pub seed: u64,
    pub val_top1: f64,
    pub val_map: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// Runs the grid: every configuration trained once per seed, sharing the
/// same data splits. Writes `ablation.csv` under `out_dir` (one row per
/// run per seed) and returns all results.
#[allow(clippy::too_many_arguments)]
pub fn ablation_grid(
    base: &ExperimentConfig,
    axes: &[AblationAxis],
    seeds: &[u64],
    world: &WorldConfig,
    train_videos: &[GeneratedVideo],
    val_videos: &[GeneratedVideo],
    out_dir: &Path,
) -> Result<Vec<AblationResult>, TrainError> {
    std::fs::create_dir_all(out_dir)?;
    let runs = expand_grid(base, axes);
    let mut results = Vec::with_capacity(runs.len() * seeds.len());
    let mut csv = String::from("run_id,seed,val_top1,val_mAP,best_epoch,epochs_run\n");
    for run in &runs {
        for (si, &seed) in seeds.iter().enumerate() {
            let mut cfg = run.config.clone();
            cfg.seeds = Seeds {
                init: seed,
                train: seed ^ 0x7261696e,
                eval: seed ^ 0x6576616c,
            };
            let run_dir = out_dir.join(format!("run_{}_{}", sanitize(&run.run_id), si));
            let report = train(&cfg, world, train_videos, val_videos, &run_dir)?;
            let r = AblationResult {
                run_id: run.run_id.clone(),
                seed,
                val_top1: report.final_val.top1,
                val_map: report.final_val.map,
                best_epoch: report.best_epoch,
                epochs_run: report.epochs_run,
            };
            let _ = writeln!(
                csv,
                "{},{},{:.6},{:.6},{},{}",
                r.run_id, r.seed, r.val_top1, r.val_map, r.best_epoch, r.epochs_run
            );
            results.push(r);
        }
    }
    std::fs::write(out_dir.join("ablation.csv"), csv)?;
    Ok(results)
}

fn sanitize(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '_' })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clique_axis_expands_to_three_runs() {
        let base = ExperimentConfig::default();
        let runs = expand_grid(&base, &[AblationAxis::CliqueSize(vec![1, 2, 3])]);
        assert_eq!(runs.len(), 3);
        assert_eq!(runs[0].config.pairing.clique_size, 1);
        assert_eq!(runs[2].config.pairing.clique_size, 3);
    }

    #[test]
    fn fourteen_inflation_rows() {
        let rows = inflation_table_rows();
        assert_eq!(rows.len(), 14);
        let runs = expand_grid(
            &ExperimentConfig::default(),
            &[AblationAxis::InflationPattern(rows)],
        );
        assert_eq!(runs.len(), 14);
        // distinct block-inflation assignments exist across the rows
        let distinct: std::collections::BTreeSet<String> = runs
            .iter()
            .map(|r| format!("{:?}{:?}", r.config.backbone.blocks, r.config.context_aggregation))
            .collect();
        assert!(distinct.len() >= 10, "rows should mostly differ: {}", distinct.len());
    }

    #[test]
    fn cross_product_of_two_axes() {
        let base = ExperimentConfig::default();
        let runs = expand_grid(
            &base,
            &[
                AblationAxis::CliqueSize(vec![1, 2]),
                AblationAxis::FPhiKind(vec![FPhiKind::Recurrent, FPhiKind::Mlp]),
            ],
        );
        assert_eq!(runs.len(), 4);
        let ids: Vec<&str> = runs.iter().map(|r| r.run_id.as_str()).collect();
        assert!(ids[0].contains("clique=1") && ids[0].contains("fphi=Recurrent"));
        assert!(ids[3].contains("clique=2") && ids[3].contains("fphi=Mlp"));
    }

    #[test]
    fn slot_mapping_is_monotone() {
        for n in 1..=6 {
            let blocks: Vec<usize> = (0..5).map(|s| slot_to_block(s, n)).collect();
            for w in blocks.windows(2) {
                assert!(w[0] <= w[1]);
            }
            assert_eq!(blocks[0], 0);
            assert_eq!(blocks[4], n - 1);
        }
    }
}
