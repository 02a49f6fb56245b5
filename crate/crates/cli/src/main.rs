//! `orn` — experiment harness for object-level relational video
//! recognition on synthetic interaction benchmarks.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use orn_core::ablate::{ablation_grid, inflation_table_rows, AblationAxis};
use orn_core::checkpoint;
use orn_core::config::{ExperimentConfig, ModelKind, Seeds};
use orn_core::context::ContextAggregation;
use orn_core::dataset::{load_dataset, write_dataset, Dataset};
use orn_core::descriptors::FeatureSubset;
use orn_core::evaluate::evaluate;
use orn_core::graphexport::{export_interaction_graph, to_dot};
use orn_core::model::micro_grad_check;
use orn_core::reasoning::{FPhiKind, PairingMode};
use orn_core::synthetic::{generate, GeneratedVideo, TaskKind, WorldConfig};
use orn_core::train::train;
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "orn",
    version,
    about = "Object-level relational reasoning for video activity recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interaction dataset (manifest + shards)
    GenData(GenDataArgs),
    /// Train a model on a generated dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint with multi-clip aggregation
    Eval(EvalArgs),
    /// Run an ablation grid over configuration axes
    Ablate(AblateArgs),
    /// Export the learned interaction graph for one activity class
    ExportGraph(ExportGraphArgs),
    /// Finite-difference gradient check of the full two-head loss
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// World config JSON; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the world seed
    #[arg(long)]
    seed: Option<u64>,
    /// Task: ordered_swap | touch | state_change | appear_disappear
    #[arg(long)]
    task: Option<String>,
    /// Number of videos
    #[arg(long, default_value_t = 2500)]
    count: usize,
    /// Output directory
    #[arg(long, default_value = "data")]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config JSON; defaults are used when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest produced by gen-data
    #[arg(long)]
    data: PathBuf,
    /// Overrides every seed in the config (init/train/eval derived)
    #[arg(long)]
    seed: Option<u64>,
    /// Fraction of videos held out for validation
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Output directory (checkpoint, metrics CSV, resolved config)
    #[arg(long, default_value = "runs/run0")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint file
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset manifest
    #[arg(long)]
    data: PathBuf,
    /// Clips aggregated per video
    #[arg(long, default_value_t = 10)]
    clips: usize,
    /// Evaluation seed (defaults to the one in the checkpoint config)
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate on time-reversed videos instead
    #[arg(long, default_value_t = false)]
    reversed: bool,
}

#[derive(Args)]
struct AblateArgs {
    /// Base experiment config JSON; defaults when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest
    #[arg(long)]
    data: PathBuf,
    /// Axes: clique | mode | fphi | features | inflation | aggregation | model
    #[arg(long = "axis")]
    axes: Vec<String>,
    /// Comma-separated training seeds
    #[arg(long, default_value = "1,2,3")]
    seeds: String,
    /// Fraction of videos held out for validation
    #[arg(long, default_value_t = 0.2)]
    val_fraction: f64,
    /// Output directory
    #[arg(long, default_value = "runs/ablation")]
    out: PathBuf,
}

#[derive(Args)]
struct ExportGraphArgs {
    /// Checkpoint file
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset manifest
    #[arg(long)]
    data: PathBuf,
    /// Activity class whose clips are accumulated
    #[arg(long)]
    class: usize,
    /// Minimum normalized edge weight kept
    #[arg(long, default_value_t = 0.0)]
    threshold: f64,
    /// Output directory for graph.dot / graph.json
    #[arg(long, default_value = "runs/graph")]
    out: PathBuf,
}

#[derive(Args)]
struct GradCheckArgs {
    /// Central-difference step
    #[arg(long, default_value_t = 5e-5)]
    eps: f64,
    /// Scene/parameter seed
    #[arg(long, default_value_t = 17)]
    seed: u64,
    /// Maximum relative error tolerated
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Ablate(args) => run_ablate(args),
        Command::ExportGraph(args) => run_export(args),
        Command::GradCheck(args) => run_grad_check(args),
    }
}

fn parse_task(s: &str) -> Result<TaskKind> {
    Ok(match s {
        "ordered_swap" => TaskKind::OrderedSwap,
        "touch" => TaskKind::Touch,
        "state_change" => TaskKind::StateChange,
        "appear_disappear" => TaskKind::AppearDisappear,
        other => bail!("unknown task {other}"),
    })
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut world: WorldConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).context("reading world config")?)?,
        None => WorldConfig::default(),
    };
    if let Some(seed) = args.seed {
        world.seed = seed;
    }
    if let Some(task) = &args.task {
        world.task = parse_task(task)?;
    }
    let videos = generate(&world, args.count)?;
    let manifest = write_dataset(&args.out, &world, &videos)?;
    println!(
        "wrote {} videos ({:?}, seed {}) to {}",
        videos.len(),
        world.task,
        world.seed,
        manifest.display()
    );
    Ok(())
}

fn split_dataset(dataset: &Dataset, val_fraction: f64) -> Result<(&[GeneratedVideo], &[GeneratedVideo])> {
    if !(0.0..1.0).contains(&val_fraction) {
        bail!("val fraction must be in [0, 1)");
    }
    let n_val = ((dataset.videos.len() as f64) * val_fraction).round() as usize;
    let n_train = dataset.videos.len() - n_val;
    if n_train == 0 || n_val == 0 {
        bail!(
            "split leaves an empty side: {} train / {} val",
            n_train,
            n_val
        );
    }
    Ok((&dataset.videos[..n_train], &dataset.videos[n_train..]))
}

fn load_experiment_config(path: &Option<PathBuf>) -> Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).context("reading experiment config")?)?,
        None => ExperimentConfig::default(),
    })
}

fn run_train(args: TrainArgs) -> Result<()> {
    let mut cfg = load_experiment_config(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seeds = Seeds {
            init: seed,
            train: seed ^ 0x7261696e,
            eval: seed ^ 0x6576616c,
        };
    }
    let dataset = load_dataset(&args.data)?;
    let (train_videos, val_videos) = split_dataset(&dataset, args.val_fraction)?;
    fs::create_dir_all(&args.out)?;
    // capture the resolved config next to the run artifacts
    fs::write(
        args.out.join("config.json"),
        serde_json::to_string_pretty(&cfg)?,
    )?;
    let report = train(&cfg, &dataset.world, train_videos, val_videos, &args.out)?;
    println!(
        "trained {} epochs; best epoch {} with val metric {:.4}",
        report.epochs_run, report.best_epoch, report.best_val_metric
    );
    println!(
        "final val: top1 {:.4}, mAP {:.4} (checkpoint {})",
        report.final_val.top1,
        report.final_val.map,
        report.checkpoint_path.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let (model, meta) = checkpoint::load_model::<f32>(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let videos: Vec<GeneratedVideo> = if args.reversed {
        dataset
            .videos
            .iter()
            .map(|v| orn_core::synthetic::time_reverse(&dataset.world, v))
            .collect()
    } else {
        dataset.videos.clone()
    };
    let eval_seed = args.seed.unwrap_or(model.cfg.seeds.eval);
    let outcome = evaluate(&model, &videos, args.clips, eval_seed)?;
    println!(
        "{} videos, {} clips each{}: top1 {:.4}, mAP {:.4}, loss {:.4} (checkpoint from epoch {})",
        videos.len(),
        args.clips,
        if args.reversed { " (time-reversed)" } else { "" },
        outcome.top1,
        outcome.map,
        outcome.mean_loss,
        meta.best_epoch
    );
    Ok(())
}

fn parse_axis(name: &str) -> Result<AblationAxis> {
    Ok(match name {
        "clique" => AblationAxis::CliqueSize(vec![1, 2, 3]),
        "mode" => AblationAxis::PairingMode(vec![PairingMode::InterFrame, PairingMode::IntraFrame]),
        "fphi" => AblationAxis::FPhiKind(vec![FPhiKind::Recurrent, FPhiKind::Mlp]),
        "features" => AblationAxis::FeatureSubset(vec![
            FeatureSubset::all(),
            FeatureSubset::only_appearance(),
            FeatureSubset::only_shape(),
            FeatureSubset::only_class(),
        ]),
        "inflation" => AblationAxis::InflationPattern(inflation_table_rows()),
        "aggregation" => AblationAxis::Aggregation(vec![
            ContextAggregation::SumStates,
            ContextAggregation::MeanPool,
        ]),
        "model" => AblationAxis::ModelKind(vec![ModelKind::Full, ModelKind::ActivityOnly]),
        other => bail!("unknown axis {other}"),
    })
}

fn run_ablate(args: AblateArgs) -> Result<()> {
    let cfg = load_experiment_config(&args.config)?;
    let dataset = load_dataset(&args.data)?;
    let (train_videos, val_videos) = split_dataset(&dataset, args.val_fraction)?;
    let axes: Vec<AblationAxis> = args
        .axes
        .iter()
        .map(|a| parse_axis(a))
        .collect::<Result<_>>()?;
    if axes.is_empty() {
        bail!("at least one --axis required (clique | mode | fphi | features | inflation | aggregation | model)");
    }
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| s.trim().parse::<u64>().context("parsing seed"))
        .collect::<Result<_>>()?;
    let results = ablation_grid(
        &cfg,
        &axes,
        &seeds,
        &dataset.world,
        train_videos,
        val_videos,
        &args.out,
    )?;
    println!("{} runs complete; results in {}", results.len(), args.out.join("ablation.csv").display());
    for r in &results {
        println!(
            "  {} seed {}: top1 {:.4}, mAP {:.4}",
            r.run_id, r.seed, r.val_top1, r.val_map
        );
    }
    Ok(())
}

fn run_export(args: ExportGraphArgs) -> Result<()> {
    let (model, _) = checkpoint::load_model::<f32>(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let graph = export_interaction_graph(
        &model,
        &dataset.world,
        &dataset.videos,
        args.class,
        args.threshold,
        model.cfg.seeds.eval,
    )?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("graph.dot"), to_dot(&graph))?;
    fs::write(
        args.out.join("graph.json"),
        serde_json::to_string_pretty(&graph)?,
    )?;
    println!(
        "exported {} edges for activity class {} to {}",
        graph.edges.len(),
        args.class,
        args.out.display()
    );
    for e in graph.edges.iter().take(5) {
        println!("  {} -> {}: {:.4}", e.from, e.to, e.weight);
    }
    Ok(())
}

fn run_grad_check(args: GradCheckArgs) -> Result<()> {
    let report = micro_grad_check(args.eps, args.seed)?;
    println!(
        "max relative error {:.3e} over {} coordinates (worst: {:?})",
        report.max_rel_error, report.coordinates_checked, report.worst
    );
    if report.max_rel_error > args.tolerance {
        bail!(
            "gradient check failed: {:.3e} > {:.1e}",
            report.max_rel_error,
            args.tolerance
        );
    }
    println!("gradient check passed (tolerance {:.1e})", args.tolerance);
    Ok(())
}
