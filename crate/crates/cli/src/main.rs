//! Command-line entry point for the reliability sweep.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rootscan::pipeline::{run_pipeline, run_single_stage, ArtifactManifest, PipelineConfig, Stage, StageStatus};
use rootscan::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum StageArg {
    Profile,
    Metrics,
    Dataset,
    Train,
    Evaluate,
    Heatmap,
    Curves,
    Cost,
    Validate,
    All,
}

impl StageArg {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            StageArg::Profile => Stage::Profile,
            StageArg::Metrics => Stage::Metrics,
            StageArg::Dataset => Stage::Dataset,
            StageArg::Train => Stage::Train,
            StageArg::Evaluate => Stage::Evaluate,
            StageArg::Heatmap => Stage::Heatmap,
            StageArg::Curves => Stage::Curves,
            StageArg::Cost => Stage::Cost,
            StageArg::Validate => Stage::Validate,
            StageArg::All => return None,
        })
    }
}

/// Sweeps the two-parameter Weierstrass family over an (alpha, beta) grid,
/// profiles early dynamics and trains short-horizon reliability predictors.
///
/// Exit status: 0 on success, 2 for configuration errors, 1 for runtime
/// failures.
#[derive(Debug, Parser)]
#[command(name = "rootscan", version)]
struct Cli {
    /// TOML configuration; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Stage to run; upstream outputs must already exist unless `all`.
    #[arg(long, value_enum, default_value_t = StageArg::All)]
    stage: StageArg,

    /// Overrides `global_seed`.
    #[arg(long)]
    seed: Option<u64>,

    /// Output directory; defaults to `$ROOTSCAN_OUT/<preset>` when the
    /// variable is set, otherwise to the config's `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long)]
    workers: Option<usize>,

    /// Applies the desk-scale preset (20 x 20 grid, 64 runs, 120 iterations).
    #[arg(long)]
    desk: bool,

    /// Root for default output directories.
    #[arg(long, env = "ROOTSCAN_OUT", hide_env_values = true)]
    out_root: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<PipelineConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if cli.desk {
        config = config.into_desk();
    }
    if let Some(seed) = cli.seed {
        config.global_seed = seed;
    }
    if let Some(w) = cli.workers {
        config.workers = Some(w);
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    } else if let Some(root) = &cli.out_root {
        let leaf = config.output_dir.file_name().map(PathBuf::from).unwrap_or_else(|| "default".into());
        config.output_dir = root.join(leaf);
    }
    config.validate()?;
    Ok(config)
}

fn report(manifest: &ArtifactManifest) {
    for r in &manifest.stages {
        let status = match r.status {
            StageStatus::Ran => "ran",
            StageStatus::Cached => "cached",
        };
        println!("{:<9} {:<6} {:>8.2}s  {} files", r.stage.name(), status, r.seconds, r.outputs.len());
    }
    println!("output: {}", manifest.config.output_dir.display());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(&cli).and_then(|config| match cli.stage.stage() {
        Some(stage) => run_single_stage(&config, stage),
        None => run_pipeline(&config),
    });
    match result {
        Ok(manifest) => {
            report(&manifest);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
