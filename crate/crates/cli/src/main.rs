//! `fieldpipe` command-line entry point.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fieldpipe::Split;

use crate::config::{PipelineConfig, Profile};

#[derive(Debug, Parser)]
#[command(name = "fieldpipe", version, about = "Field boundary pipeline: NDVI stacks, masks, tiles, metrics and polygons")]
struct Cli {
    /// Pipeline configuration file.
    #[arg(long, global = true, default_value = "fieldpipe.toml")]
    config: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Overrides the split seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the execution plan without writing files.
    #[arg(long, global = true)]
    dry_run: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Median-composite each date and write the 3-band NDVI stack.
    NdviStack,
    /// Rasterise the parcel file onto the NDVI stack grid.
    MakeMask,
    /// Cut image and mask into tiles and write the manifest.
    Tile,
    /// Reassign splits in an existing manifest.
    Split,
    /// Score tile predictions against their masks.
    Evaluate(EvaluateArgs),
    /// Turn a prediction raster into field polygons and size statistics.
    Postprocess(PostprocessArgs),
    /// Field size statistics for an existing polygon file.
    Stats(StatsArgs),
    /// Write a synthetic scene, parcel file and config.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory holding `{tile_id}_pred.tif` files.
    #[arg(long)]
    predictions: PathBuf,
    /// Restrict scoring to one split.
    #[arg(long)]
    split: Option<Split>,
    /// Manifest path; defaults to the work dir manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Report path; defaults to `iou_report.json` in the work dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PostprocessArgs {
    /// 3-band probability raster or 1-band class raster.
    #[arg(long)]
    prediction: PathBuf,
    /// Output directory; defaults to the work dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Field polygons; defaults to `fields.geojson` in the work dir.
    #[arg(long)]
    fields: Option<PathBuf>,
    /// Output directory; defaults to the work dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Scene width and height in pixels.
    #[arg(long, default_value_t = 1024)]
    size: usize,
    #[arg(long, value_enum, default_value = "sentinel2")]
    profile: ProfileArg,
    /// Field grid rows.
    #[arg(long, default_value_t = 4)]
    rows: usize,
    /// Field grid columns.
    #[arg(long, default_value_t = 5)]
    cols: usize,
    #[arg(long, default_value_t = 1)]
    scenes_per_date: usize,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ProfileArg {
    Sentinel2,
    Planetscope,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Sentinel2 => Profile::Sentinel2,
            ProfileArg::Planetscope => Profile::Planetscope,
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        anyhow::ensure!(n >= 1, "--jobs must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting worker pool")?;
    }
    if let Command::Synth(args) = &cli.command {
        return commands::synth(
            &args.out,
            args.size,
            args.profile.into(),
            (args.rows, args.cols),
            args.scenes_per_date,
            cli.seed.unwrap_or(0),
            cli.dry_run,
        );
    }
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let dry = cli.dry_run;
    match cli.command {
        Command::NdviStack => commands::ndvi_stack(&cfg, dry),
        Command::MakeMask => commands::make_mask(&cfg, dry),
        Command::Tile => commands::tile(&cfg, dry),
        Command::Split => commands::split(&cfg, dry),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a.predictions, a.split, a.manifest, a.out, dry),
        Command::Postprocess(a) => commands::postprocess(&cfg, &a.prediction, a.out, dry),
        Command::Stats(a) => commands::stats(&cfg, a.fields, a.out, dry),
        Command::Synth(_) => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
