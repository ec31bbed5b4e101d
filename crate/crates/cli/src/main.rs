//! `floorloc`: generate benchmark worlds, localize simulated queries, train
//! the crop embedder and sweep fusion settings, all from one JSON config.

mod commands;
mod config;
mod failure;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use floorloc_core::experiment::SweepParam;

use crate::config::RunConfig;
use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "floorloc", version, about = "Floorplan localization experiments")]
struct Cli {
    /// Run configuration (JSON); omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, created if needed.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Reseeds world generation, observation noise, mining and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the pool decide. Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Fusion weight override.
    #[arg(long, global = true)]
    w: Option<f64>,
    /// Candidate count override.
    #[arg(long, global = true)]
    x: Option<usize>,
    /// Crop side override, in meters.
    #[arg(long = "crop-m", global = true)]
    crop_m: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct MapArgs {
    /// Floorplan graymap (with JSON sidecar) instead of a generated world.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Query poses as CSV with `x,y,theta` columns.
    #[arg(long)]
    poses: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the benchmark map and its ground-truth poses.
    GenWorld,
    /// Cast ground-truth ray fans at every query pose.
    Cast {
        #[command(flatten)]
        map: MapArgs,
    },
    /// Simulate noisy observations at every query pose.
    Simulate {
        #[command(flatten)]
        map: MapArgs,
    },
    /// Localize each observation and, when ground truth is known, score it.
    Localize {
        #[command(flatten)]
        map: MapArgs,
        /// Observations (JSON lines) instead of simulating them at the poses.
        #[arg(long)]
        observations: Option<PathBuf>,
        /// Trained linear crop embedder for the geometry side.
        #[arg(long)]
        embedder: Option<PathBuf>,
        /// Write probability maps and candidate tables for this many queries.
        #[arg(long, default_value_t = 1)]
        dump: usize,
    },
    /// Mine positive and negative crops for contrastive training.
    Mine,
    /// Train the linear crop embedder and report held-out retrieval.
    TrainEmbedder,
    /// Recall report for predicted against ground-truth poses.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Benchmark recall for each value of one setting.
    Sweep {
        #[arg(long, value_enum)]
        param: Param,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Param {
    W,
    X,
    CropM,
}

impl From<Param> for SweepParam {
    fn from(p: Param) -> Self {
        match p {
            Param::W => SweepParam::W,
            Param::X => SweepParam::X,
            Param::CropM => SweepParam::CropM,
        }
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    let d = &mut cfg.experiment.disambig;
    if let Some(w) = cli.w {
        d.w = w;
    }
    if let Some(x) = cli.x {
        d.x = x;
    }
    if let Some(side) = cli.crop_m {
        cfg.experiment.crop.side_m = side;
    }
    let inputs = &mut cfg.inputs;
    let set = |slot: &mut Option<PathBuf>, flag: &Option<PathBuf>| {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    };
    match &cli.command {
        Command::Cast { map } | Command::Simulate { map } => {
            set(&mut inputs.map, &map.map);
            set(&mut inputs.poses, &map.poses);
        }
        Command::Localize {
            map,
            observations,
            embedder,
            ..
        } => {
            set(&mut inputs.map, &map.map);
            set(&mut inputs.poses, &map.poses);
            set(&mut inputs.observations, observations);
            set(&mut inputs.embedder, embedder);
        }
        Command::Eval { predictions, truth } => {
            set(&mut inputs.predictions, predictions);
            set(&mut inputs.truth, truth);
        }
        _ => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = resolve(cli)?;
    let out = &cli.out;
    fs::create_dir_all(out).map_err(|e| Failure::from_io(out, e))?;
    cfg.echo(out)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Failure::runtime(format!("thread pool: {e}")))?;
    pool.install(|| match &cli.command {
        Command::GenWorld => commands::gen_world(&cfg, out),
        Command::Cast { .. } => commands::cast(&cfg, out),
        Command::Simulate { .. } => commands::simulate(&cfg, out),
        Command::Localize { dump, .. } => commands::localize(&cfg, out, *dump),
        Command::Mine => commands::mine(&cfg, out),
        Command::TrainEmbedder => commands::train_embedder(&cfg, out),
        Command::Eval { .. } => commands::eval(&cfg, out),
        Command::Sweep { param, values } => commands::run_sweep(&cfg, out, (*param).into(), values),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
