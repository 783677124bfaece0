//! `tsselect`: generate a synthetic world, train the selector, rank a hub
//! for a dataset, evaluate checkpoints and check gradients.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand, ValueEnum};
use tsselect::diagnostics::Component;
use tsselect::numerics::Dtype;
use tsselect::trainer::LossOrientation;

use commands::{CliResult, DatasetRef, EvalArgs, Partition, RankArgs, Stub};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "tsselect", version, about = "Rank pre-trained time-series forecasters without fine-tuning")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Parameter precision during training.
    #[arg(long, global = true, value_enum)]
    precision: Option<PrecisionArg>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    PredictionWeighted,
    TruthWeighted,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum StubArg {
    Oracle,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Generate datasets, model cards and oracle meta-dataset.
    GenSynthetic {
        #[arg(long)]
        n_datasets: Option<usize>,
        /// Hub size.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        family_size: Option<usize>,
    },
    /// Train the selector on a world's meta-dataset.
    Train {
        /// World directory written by gen-synthetic.
        #[arg(long)]
        world: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        /// Plain mini-batch training instead of meta-learning.
        #[arg(long)]
        no_meta_learning: bool,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum)]
        loss_orientation: Option<OrientationArg>,
        #[arg(long)]
        holdout: Option<usize>,
    },
    /// Rank the hub for one dataset and horizon.
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        world: PathBuf,
        /// Dataset id within the world.
        #[arg(long, conflicts_with = "csv", required_unless_present = "csv")]
        dataset: Option<String>,
        /// External wide CSV instead of a world dataset.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        horizon: usize,
        /// Also write the K x P cross-attention matrix and expert weights.
        #[arg(long)]
        export_attention: bool,
    },
    /// Evaluate a checkpoint (or a stub predictor) on a partition.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        world: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        partition: PartitionArg,
        #[arg(long, value_enum)]
        stub: Option<StubArg>,
        /// Resamples for the random stub.
        #[arg(long, default_value_t = 1000)]
        resamples: usize,
    },
    /// Compare analytic and finite-difference gradients.
    Gradcheck {
        /// Restrict to these components (repeatable).
        #[arg(long)]
        component: Vec<String>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn build_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(p) = cli.precision {
        cfg.train.precision = match p {
            PrecisionArg::F32 => Dtype::F32,
            PrecisionArg::F64 => Dtype::F64,
        };
    }
    match &cli.command {
        Command::GenSynthetic {
            n_datasets,
            k,
            family_size,
        } => {
            if let Some(n) = n_datasets {
                cfg.world.n_datasets = *n;
            }
            if let Some(k) = k {
                cfg.world.k = *k;
            }
            if let Some(f) = family_size {
                cfg.world.family_size = *f;
            }
        }
        Command::Train {
            epochs,
            no_meta_learning,
            lambda,
            loss_orientation,
            holdout,
            ..
        } => {
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if *no_meta_learning {
                cfg.train.meta_learning = false;
            }
            if let Some(l) = lambda {
                cfg.train.lambda = *l;
            }
            if let Some(o) = loss_orientation {
                cfg.train.loss_orientation = match o {
                    OrientationArg::PredictionWeighted => LossOrientation::PredictionWeighted,
                    OrientationArg::TruthWeighted => LossOrientation::TruthWeighted,
                };
            }
            if let Some(h) = holdout {
                cfg.holdout = *h;
            }
        }
        Command::Gradcheck {
            instances,
            inject_fault,
            ..
        } => {
            if let Some(n) = instances {
                cfg.gradcheck.instances = *n;
            }
            cfg.gradcheck.inject_fault |= *inject_fault;
        }
        Command::Rank { .. } | Command::Eval { .. } => {}
    }
    Ok(cfg.resolve())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = build_config(&cli)?;
    match cli.command {
        Command::GenSynthetic { .. } => commands::gen_synthetic(&cfg),
        Command::Train { world, .. } => commands::train_cmd(&cfg, &world),
        Command::Rank {
            checkpoint,
            world,
            dataset,
            csv,
            horizon,
            export_attention,
        } => {
            let dataset = match (dataset, csv) {
                (Some(id), _) => DatasetRef::Id(id),
                (None, Some(p)) => DatasetRef::Csv(p),
                (None, None) => return Err("rank needs --dataset or --csv".into()),
            };
            commands::rank_cmd(
                &cfg,
                &RankArgs {
                    world: &world,
                    checkpoint: &checkpoint,
                    dataset,
                    horizon,
                    export_attention,
                },
            )
        }
        Command::Eval {
            checkpoint,
            world,
            partition,
            stub,
            resamples,
        } => commands::eval_cmd(
            &cfg,
            &EvalArgs {
                world: &world,
                checkpoint: checkpoint.as_deref(),
                partition: match partition {
                    PartitionArg::Train => Partition::Train,
                    PartitionArg::Val => Partition::Val,
                    PartitionArg::Test => Partition::Test,
                    PartitionArg::All => Partition::All,
                },
                stub: stub.map(|s| match s {
                    StubArg::Oracle => Stub::Oracle,
                    StubArg::Random => Stub::Random,
                }),
                resamples,
            },
        ),
        Command::Gradcheck { component, .. } => {
            let components = component
                .iter()
                .map(|c| c.parse::<Component>().map_err(|e| e.to_string()))
                .collect::<CliResult<Vec<_>>>()?;
            commands::gradcheck_cmd(&cfg, &components, &cfg.gradcheck)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
