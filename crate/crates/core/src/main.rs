use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use affinity_core::data::SyntheticSpec;
use affinity_core::nn::checkpoint;
use affinity_core::runner::{
    self, dump_embeddings, evaluate, prepare, run_domain_adaptation, sweep, sweep_csv, AdaptMode, ExperimentConfig,
    SweepAxis,
};
use affinity_core::{Error, Result};

#[derive(Parser)]
#[command(name = "affinity", version, about = "Train and audit group-invariant representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    MnistInverted,
    Adult,
    Synthetic,
    Adapt,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config used when no --config is given.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// Run only this seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Dataset root directory.
    #[arg(long, env = "AFFINITY_DATA_ROOT")]
    data_root: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Lambda,
    RepWidth,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    SourceOnly,
    AugmentationBaseline,
    Affinity,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write run reports.
    Train(Common),
    /// Multi-seed runs over a grid of lambda or representation widths.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Few-shot domain adaptation on rotated digits.
    Adapt {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "affinity")]
        mode: Mode,
        #[arg(long, default_value_t = 200)]
        n_target: usize,
    },
    /// Evaluate a saved network on the config's evaluation split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write representation vectors with labels and groups as CSV.
    DumpEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Dump the training split instead of the evaluation split.
        #[arg(long)]
        train_split: bool,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, c.preset) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(Preset::MnistInverted)) => ExperimentConfig::mnist_inverted(),
        (None, Some(Preset::Adult)) => ExperimentConfig::adult(),
        (None, Some(Preset::Synthetic)) => ExperimentConfig::synthetic(SyntheticSpec::default()),
        (None, Some(Preset::Adapt)) => ExperimentConfig::domain_adaptation(AdaptMode::Affinity),
        (None, None) => return Err(Error::Config("pass --config <file> or --preset <name>".into())),
    };
    if let Some(seed) = c.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(lambda) = c.lambda {
        cfg.affinity.lambda = lambda;
    }
    if let Some(epochs) = c.epochs {
        cfg.epochs = epochs;
    }
    if c.out_dir.is_some() {
        cfg.out_dir = c.out_dir.clone();
    }
    if c.data_root.is_some() {
        cfg.data_root = c.data_root.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(common) => {
            let cfg = load_config(&common)?;
            for report in runner::run_experiment(&cfg)? {
                print!("{}", report.to_key_values());
            }
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load_config(&common)?;
            let axis = match axis {
                Axis::Lambda => SweepAxis::Lambda,
                Axis::RepWidth => SweepAxis::RepWidth,
            };
            let cells = sweep(&cfg, axis, &values)?;
            for cell in &cells {
                for (seed, err) in &cell.errors {
                    eprintln!("value {} seed {seed}: {err}", cell.value);
                }
            }
            print!("{}", sweep_csv(axis, &cells));
        }
        Command::Adapt { common, mode, n_target } => {
            let mut common = common;
            if common.config.is_none() && common.preset.is_none() {
                common.preset = Some(Preset::Adapt);
            }
            let cfg = load_config(&common)?;
            let mode = match mode {
                Mode::SourceOnly => AdaptMode::SourceOnly,
                Mode::AugmentationBaseline => AdaptMode::AugmentationBaseline,
                Mode::Affinity => AdaptMode::Affinity,
            };
            for &seed in &cfg.seeds {
                print!("{}", run_domain_adaptation(&cfg, mode, n_target, seed)?.to_key_values());
            }
        }
        Command::Evaluate { common, checkpoint: path } => {
            let cfg = load_config(&common)?;
            let net = checkpoint::load(&path)?;
            let seed = cfg.seeds[0];
            let data = prepare(&cfg, seed)?;
            let eval = evaluate(&net, &data.train, &data.eval, &cfg.probe)?;
            println!("accuracy={}", eval.accuracy);
            if let Some([a, b]) = eval.per_group_accuracy {
                println!("accuracy_group0={a}\naccuracy_group1={b}");
            }
            if let Some(f) = eval.fairness {
                println!(
                    "parity_gap={}\nequality_gap={}\nequality_gap_tnr={}",
                    f.parity_gap, f.equality_gap_tpr, f.equality_gap_tnr
                );
            }
            if let Some(p) = eval.probe {
                println!(
                    "probe_target_accuracy={}\nprobe_sensitive_accuracy={}",
                    p.target_accuracy, p.sensitive_accuracy
                );
            }
        }
        Command::DumpEmbeddings {
            common,
            checkpoint: path,
            output,
            train_split,
        } => {
            let cfg = load_config(&common)?;
            let net = checkpoint::load(&path)?;
            let data = prepare(&cfg, cfg.seeds[0])?;
            let ds = if train_split { &data.train } else { &data.eval };
            dump_embeddings(&net, ds, &output)?;
            eprintln!("wrote {} rows to {}", ds.len(), output.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
