mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use absnet_core::data::SynthKind;
use absnet_core::nn::Activation;
use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::failure::Failure;

#[derive(Parser)]
#[command(name = "absnet", version, about = "Train, evaluate and probe absolute-value activation networks")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one MNIST network with the learning-rate staircase.
    Train(TrainArgs),
    /// Accuracy and bootstrap interval of a saved checkpoint.
    Eval(EvalArgs),
    /// Train several seeds of one network and combine them by majority vote.
    Ensemble(EnsembleArgs),
    /// Gradient norms through stacks of dense blocks.
    Probe(ProbeArgs),
    /// Small fully connected networks on the 2-D tasks.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run config; command-line flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out")]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Leave wall-clock times out of the metrics and summary files.
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct DataArgs {
    /// MNIST directory (default: $ABSNET_DATA_DIR, then ./data/mnist).
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Fraction of the 60,000 training images used for training; the rest validate.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Use only the first N training samples.
    #[arg(long)]
    train_limit: Option<usize>,
    #[arg(long)]
    val_limit: Option<usize>,
    #[arg(long)]
    test_limit: Option<usize>,
    /// Bootstrap resamples.
    #[arg(long)]
    resamples: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    /// lenet, small, tiny, conv120, conv64conv120, optionally with `+<depth>d<activation>`.
    #[arg(long)]
    arch: Option<String>,
    #[arg(long)]
    activation: Option<Activation>,
}

#[derive(Args)]
struct TrainingArgs {
    /// Expected-accuracy estimator: 1 min of halves, 2 bootstrap mean - std, 3 smaller of both.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    estimator: Option<u8>,
    /// Comma-separated, strictly decreasing.
    #[arg(long, value_delimiter = ',')]
    stage_lrs: Option<Vec<f64>>,
    /// Skip stages above this rate.
    #[arg(long)]
    start_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Epoch cap per stage.
    #[arg(long)]
    epoch_cap: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
}

#[derive(Args)]
struct EnsembleArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    training: TrainingArgs,
    /// Members, seeded seed, seed+1, ...
    #[arg(long)]
    members: Option<usize>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// train, val or test.
    #[arg(long = "data")]
    split: Option<String>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelArgs,
    /// Comma-separated stack depths (default: the depth in --arch).
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// linear, cross or circle (repeatable; default all three).
    #[arg(long)]
    dataset: Vec<SynthKind>,
    /// e.g. abs1x5, relu1x5, relu2x5 (repeatable; default those three).
    #[arg(long)]
    net: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Independent runs per network and dataset.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Common {
    fn resolve(self, command: &str) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(command, self.config.as_deref())?;
        if cfg.out_dir == RunConfig::default().out_dir && self.out_dir.is_none() {
            cfg.out_dir = PathBuf::from("runs").join(command);
        }
        set(&mut cfg.out_dir, self.out_dir);
        set(&mut cfg.seed, self.seed);
        cfg.deterministic |= self.deterministic;
        Ok(cfg)
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.data_dir.is_some() {
            cfg.data_dir = self.data_dir;
        }
        set(&mut cfg.train_fraction, self.train_fraction);
        cfg.train_limit = self.train_limit.or(cfg.train_limit);
        cfg.val_limit = self.val_limit.or(cfg.val_limit);
        cfg.test_limit = self.test_limit.or(cfg.test_limit);
        set(&mut cfg.resamples, self.resamples);
    }
}

impl ModelArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.arch, self.arch);
        set(&mut cfg.activation, self.activation);
    }
}

impl TrainingArgs {
    fn apply(self, cfg: &mut RunConfig) {
        set(&mut cfg.estimator, self.estimator);
        set(&mut cfg.stage_lrs, self.stage_lrs);
        cfg.start_lr = self.start_lr.or(cfg.start_lr);
        set(&mut cfg.batch_size, self.batch_size);
        set(&mut cfg.patience, self.patience);
        set(&mut cfg.epoch_cap, self.epoch_cap);
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train(a) => {
            let mut cfg = a.common.resolve("train")?;
            a.model.apply(&mut cfg);
            a.data.apply(&mut cfg);
            a.training.apply(&mut cfg);
            commands::cmd_train(cfg)
        }
        Command::Ensemble(a) => {
            let mut cfg = a.common.resolve("ensemble")?;
            a.model.apply(&mut cfg);
            a.data.apply(&mut cfg);
            a.training.apply(&mut cfg);
            set(&mut cfg.members, a.members);
            commands::cmd_ensemble(cfg)
        }
        Command::Eval(a) => {
            let mut cfg = a.common.resolve("eval")?;
            a.data.apply(&mut cfg);
            if a.checkpoint.is_some() {
                cfg.checkpoint = a.checkpoint;
            }
            set(&mut cfg.eval_split, a.split);
            commands::cmd_eval(cfg)
        }
        Command::Probe(a) => {
            let mut cfg = a.common.resolve("probe")?;
            a.model.apply(&mut cfg);
            set(&mut cfg.depths, a.depths);
            set(&mut cfg.probe_batch, a.batch);
            commands::cmd_probe(cfg)
        }
        Command::Synth(a) => {
            let mut cfg = a.common.resolve("synth")?;
            if !a.dataset.is_empty() {
                cfg.datasets = a.dataset;
            }
            if !a.net.is_empty() {
                cfg.nets = a.net;
            }
            set(&mut cfg.epochs, a.epochs);
            set(&mut cfg.samples, a.samples);
            set(&mut cfg.runs, a.runs);
            set(&mut cfg.synth_lr, a.lr);
            set(&mut cfg.synth_batch, a.batch_size);
            commands::cmd_synth(cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp_secs()
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code as u8)
        }
    }
}
