use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ordpool::experiment::ExperimentConfig;
use ordpool::network::{ActivationKind, NetworkName, PoolingArm};
use ordpool::pooling::InitScheme;
use ordpool::Precision;

mod commands;

/// Ordinal pooling experiments on MNIST.
#[derive(Parser, Debug)]
#[command(name = "ordpool", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one network.
    Train(TrainArgs),
    /// Train classic/ordinal pairs over several seeds and compare them.
    Compare(CompareArgs),
    /// Average test error over an init x activation x pooling grid.
    Sweep(SweepArgs),
    /// Classify learned kernels against template kernels.
    Analyze(AnalyzeArgs),
    /// Finite-difference check of every backward pass.
    Gradcheck(GradcheckArgs),
    /// Write the ordinal kernels of a checkpoint as kernels.json.
    Export(ExportArgs),
}

fn parse_precision(s: &str) -> Result<Precision, String> {
    match s {
        "f32" | "32" => Ok(Precision::F32),
        "f64" | "64" => Ok(Precision::F64),
        other => Err(format!("unknown precision `{other}` (f32 or f64)")),
    }
}

#[derive(Args, Debug, Clone)]
struct Common {
    #[arg(long, default_value = "baseline")]
    network: NetworkName,
    #[arg(long, default_value = "relu")]
    activation: ActivationKind,
    /// Init of the ordinal kernels.
    #[arg(long, default_value = "average")]
    init: InitScheme,
    #[arg(long, default_value_t = 5)]
    epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 10_000)]
    train_size: usize,
    #[arg(long, default_value_t = 2_000)]
    test_size: usize,
    /// Random pixel shift of up to this many pixels; 0 disables it.
    #[arg(long, default_value_t = 0)]
    shift: usize,
    #[arg(long, default_value = "f32", value_parser = parse_precision)]
    precision: Precision,
    /// Directory with the uncompressed MNIST IDX files.
    #[arg(long, env = "ORD_DATA_DIR")]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Suppress per-epoch progress on stderr.
    #[arg(long)]
    quiet: bool,
}

impl Common {
    fn config(&self, arms: Vec<PoolingArm>, seeds: Vec<u64>) -> ExperimentConfig {
        ExperimentConfig {
            network: self.network,
            arms,
            activation: self.activation,
            init: self.init,
            seeds,
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            momentum: self.momentum,
            train_size: self.train_size,
            test_size: self.test_size,
            shift: self.shift,
            precision: self.precision,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ordinal")]
    pooling: PoolingArm,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Classic arm paired with the ordinal one.
    #[arg(long, default_value = "classic-avg")]
    classic: PoolingArm,
    /// Number of paired seeds.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    first_seed: u64,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// JSON sweep configuration; replaces every other training flag.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "average,max,min,uniform")]
    inits: Vec<InitScheme>,
    #[arg(long, value_delimiter = ',', default_value = "none,relu,tanh")]
    activations: Vec<ActivationKind>,
    /// `classic`, `ordinal` or both.
    #[arg(long, value_delimiter = ',', default_value = "classic,ordinal")]
    arms: Vec<String>,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    seeds: u64,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// kernels.json dumps or single kernel-set JSON files.
    #[arg(long, num_args = 1.., required = true)]
    kernels: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Random instances per layer kind.
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write summary.json here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Corrupt the ordinal kernel gradient (negative control).
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Compare(a) => commands::compare(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
        Command::Export(a) => commands::export(a),
    };
    match result {
        Ok(code) => code,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
