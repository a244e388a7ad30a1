//! `csiaug` command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use csiaug::learner::TransferMode;
use csiaug::Method;

#[derive(Debug, Parser)]
#[command(name = "csiaug", version, about = "CSI data augmentation and localisation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Root seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "CSIAUG_THREADS")]
    pub threads: Option<usize>,
    /// Directory for outputs. Relative `--out` paths are placed here.
    #[arg(long, global = true, env = "CSIAUG_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a synthetic environment and sample a dataset from it.
    Synth(SynthArgs),
    /// Append augmented copies to a dataset.
    Augment(AugmentArgs),
    /// Train a localisation network.
    Train(TrainArgs),
    /// Report the RMSE of a trained network on a dataset.
    Eval(EvalArgs),
    /// Run a multi-trial experiment from a spec file.
    Experiment(ExperimentArgs),
    /// Augment only the hardest samples of a training run.
    HardSelect(HardSelectArgs),
    /// Adapt a source-domain network to a target dataset.
    Transfer(TransferArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Environment TOML file.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Uniformly random positions. Defaults to 1000 unless `--grid` is given.
    #[arg(long, conflicts_with = "grid")]
    pub points: Option<usize>,
    /// Regular grid with this spacing in metres.
    #[arg(long)]
    pub grid: Option<f64>,
    /// Leave out receiver noise.
    #[arg(long)]
    pub no_noise: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub method: Method,
    /// Copies per sample.
    #[arg(long, default_value_t = 1, conflicts_with = "size")]
    pub factor: usize,
    /// Grow the dataset to exactly this many samples instead.
    #[arg(long)]
    pub size: Option<usize>,
    #[command(flatten)]
    pub params: ParamArgs,
}

/// Method parameters; a TOML `[augment]` table, overridden by flags.
#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    /// TOML file with `learner`, `train` and `augment` tables.
    #[arg(long = "params")]
    pub file: Option<PathBuf>,
    /// Amplitude drift half-range in dB.
    #[arg(long, alias = "p-star")]
    pub p_star_db: Option<f64>,
    #[arg(long)]
    pub delta_star: Option<usize>,
    #[arg(long)]
    pub cell_spacing: Option<f64>,
    /// Noise-injection SNR in dB.
    #[arg(long, alias = "snr")]
    pub snr_db: Option<f64>,
    /// Pool one autocorrelation over all links of a sample.
    #[arg(long)]
    pub pool_acf: bool,
}

/// Network and optimiser settings; a TOML file, overridden by flags.
#[derive(Debug, Clone, Args)]
pub struct LearnArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub hidden_layers: Option<usize>,
    #[arg(long)]
    pub hidden_width: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Split manifest; its train part is used for fitting, its val part
    /// for checkpoint selection.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Separate validation file, used when no manifest is given.
    #[arg(long, conflicts_with = "split")]
    pub val: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Training trace JSON. Defaults to `<out>.trace.json`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub learn: LearnArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Evaluate only the test part of this split manifest.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Per-sample predictions CSV.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// Experiment spec TOML.
    #[arg(long)]
    pub spec: PathBuf,
    /// Hard-versus-easy selection at these ratios instead of the factor sweep.
    #[arg(long, value_delimiter = ',')]
    pub hard_easy: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct HardSelectArgs {
    /// The dataset the trace was recorded on.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub trace: PathBuf,
    /// Fraction of samples treated as hard.
    #[arg(long)]
    pub rho: f64,
    #[arg(long)]
    pub method: Method,
    #[arg(long)]
    pub out: PathBuf,
    /// Augment the easiest samples instead, with the same budget.
    #[arg(long)]
    pub easy: bool,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Trained source-domain network.
    #[arg(long, required_unless_present = "source_data")]
    pub source_model: Option<PathBuf>,
    /// Source-domain dataset to train a source network on per trial.
    #[arg(long, conflicts_with = "source_model")]
    pub source_data: Option<PathBuf>,
    /// Target-domain dataset.
    #[arg(long)]
    pub target: PathBuf,
    /// Split manifest for the target; a seeded 70/10/20 split otherwise.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![TransferMode::FullFineTune, TransferMode::FreezeFeatures])]
    pub mode: Vec<TransferMode>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0, 7, 31])]
    pub factors: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    pub target_size: usize,
    #[arg(long, default_value_t = Method::Pdp2)]
    pub method: Method,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub learn: LearnArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&cli.global, a),
        Command::Augment(a) => commands::augment(&cli.global, a),
        Command::Train(a) => commands::train(&cli.global, a),
        Command::Eval(a) => commands::eval(&cli.global, a),
        Command::Experiment(a) => commands::experiment(&cli.global, a),
        Command::HardSelect(a) => commands::hard_select(&cli.global, a),
        Command::Transfer(a) => commands::transfer(&cli.global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
