mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::UsageError;

#[derive(Parser, Debug)]
#[command(name = "wordreg", version, about = "Unsupervised cross-lingual embedding alignment")]
struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic source/target pair with gold dictionary and planted map.
    Synth(SynthArgs),
    /// Run the full alignment pipeline and write mapped spaces, dictionary and report.
    Align(Box<AlignArgs>),
    /// Precision@k of CSLS retrieval from mapped source vectors.
    Eval(EvalArgs),
    /// Induce a mutual-nearest-neighbour dictionary from two spaces.
    Induce(InduceArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// orthogonal, similarity or affine.
    #[arg(long, default_value = "orthogonal")]
    pub kind: String,
    #[arg(long, default_value_t = 10)]
    pub clusters: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Plain-text key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub src: Option<PathBuf>,
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Gold dictionary TSV; adds P@1, P@5 and the OOV count to the report.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Most frequent words loaded from each file [default: 200000].
    #[arg(long)]
    pub max_vocab: Option<usize>,
    /// Cyclic loss weight [default: 5].
    #[arg(long)]
    pub lambda_cyc: Option<f64>,
    /// Orthogonalization step size [default: 0.001].
    #[arg(long)]
    pub beta_orth: Option<f64>,
    /// Most frequent words fed to the discriminators [default: 50000].
    #[arg(long)]
    pub disc_vocab: Option<usize>,
    /// Discriminator input dropout [default: 0.1].
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Comma-separated hidden layer widths of the discriminators [default: 2048].
    #[arg(long)]
    pub dis_hidden: Option<String>,
    /// Adversarial epochs [default: 5].
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Generator updates per epoch [default: 1000].
    #[arg(long)]
    pub iters_per_epoch: Option<usize>,
    /// [default: 32]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Generator learning rate [default: 0.1].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// non-saturating or minimax [default: non-saturating].
    #[arg(long)]
    pub objective: Option<String>,
    /// CSLS neighbourhood size [default: 10].
    #[arg(long)]
    pub csls_k: Option<usize>,
    /// Most frequent words used for induction and model selection [default: 25000].
    #[arg(long)]
    pub induce_limit: Option<usize>,
    /// Most frequent words registered by CPD [default: 5000].
    #[arg(long)]
    pub cpd_points: Option<usize>,
    /// CPD outlier weight [default: 0.1].
    #[arg(long)]
    pub cpd_w: Option<f64>,
    /// similarity or affine [default: similarity].
    #[arg(long)]
    pub cpd_mode: Option<String>,
    /// EM iteration cap per CPD run [default: 150].
    #[arg(long)]
    pub cpd_max_iter: Option<usize>,
    /// symmetric or procrustes [default: symmetric].
    #[arg(long)]
    pub refine: Option<String>,
    /// Refinement iteration cap [default: 10].
    #[arg(long)]
    pub max_refine_iters: Option<usize>,
    /// Start from identity maps instead of adversarial training.
    #[arg(long)]
    pub skip_gan: bool,
    /// Initial forward map (.vec written by a checkpoint); needs --init-backward.
    #[arg(long)]
    pub init_forward: Option<PathBuf>,
    #[arg(long)]
    pub init_backward: Option<PathBuf>,
    /// Align checkpoint to export: best or epoch:N [default: best].
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Skip the Correspond stage.
    #[arg(long)]
    pub no_correspond: bool,
    /// Skip the Transform (CPD) stage.
    #[arg(long)]
    pub no_transform: bool,
    /// Re-run Correspond on the input spaces each iteration instead of the previous iterate.
    #[arg(long)]
    pub correspond_from_original: bool,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run this many consecutive seeds and keep the run with the best criterion [default: 1].
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Decimal places in written .vec files; 17 writes exact round-trip values [default: 6].
    #[arg(long)]
    pub precision: Option<usize>,
    /// Record wall-clock stage timings (reports are then not byte-reproducible).
    #[arg(long)]
    pub timings: bool,
    /// Do not write Align checkpoints.
    #[arg(long)]
    pub no_checkpoints: bool,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub src_mapped: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub csls_k: usize,
    /// Comma-separated k values for precision@k.
    #[arg(long, default_value = "1,5")]
    pub at: String,
    #[arg(long, default_value_t = 200_000)]
    pub max_vocab: usize,
}

#[derive(Args, Debug)]
pub struct InduceArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub tgt: PathBuf,
    /// Output dictionary TSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Forward map applied to source rows [default: identity].
    #[arg(long)]
    pub forward: Option<PathBuf>,
    /// Backward map applied to target rows [default: identity].
    #[arg(long)]
    pub backward: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub csls_k: usize,
    /// Most frequent words on each side that take part.
    #[arg(long, default_value_t = 25_000)]
    pub limit: usize,
    #[arg(long, default_value_t = 200_000)]
    pub max_vocab: usize,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<wordreg::Error>() {
        Some(wordreg::Error::Config(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Align(a) => commands::align(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Induce(a) => commands::induce(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
