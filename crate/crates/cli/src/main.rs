//! `lffn` — train, evaluate, and inspect the feature-fusion
//! super-resolution network from the command line.

mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::{SpecArgs, TrainOverrideArgs};

const PRECEDENCE_NOTE: &str = "Option precedence: command-line flags override values from \
--config JSON, which override built-in defaults. Exit codes: 0 success, 1 internal or \
numerical failure, 2 usage or path errors. LFFN_THREADS caps eval worker threads (default 1).";

#[derive(Parser)]
#[command(
    name = "lffn",
    version,
    about = "Feature-fusion super-resolution toolkit",
    after_help = PRECEDENCE_NOTE
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network on a directory of high-resolution PNGs
    Train(TrainArgs),
    /// Score a network against ground-truth PNGs (Y-channel PSNR/SSIM)
    Eval(EvalArgs),
    /// Super-resolve one PNG
    Sr(SrArgs),
    /// Report per-layer parameter and mult-add costs
    Analyze(AnalyzeArgs),
    /// Dump the fusion module's per-channel weights for one image as CSV
    DumpSffm(DumpSffmArgs),
    /// Run the built-in oracle and gradient checks
    Selftest,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[command(flatten)]
    pub train: TrainOverrideArgs,
    /// Directory of high-resolution training PNGs
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output weights file (also the per-epoch checkpoint)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss trace CSV path (default: the weights path with a .loss.csv extension)
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Continue from an existing weights file (fine-tuning; default lr0 4e-4)
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// JSON config file (flags override it)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Seed for initialization and patch sampling
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Weights file to evaluate
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Directory of ground-truth PNGs
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Metrics JSON output path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Reconstruction backend: network, or identity (test hook echoing ground truth)
    #[arg(long, default_value = "network")]
    pub backend: String,
    /// JSON config file (flags override it)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct SrArgs {
    /// Weights file
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Low-resolution input PNG
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output PNG path
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Assert the weights' upscale factor
    #[arg(long)]
    pub scale: Option<usize>,
    /// JSON config file (flags override it)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Emit CSV instead of the aligned-text table
    #[arg(long)]
    pub csv: bool,
    /// Report output path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file (flags override it)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct DumpSffmArgs {
    /// Weights file
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Input PNG the fusion weights are computed for
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// CSV output path (default: stdout)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON config file (flags override it)
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::cmd_train(args),
        Command::Eval(args) => commands::cmd_eval(args),
        Command::Sr(args) => commands::cmd_sr(args),
        Command::Analyze(args) => commands::cmd_analyze(args),
        Command::DumpSffm(args) => commands::cmd_dump_sffm(args),
        Command::Selftest => commands::cmd_selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
