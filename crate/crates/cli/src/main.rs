//! `lumina`: train, enhance, decompose, evaluate and synthesize pairs.
//!
//! Exit codes: 0 success, 1 other failure, 2 usage or configuration error,
//! 3 data error (unreadable or missing images, per-file failures), 4 model
//! error (checkpoint cannot be loaded), 5 evaluation with nothing to score.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};

use error::{code, CliError};

#[derive(Parser)]
#[command(name = "lumina", version, about = "Paired-exposure Retinex low-light enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a directory of `<id>/a.png`, `<id>/b.png` pairs.
    Train(TrainArgs),
    /// Enhance a PNG or every PNG in a directory.
    Enhance(EnhanceArgs),
    /// Write i, R, L, R_f and L_f maps for a PNG or directory.
    Decompose(DecomposeArgs),
    /// Score enhanced images against same-named references (PSNR, SSIM).
    Evaluate(EvaluateArgs),
    /// Generate synthetic exposure pairs.
    Synth(SynthArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    /// key=value config file or a previous run manifest
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for the checkpoint, loss log and manifest
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub crop: Option<usize>,
    /// Pairs averaged per optimizer step
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Illumination correction factor
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seed of the fixed perceptual feature extractor
    #[arg(long)]
    pub phi_seed: Option<u64>,
    /// Loss weights w0,w1,w2,w3
    #[arg(long)]
    pub weights: Option<String>,
    /// default or lol
    #[arg(long)]
    pub profile: Option<String>,
    /// Module to switch off (oec, cg, ce); repeatable
    #[arg(long)]
    pub disable: Vec<String>,
}

#[derive(Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// PNG file or directory
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file for a file input, directory for a directory input
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub disable: Vec<String>,
    /// Also write i, R, L, R_f and L_f next to each output
    #[arg(long)]
    pub dump_intermediates: bool,
}

#[derive(Args)]
pub struct DecomposeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub disable: Vec<String>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub enhanced: Option<PathBuf>,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Directory for report.txt, report.csv and the manifest
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory of base PNGs; procedural textures when omitted
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Side of procedural bases
    #[arg(long)]
    pub size: Option<usize>,
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("LUMINA_THREADS") else { return Ok(()) };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::usage(format!("LUMINA_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Other(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Enhance(a) => commands::enhance_cmd(a),
        Command::Decompose(a) => commands::decompose(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Synth(a) => commands::synth(a),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Train(_) => "train",
        Command::Enhance(_) => "enhance",
        Command::Decompose(_) => "decompose",
        Command::Evaluate(_) => "evaluate",
        Command::Synth(_) => "synth",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    match run(&cli) {
        Ok(()) => ExitCode::from(code::OK as u8),
        Err(e) => {
            eprintln!("{e}");
            if let CliError::Usage { help: true, .. } = e {
                let mut cmd = Cli::command();
                if let Some(sub) = cmd.find_subcommand_mut(subcommand_name(&cli.command)) {
                    let _ = sub.write_help(&mut std::io::stderr());
                }
            }
            ExitCode::from(e.code() as u8)
        }
    }
}
