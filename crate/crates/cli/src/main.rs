use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uasim_cli::{run, Command, Manifest, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "uasim", version, about = "Underwater acoustic channel simulation, generation and evaluation")]
struct Cli {
    /// TOML experiment configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set sim.count=10`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Single-threaded run with bit-reproducible artifacts.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Log progress at info level (`RUST_LOG` takes precedence).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Simulate a TVIR corpus.
    SimGen,
    /// Train the autoencoder from scratch.
    AeTrain,
    /// Fine-tune an autoencoder checkpoint.
    AeFinetune,
    /// Pre-train the latent diffusion model on paired records.
    DiffTrain,
    /// Generative fine-tuning of a diffusion checkpoint.
    DiffFinetune,
    /// TVIRs to latent vectors.
    Encode,
    /// Latent vectors to TVIRs.
    Decode,
    /// Conditional TVIR generation.
    Generate,
    /// Channel characteristics, CDFs and histograms.
    Metrics,
    /// OFDM bit error rates over a TVIR set.
    Ber,
    /// Direct and stochastic replay baselines.
    Replay,
    /// Probe-based NLMS channel estimation.
    Nlms,
    /// Check a manifest against the files it lists.
    Verify { manifest: PathBuf },
}

impl Sub {
    fn command(&self) -> Option<Command> {
        Some(match self {
            Sub::SimGen => Command::SimGen,
            Sub::AeTrain => Command::AeTrain,
            Sub::AeFinetune => Command::AeFinetune,
            Sub::DiffTrain => Command::DiffTrain,
            Sub::DiffFinetune => Command::DiffFinetune,
            Sub::Encode => Command::Encode,
            Sub::Decode => Command::Decode,
            Sub::Generate => Command::Generate,
            Sub::Metrics => Command::Metrics,
            Sub::Ber => Command::Ber,
            Sub::Replay => Command::Replay,
            Sub::Nlms => Command::Nlms,
            Sub::Verify { .. } => return None,
        })
    }
}

fn verify(path: &std::path::Path) -> ExitCode {
    match Manifest::read(path) {
        Ok(m) => {
            let problems = m.verify(path);
            for p in &problems {
                eprintln!("{p}");
            }
            if problems.is_empty() {
                println!("{}: ok ({} outputs)", path.display(), m.outputs.len());
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on unknown commands and bad flags
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let Some(command) = cli.command.command() else {
        let Sub::Verify { manifest } = &cli.command else { unreachable!() };
        return verify(manifest);
    };
    let opts = RunOptions { command, config: cli.config, overrides: cli.overrides, deterministic: cli.deterministic };
    match run(&opts) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
