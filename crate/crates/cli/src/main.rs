use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use privclean_cli::commands::{self, ReplayData, TranslateArgs};
use privclean_cli::config::{load_file, ServiceConfig};

#[derive(Parser)]
#[command(
    name = "privclean",
    version,
    about = "Differentially private tuning of entity-resolution rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a robot-cleaner sweep and write CSV and JSON results.
    Sweep {
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also write one JSON-lines trace per run into this directory.
        #[arg(long)]
        traces: Option<PathBuf>,
    },
    /// Re-execute a session trace and print its responses as CSV.
    Replay {
        trace: PathBuf,
        /// Service config whose registry holds the trace's dataset.
        #[arg(long, conflicts_with = "dataset", required_unless_present = "dataset")]
        config: Option<PathBuf>,
        /// Dataset source file (synthetic spec or file paths).
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic labeled dataset.
    GenData {
        spec: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print the noise scale and epsilon a tolerance translates to.
    Translate(TranslateArgs),
    /// Serve the HTTP session API. PRIVCLEAN_PORT and PRIVCLEAN_SEED
    /// override the config.
    Serve { config: PathBuf },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Sweep {
            config,
            out_dir,
            traces,
        } => {
            println!("{}", commands::sweep(&config, &out_dir, traces.as_deref())?);
        }
        Command::Replay {
            trace,
            config,
            dataset,
            out,
        } => {
            let data = match (config, dataset) {
                (Some(c), _) => ReplayData::Registry(c),
                (None, Some(d)) => ReplayData::Source(d),
                (None, None) => unreachable!("clap requires one of them"),
            };
            let csv = commands::replay_trace(&trace, &data)?;
            match out {
                Some(path) => std::fs::write(&path, csv)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::GenData { spec, out_dir } => println!("{}", commands::gen_data(&spec, &out_dir)?),
        Command::Translate(args) => println!("{}", commands::translate(&args)?),
        Command::Serve { config } => {
            let mut cfg: ServiceConfig = load_file(&config)?;
            cfg.apply_env()?;
            tokio::runtime::Runtime::new()?
                .block_on(privclean_cli::service::serve(cfg, &config))?;
        }
    }
    Ok(())
}
