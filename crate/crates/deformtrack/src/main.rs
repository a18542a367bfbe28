use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deformtrack::pipeline::{self, TrackArgs};

/// Non-rigid tracking of a deforming surface in depth sequences.
#[derive(Parser)]
#[command(name = "deformtrack", version)]
struct Cli {
    /// Worker threads; results are identical for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the seed of the config or scene spec.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a template through a sequence of depth maps.
    Track {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        /// Directory of .pfm or .csv depth maps, processed in name order.
        #[arg(long)]
        frames: Option<PathBuf>,
        /// Directory of `<frame name>.json` match files.
        #[arg(long)]
        matches: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic sequence with ground truth.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare recovered surfaces with ground truth.
    Eval {
        #[arg(long)]
        recovered: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Summary CSV.
        #[arg(long)]
        out: PathBuf,
        /// Directory for per-point distance CSVs.
        #[arg(long)]
        distances: Option<PathBuf>,
    },
    /// Weight feature matches by rigid-consensus preselection.
    Preselect {
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> deformtrack::Result<()> {
    if let Some(0) = cli.threads {
        return Err(deformtrack::Error::Config("--threads must be at least 1".into()));
    }
    match cli.command {
        Command::Track {
            config,
            template,
            frames,
            matches,
            out,
        } => {
            let summary = pipeline::track(&TrackArgs {
                config,
                template,
                frames,
                matches,
                out,
                seed: cli.seed,
                threads: cli.threads,
            })?;
            println!("tracked {} frames", summary.frames.len());
        }
        Command::Synth { spec, out } => {
            let names = pipeline::with_threads(cli.threads, || pipeline::synth(&spec, &out, cli.seed))??;
            println!("wrote {} frames to {}", names.len(), out.display());
        }
        Command::Eval {
            recovered,
            truth,
            out,
            distances,
        } => {
            let rows = pipeline::eval(&recovered, &truth, &out, distances.as_deref())?;
            if let Some(all) = rows.last() {
                println!("rmse {:.4} mm over {} frames", all.metrics.rmse, rows.len() - 1);
            }
        }
        Command::Preselect { matches, config, out } => {
            let doc = pipeline::with_threads(cli.threads, || pipeline::preselect(&matches, config.as_deref(), &out, cli.seed))??;
            let kept = doc.matches.iter().filter(|m| m.preselected == Some(true)).count();
            println!("{kept} of {} matches preselected", doc.matches.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DEFORMTRACK_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
