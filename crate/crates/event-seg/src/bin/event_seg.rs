//! Thin CLI over the pipeline commands in `event_seg::cli`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use event_seg::cli::{
    cmd_compare, cmd_consensus, cmd_replicate_report, cmd_segment, print_compare_table,
    CliError, RunConfig,
};

#[derive(Parser)]
#[command(name = "event-seg", about = "Event segmentation of narratives with a completion model", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override the output directory from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a story with the configured completion backend.
    Segment {
        #[command(flatten)]
        common: ConfigArgs,
        /// Override the number of replications.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Aggregate human annotation presses into consensus boundaries.
    Consensus {
        #[command(flatten)]
        common: ConfigArgs,
    },
    /// Compare model segmentations against the human consensus.
    Compare {
        #[command(flatten)]
        common: ConfigArgs,
        /// Per-run segmentation JSON files produced by `segment`.
        #[arg(long, required = true, num_args = 1..)]
        segmentation: Vec<PathBuf>,
        /// Consensus boundaries JSON produced by `consensus`.
        #[arg(long)]
        consensus: PathBuf,
    },
    /// Tabulate event counts and run-to-run distances for a set of runs.
    ReplicateReport {
        /// Per-run segmentation JSON files produced by `segment`.
        #[arg(long, required = true, num_args = 1..)]
        segmentation: Vec<PathBuf>,
    },
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::from_toml_file(&args.config)?;
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    match cli.command {
        Command::Segment {
            common,
            replications,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = replications {
                cfg.replications = r;
            }
            let summary = cmd_segment(&cfg)?;
            println!(
                "segmented {:?}: {} run(s), event counts {:?}, max pairwise distance {:.3}",
                summary.story_id, summary.n_runs, summary.event_counts,
                summary.max_pairwise_hamming
            );
        }
        Command::Consensus { common } => {
            let cfg = load_config(&common)?;
            let boundaries = cmd_consensus(&cfg)?;
            println!(
                "consensus for {:?}: {} boundaries (sigma {} ms, threshold {:.4})",
                boundaries.story_id,
                boundaries.n_boundaries,
                boundaries.parameters.sigma_ms,
                boundaries.parameters.threshold
            );
        }
        Command::Compare {
            common,
            segmentation,
            consensus,
        } => {
            let cfg = load_config(&common)?;
            let report = cmd_compare(&cfg, &segmentation, &consensus)?;
            print_compare_table(&report, std::io::stdout().lock())
                .map_err(CliError::from)?;
        }
        Command::ReplicateReport { segmentation } => {
            let table = cmd_replicate_report(&segmentation)?;
            println!("{:<12} {:>10} {:>22}", "run", "N events", "max distance to runs");
            for (run, (n, d)) in &table {
                println!("{run:<12} {n:>10} {d:>22.3}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
