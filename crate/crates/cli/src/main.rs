mod bench;
mod failure;
mod run;
mod scatter;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use failure::Failure;
use scatter::Space;

/// Federated-learning robustness experiments.
#[derive(Parser)]
#[command(name = "xmam", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write metrics.csv, diagnostics.json and manifest.json.
    Run {
        /// Experiment file (TOML).
        config: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the experiment file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the screening step of aggregation rules on random updates.
    Bench {
        #[arg(long, default_value_t = 30)]
        tau: usize,
        /// Parameters per update.
        #[arg(long, default_value_t = 1_000_000)]
        zeta: usize,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        /// Comma-separated rule names; all rules when omitted.
        #[arg(long, value_delimiter = ',')]
        aggregators: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path.
        #[arg(long, default_value = "bench.csv")]
        csv: PathBuf,
    },
    /// Export the 2-D PCA coordinates of one recorded round as CSV.
    ExportScatter {
        /// Directory written by `run`.
        run_dir: PathBuf,
        /// Value of the `iteration` column in metrics.csv.
        #[arg(long)]
        round: usize,
        #[arg(long, value_enum)]
        space: Space,
        /// Output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seed } => run::run(&config, &out, seed),
        Command::Bench {
            tau,
            zeta,
            classes,
            repeats,
            aggregators,
            seed,
            csv,
        } => bench::bench(tau, zeta, classes, repeats, &aggregators, seed, &csv),
        Command::ExportScatter {
            run_dir,
            round,
            space,
            out,
        } => scatter::export(&run_dir, round, space, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("XMAM_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(Failure::CONFIG_CODE);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            log::error!("{f}");
            ExitCode::from(f.code())
        }
    }
}
