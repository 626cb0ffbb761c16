//! `tactile`: dataset generation, experiment grids and reports.
//!
//! Exit status 0 on success, 1 when a run fails part-way, 2 for bad usage,
//! configs or inputs. Verbosity comes from `RUST_LOG`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tactile_core::experiment::{
    build_report, generate_dataset, report_table, run_grid, write_report, CellStatus, DatasetRunConfig, GridConfig,
};
use tactile_core::Error;

#[derive(Parser)]
#[command(name = "tactile", version, about = "Tactile exploration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training dataset of partial tactile clouds and targets.
    GenerateDataset {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run every (object, mode, trial) episode and write logs and a report.
    RunGrid {
        #[arg(long)]
        config: PathBuf,
        /// Episodes to run at once; overrides the config.
        #[arg(long)]
        parallel: Option<usize>,
        /// Keep episodes whose logs already match.
        #[arg(long)]
        resume: bool,
    },
    /// Rebuild the report from episode logs.
    Report {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a config with every default filled in.
    DefaultConfig {
        #[arg(value_enum)]
        kind: ConfigKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Grid,
    Dataset,
}

/// Errors caused by what the user supplied rather than by the run itself.
fn usage_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidParameter(_) | Error::SchemaMismatch { .. } | Error::NoEpisodeLogs { .. } | Error::Json { .. }
    )
}

fn fail(e: Error, status: u8) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(status)
}

fn run_failed(e: Error) -> ExitCode {
    let status = if usage_error(&e) { 2 } else { 1 };
    fail(e, status)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::GenerateDataset { config } => {
            let cfg = match DatasetRunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e, 2),
            };
            match generate_dataset(&cfg) {
                Ok(m) => {
                    println!("objects: {}", m.objects);
                    println!("meshes: {}", m.meshes);
                    println!("samples: {}", m.samples);
                    println!("manifest: {}", cfg.output_dir.join("manifest.json").display());
                    println!("sha256: {}", m.content_sha256);
                    ExitCode::SUCCESS
                }
                Err(e) => run_failed(e),
            }
        }
        Command::RunGrid {
            config,
            parallel,
            resume,
        } => {
            let mut cfg = match GridConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(e, 2),
            };
            if let Some(p) = parallel {
                cfg.parallel = p;
            }
            match run_grid(&cfg, resume) {
                Ok(s) => {
                    for c in &s.cells {
                        if let CellStatus::Failed { error } = &c.status {
                            eprintln!("episode {} failed: {error}", c.cell.stem());
                        }
                    }
                    let reused = s.cells.iter().filter(|c| c.status == CellStatus::Reused).count();
                    print!("{}", report_table(&s.report));
                    println!(
                        "\n{} cells: {} run, {} reused, {} failed; report in {}",
                        s.cells.len(),
                        s.cells.len() - reused - s.failures(),
                        reused,
                        s.failures(),
                        cfg.output_dir.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => run_failed(e),
            }
        }
        Command::Report { logs, out } => {
            if !logs.is_dir() {
                eprintln!("error: {} is not a directory", logs.display());
                return ExitCode::from(2);
            }
            let report = match build_report(&logs) {
                Ok(r) => r,
                Err(e) => return run_failed(e),
            };
            if let Err(e) = write_report(&report, &out) {
                return run_failed(e);
            }
            print!("{}", report_table(&report));
            println!("\n{} episodes; report in {}", report.episodes.len(), out.display());
            ExitCode::SUCCESS
        }
        Command::DefaultConfig { kind } => {
            let text = match kind {
                ConfigKind::Grid => serde_json::to_string_pretty(&GridConfig::default()),
                ConfigKind::Dataset => serde_json::to_string_pretty(&DatasetRunConfig::default()),
            };
            println!("{}", text.expect("configs serialize"));
            ExitCode::SUCCESS
        }
    }
}
