use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use memaudit::config::{ExperimentConfig, ENV_MASTER_SEED, ENV_OUTPUT_DIR};
use memaudit::{render, runner, Error};

/// Membership-inference vulnerability audits driven by a TOML config.
#[derive(Debug, Parser)]
#[command(name = "memaudit", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every scenario point for every seed.
    Run {
        config: PathBuf,
        /// Master seed, overriding the config file.
        #[arg(long, env = ENV_MASTER_SEED)]
        seed: Option<u64>,
        /// Output directory, overriding the config file.
        #[arg(long, env = ENV_OUTPUT_DIR)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Check a config and list every problem found.
    Validate { config: PathBuf },
    /// Rebuild the CSV tables of a finished run and print a summary.
    Report { dir: PathBuf },
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            parallel,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            let summary = runner::run(&cfg, parallel)?;
            for job in &summary.jobs {
                if let runner::JobStatus::Failed(e) = job {
                    eprintln!("failed: {} seed {}: {}", e.point, e.seed, e.error);
                }
            }
            print!("{}", render::render_summary(&render::summarize(&summary.jobs)));
            println!("wrote {}", summary.out_dir.display());
            Ok(if summary.failures() == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            })
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let problems = cfg.validate();
            if problems.is_empty() {
                println!("ok: {} point(s) x {} seed(s)", cfg.points().len(), cfg.seeds.len());
                Ok(ExitCode::SUCCESS)
            } else {
                Err(Error::InvalidConfig(problems))
            }
        }
        Command::Report { dir } => {
            print!("{}", render::report(&dir)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
