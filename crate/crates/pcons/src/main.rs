use std::path::{Path, PathBuf};
use std::process;

use clap::{Parser, Subcommand};
use pcons::commands::{self, Outcome, RunOptions};
use pcons::{CliError, ExitCode};
use rayon::prelude::*;

/// Observer-based pinning consensus for positive multi-agent networks.
#[derive(Parser, Debug)]
#[command(name = "pcons", version)]
struct Cli {
    /// Directory for generated files; one subdirectory per scenario when several are given.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides the seed recorded in the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Scenario files processed in parallel.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize observer and feedback gains.
    Synthesize {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Simulate the closed loop and write CSV trajectories.
    Simulate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Check given gains against every condition.
    Verify {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long)]
        gains: Option<PathBuf>,
    },
    /// Enumerate unit-weight digraphs with a given Laplacian spectrum.
    Reconstruct {
        #[arg(long)]
        n: usize,
        /// Nonzero eigenvalues, e.g. "3,1.5+0.866i,1.5-0.866i".
        #[arg(long, allow_hyphen_values = true)]
        spectrum: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
}

fn report(label: &str, result: Result<Outcome, CliError>) -> ExitCode {
    match result {
        Ok(o) => {
            println!("{}", o.message);
            o.code
        }
        Err(e) => {
            eprintln!("error: {label}: {e}");
            e.exit_code()
        }
    }
}

fn run_files<F>(cli: &Cli, files: &[PathBuf], f: F) -> ExitCode
where
    F: Fn(&Path, &RunOptions) -> Result<Outcome, CliError> + Sync,
{
    let opts_for = |file: &Path| {
        let out_dir = if files.len() > 1 {
            let stem = file.file_stem().map_or_else(|| "scenario".into(), |s| s.to_os_string());
            cli.out_dir.join(stem)
        } else {
            cli.out_dir.clone()
        };
        RunOptions { out_dir, seed: cli.seed }
    };
    let run = |file: &PathBuf| report(&file.display().to_string(), f(file, &opts_for(file)));
    let codes: Vec<ExitCode> = if cli.jobs > 1 && files.len() > 1 {
        match rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build() {
            Ok(pool) => pool.install(|| files.par_iter().map(run).collect()),
            Err(e) => {
                eprintln!("error: worker pool: {e}");
                return ExitCode::Input;
            }
        }
    } else {
        files.iter().map(run).collect()
    };
    codes.into_iter().max().unwrap_or(ExitCode::Success)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PCONS_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Synthesize { files } => run_files(&cli, files, commands::synthesize),
        Command::Simulate { files } => run_files(&cli, files, commands::simulate),
        Command::Verify { files, gains } => {
            run_files(&cli, files, |file, opts| commands::verify(file, gains.as_deref(), opts))
        }
        Command::Reconstruct { n, spectrum, out, tol } => {
            report("reconstruct", commands::reconstruct(*n, spectrum, out, *tol))
        }
    };
    process::exit(code.code());
}
