use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use raresim::engine::Mode;
use raresim::exec::Execution;
use raresim_cli::{bench_list, parse_config_str, render_table, report, run_experiment, CliError, Overrides};

#[derive(Parser)]
#[command(name = "raresim", version, about = "Subset simulation with local surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every cell and seed of an experiment config.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long = "n-runs")]
        n_runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// standard, local-gp, local-quadratic or local-pls-gp
        #[arg(long)]
        mode: Option<Mode>,
        /// Run on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Re-aggregate the results in an output directory.
    Report { dir: PathBuf },
    /// Benchmark catalog.
    Bench {
        #[command(subcommand)]
        action: BenchAction,
    },
}

#[derive(Subcommand)]
enum BenchAction {
    List,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { config, out, n_runs, seed, mode, sequential } => {
            let text = std::fs::read_to_string(&config).map_err(|source| CliError::Io { path: config.clone(), source })?;
            let spec = parse_config_str(&text, &Overrides { out, n_runs, seed, mode })?;
            let exec = if sequential { Execution::Sequential } else { Execution::available() };
            let summary = run_experiment(&spec, exec)?;
            print!("{}", render_table(&summary.rows));
            println!("results written to {}", spec.out.display());
            if summary.exit_code() != 0 {
                eprintln!("{} of {} runs failed", summary.failed_runs, summary.total_runs);
            }
            Ok(summary.exit_code())
        }
        Command::Report { dir } => {
            let summary = report(&dir)?;
            print!("{}", render_table(&summary.rows));
            Ok(summary.exit_code())
        }
        Command::Bench { action: BenchAction::List } => {
            print!("{}", bench_list());
            Ok(0)
        }
    }
}
