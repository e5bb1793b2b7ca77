use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use statecon_cli::{check_experiment, emit_report, run_experiment, ExperimentConfig, RunError};

#[derive(Parser)]
#[command(
    name = "statecon",
    version,
    about = "State-constrained Poisson control experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Seed for randomized checks (overrides output.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the refinement sweep described by a config file.
    Run { config: PathBuf },
    /// Validate a config and run randomized adjoint checks.
    Check { config: PathBuf },
}

const CHECK_PAIRS: usize = 10;
const ADJOINT_TOL: f64 = 1e-8;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(cli: &Cli) -> Result<i32, RunError> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let out = cli.out.clone().unwrap_or_else(|| cfg.output.dir.clone());
            let report = run_experiment(&cfg, &out)?;
            print!("{}", emit_report(&report, &out)?);
            Ok(report.exit_code())
        }
        Command::Check { config } => {
            let cfg = ExperimentConfig::load(config)?;
            let seed = cli.seed.unwrap_or(cfg.output.seed);
            let rows = check_experiment(&cfg, seed, CHECK_PAIRS)?;
            let mut ok = true;
            for r in &rows {
                let pass = r.adjoint_defect <= ADJOINT_TOL && r.feasible_start;
                ok &= pass;
                println!(
                    "n={:<5} nodes={:<8} adjoint_defect={:.3e} feasible_start={} {}",
                    r.grid_size,
                    r.node_count,
                    r.adjoint_defect,
                    r.feasible_start,
                    if pass { "ok" } else { "FAILED" }
                );
            }
            Ok(if ok { 0 } else { 3 })
        }
    }
}
