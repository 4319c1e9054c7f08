use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microgrid_market::lp::DEFAULT_TOL;
use microgrid_market::market::MarketOutcome;
use microgrid_market::scenario::{load_scenario, write_scenario};
use microgrid_market::synth::{synth_profiles, SynthSpec};
use microgrid_market::verify::verify_all;
use microgrid_market_cli::files::{read_json, write_json};
use microgrid_market_cli::{aggregate_dir, run, CliError, DayRecord, Exit, RunConfig};

#[derive(Parser)]
#[command(name = "mgmarket", version, about = "Community microgrid market clearing and profit sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Solver {
    /// absolute tolerance for the solver and the verification
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// worker threads (default: one per core)
    #[arg(long)]
    workers: Option<usize>,
    /// add every named dual value to the day records
    #[arg(long)]
    emit_duals: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Clear the market over the whole scenario horizon
    Solve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: Solver,
        /// audit the outcome against the duality identities
        #[arg(long)]
        verify: bool,
    },
    /// Split the horizon into days and run and verify each one
    Horizon {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        days: usize,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        solver: Solver,
        /// day-boundary state of charge as a fraction of capacity
        #[arg(long, default_value_t = 0.5)]
        soc_fraction: f64,
    },
    /// Audit a stored outcome against its scenario
    Verify {
        #[arg(long)]
        outcome: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// print the report as JSON instead of a table
        #[arg(long)]
        json: bool,
    },
    /// Generate a scenario from summary statistics
    Synth {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarise a directory of day records by month and year
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn solve(config: RunConfig) -> Result<Exit, CliError> {
    let summary = run(&config)?;
    for r in &summary.records {
        if let Some(e) = &r.error {
            eprintln!("day {}: {e}", r.day);
        }
        if let Some(report) = r.verification.as_ref().filter(|v| !v.passed()) {
            eprintln!("day {}: verification failed\n{report}", r.day);
        }
    }
    let ok = summary.records.iter().filter(|r| r.status.exit() == Exit::Ok).count();
    eprintln!(
        "{ok}/{} days solved, results in {}",
        summary.records.len(),
        config.out_dir.display()
    );
    Ok(summary.exit)
}

fn verify(outcome: &Path, scenario: &Path, tol: f64, json: bool) -> Result<Exit, CliError> {
    let s = load_scenario(scenario)?;
    // either a full day record or a bare clearing outcome
    let (out, sharing) = match read_json::<DayRecord>(outcome) {
        Ok(r) => match r.outcome {
            Some(out) => (out, r.standalone.zip(r.sharing)),
            None => {
                eprintln!("{}: day {} has no outcome ({:?})", outcome.display(), r.day, r.status);
                return Ok(Exit::Infeasible);
            }
        },
        Err(_) => (read_json::<MarketOutcome>(outcome)?, None),
    };
    let report = verify_all(&s, &out, sharing.as_ref().map(|(su, sh)| (sh, su)), tol);
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("serialisable"));
    } else {
        print!("{report}");
    }
    Ok(if report.passed() {
        Exit::Ok
    } else {
        Exit::VerificationFailed
    })
}

fn execute(command: Command) -> Result<Exit, CliError> {
    match command {
        Command::Solve {
            scenario,
            out,
            solver,
            verify,
        } => solve(RunConfig {
            tol: solver.tol,
            emit_duals: solver.emit_duals,
            workers: solver.workers,
            verify,
            ..RunConfig::new(scenario, out)
        }),
        Command::Horizon {
            scenario,
            days,
            out,
            solver,
            soc_fraction,
        } => solve(RunConfig {
            tol: solver.tol,
            emit_duals: solver.emit_duals,
            workers: solver.workers,
            verify: true,
            days: Some(days),
            soc_fraction,
            ..RunConfig::new(scenario, out)
        }),
        Command::Verify {
            outcome,
            scenario,
            tol,
            json,
        } => verify(&outcome, &scenario, tol, json),
        Command::Synth { stats, seed, out } => {
            let spec: SynthSpec = read_json(&stats)?;
            write_scenario(&synth_profiles(seed, &spec)?, &out)?;
            Ok(Exit::Ok)
        }
        Command::Aggregate { input, out } => {
            write_json(&out, &aggregate_dir(&input)?)?;
            Ok(Exit::Ok)
        }
    }
}

fn main() -> ExitCode {
    // usage errors share the input-error code; 2 is reserved for failed verification
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { Exit::Input.code() as u8 } else { 0 });
        }
    };
    let exit = execute(cli.command).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit()
    });
    ExitCode::from(exit.code() as u8)
}
