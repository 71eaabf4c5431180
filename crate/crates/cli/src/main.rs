use std::process::ExitCode;

use ade_cli::commands::{attack, audit, bench, build, calibrate, query};
use ade_cli::CliResult;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ade",
    version,
    about = "Adaptive-query-safe distance estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a structure from a dataset and save it.
    Build(build::BuildArgs),
    /// Answer query vectors against a saved structure.
    Query(query::QueryArgs),
    /// Check that a saved structure is representative on random directions.
    Audit(audit::AuditArgs),
    /// Run the adaptive attack and the random-probe baseline.
    Attack(attack::AttackArgs),
    /// Time build and query across a size grid.
    Bench(bench::BenchArgs),
    /// Calibrate Med_p for stability indices into a table.
    Calibrate(calibrate::CalibrateArgs),
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Build(args) => {
            let outcome = build::run_build(&args)?;
            println!("{}", outcome.summary());
        }
        Command::Query(args) => {
            let outcome = query::run_query(&args)?;
            println!("answered {} queries", outcome.results.len());
        }
        Command::Audit(args) => {
            let report = audit::run_audit(&args)?;
            println!(
                "l={} min={} mean={:.2} passed={}",
                report.l, report.min, report.mean, report.passed
            );
        }
        Command::Attack(args) => {
            let outcome = attack::run_attack_experiment(&args)?;
            print!("{}", attack::render_summary(&args, &outcome.summary));
        }
        Command::Bench(args) => {
            let rows = bench::run_bench(&args)?;
            print!("{}", bench::render(&args, &rows));
        }
        Command::Calibrate(args) => {
            let table = calibrate::run_calibrate(&args)?;
            print!("{}", table.to_tsv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
