use std::fmt::Write as _;
use std::path::PathBuf;

use ade_core::rng::{self, label};
use ade_core::{audit_representativeness, AdeStructure, AuditReport};
use clap::Args;
use serde::Serialize;

use crate::error::{CliError, CliResult};
use crate::output::{header, write_atomic};

#[derive(Debug, Clone, Args, Serialize)]
pub struct AuditArgs {
    #[arg(long)]
    pub structure: PathBuf,
    /// Number of random unit directions to check.
    #[arg(long, default_value_t = 200)]
    pub directions: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-direction report (CSV).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn audit_structure(
    structure: &AdeStructure,
    directions: usize,
    seed: u64,
) -> CliResult<AuditReport> {
    let mut r = rng::stream(seed, label::DIRECTION, 0);
    Ok(audit_representativeness(structure, directions, &mut r)?)
}

pub fn render(args: &AuditArgs, report: &AuditReport) -> String {
    let mut out = header("audit", args, args.seed);
    let _ = writeln!(
        out,
        "# l={} epsilon={} min={} mean={} passed={}",
        report.l, report.epsilon, report.min, report.mean, report.passed
    );
    out.push_str("direction,within,l\n");
    for (i, c) in report.counts.iter().enumerate() {
        let _ = writeln!(out, "{i},{c},{}", report.l);
    }
    out
}

/// Audits the structure file; fails with [`CliError::AuditFailed`] when any
/// direction is estimated correctly by fewer than 0.9 l matrices.
pub fn run_audit(args: &AuditArgs) -> CliResult<AuditReport> {
    let structure = AdeStructure::load(&args.structure)?;
    check(
        args,
        audit_structure(&structure, args.directions, args.seed)?,
    )
}

/// Writes the report and turns a failed audit into an error.
pub fn check(args: &AuditArgs, report: AuditReport) -> CliResult<AuditReport> {
    if let Some(path) = &args.out {
        write_atomic(path, render(args, &report).as_bytes())?;
    }
    if !report.passed {
        return Err(CliError::AuditFailed {
            min: report.min,
            l: report.l,
        });
    }
    Ok(report)
}
