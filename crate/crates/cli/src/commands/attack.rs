use std::fmt::Write as _;
use std::path::PathBuf;

use ade_core::adversary::median_ratio;
use ade_core::rng::{derive_seed, label};
use ade_core::{
    random_query_baseline, run_attack, three_point_database, AdeOracle, AdeParams, AttackConfig,
    AttackTrace, DistanceOracle, ExactOracle, MemoryCap, NaiveJlOracle,
};
use clap::{Args, ValueEnum};
use serde::Serialize;

use super::{med_table, mib};
use crate::error::CliResult;
use crate::output::{header, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleChoice {
    /// One fixed k x d Gaussian sketch.
    Naive,
    /// The sketch ensemble.
    Ade,
    /// True distances.
    Exact,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct AttackArgs {
    #[arg(long, value_enum, default_value_t = OracleChoice::Naive)]
    pub oracle: OracleChoice,
    #[arg(long, default_value_t = 2000)]
    pub d: usize,
    /// Rows of the naive sketch.
    #[arg(long, default_value_t = 100)]
    pub k: usize,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    /// Cap on the ensemble size for `--oracle ade`.
    #[arg(long, default_value_t = 64)]
    pub max_sketches: usize,
    #[arg(long, default_value_t = 2000)]
    pub rounds: usize,
    #[arg(long, default_value_t = 50)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    /// Basis direction of the database {-e, 0, +e}.
    #[arg(long, default_value_t = 0)]
    pub axis: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for per-repetition traces and the summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    pub memory_cap_mib: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SummaryRow {
    pub round: usize,
    pub adaptive_median_ratio: f64,
    pub random_median_ratio: f64,
}

pub struct AttackOutcome {
    pub adaptive: Vec<AttackTrace>,
    pub random: Vec<AttackTrace>,
    pub summary: Vec<SummaryRow>,
}

fn oracle_for(args: &AttackArgs, rep: usize) -> CliResult<Box<dyn DistanceOracle>> {
    let db = three_point_database(args.d, args.axis)?;
    let seed = derive_seed(args.seed, label::ORACLE, rep as u64);
    Ok(match args.oracle {
        OracleChoice::Naive => Box::new(NaiveJlOracle::new(&db, args.k, seed)?),
        OracleChoice::Exact => Box::new(ExactOracle::new(db)),
        OracleChoice::Ade => {
            let params = AdeParams::new(2.0, args.epsilon, args.delta, seed)
                .with_max_sketches(args.max_sketches);
            Box::new(AdeOracle::build(
                &db,
                params,
                &med_table(None)?,
                MemoryCap(mib(args.memory_cap_mib)),
            )?)
        }
    })
}

fn summarise(adaptive: &[AttackTrace], random: &[AttackTrace]) -> Vec<SummaryRow> {
    let evals = adaptive.first().map_or(0, |t| t.evaluations.len());
    (0..evals)
        .map(|e| {
            let column = |traces: &[AttackTrace]| -> Vec<f64> {
                traces.iter().map(|t| t.evaluations[e].ratio).collect()
            };
            SummaryRow {
                round: adaptive[0].evaluations[e].round,
                adaptive_median_ratio: median_ratio(&column(adaptive)),
                random_median_ratio: median_ratio(&column(random)),
            }
        })
        .collect()
}

pub fn render_summary(args: &AttackArgs, rows: &[SummaryRow]) -> String {
    let mut out = header("attack", args, args.seed);
    out.push_str("round,adaptive_median_ratio,random_median_ratio\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.round, r.adaptive_median_ratio, r.random_median_ratio
        );
    }
    out
}

pub fn render_trace(args: &AttackArgs, rep: usize, trace: &AttackTrace) -> String {
    let mut out = header("attack", args, args.seed);
    let _ = writeln!(
        out,
        "# rep: {rep} mode: {:?} probe_seed: {}",
        trace.mode, trace.config.seed
    );
    let mut body = Vec::new();
    trace
        .write_csv(&mut body)
        .expect("writing to a Vec cannot fail");
    out.push_str(&String::from_utf8(body).expect("CSV is UTF-8"));
    out
}

/// Runs `reps` repetitions of the adaptive attack and of the random-probe
/// baseline. Each repetition gets its own oracle and probe seeds; both modes
/// of a repetition share the oracle and the probes.
///
/// Repetitions run one after another so that at most one ensemble is resident.
pub fn run_attack_experiment(args: &AttackArgs) -> CliResult<AttackOutcome> {
    let mut adaptive = Vec::with_capacity(args.reps);
    let mut random = Vec::with_capacity(args.reps);
    for rep in 0..args.reps {
        let mut oracle = oracle_for(args, rep)?;
        let config = AttackConfig {
            n_rounds: args.rounds,
            eval_every: args.eval_every,
            seed: derive_seed(args.seed, label::PROBE, rep as u64),
        };
        adaptive.push(run_attack(oracle.as_mut(), config)?);
        random.push(random_query_baseline(oracle.as_mut(), config)?);
    }
    let summary = summarise(&adaptive, &random);
    if let Some(dir) = &args.out {
        for (rep, (a, r)) in adaptive.iter().zip(&random).enumerate() {
            write_atomic(
                &dir.join(format!("adaptive_rep{rep}.csv")),
                render_trace(args, rep, a).as_bytes(),
            )?;
            write_atomic(
                &dir.join(format!("random_rep{rep}.csv")),
                render_trace(args, rep, r).as_bytes(),
            )?;
        }
        write_atomic(
            &dir.join("summary.csv"),
            render_summary(args, &summary).as_bytes(),
        )?;
    }
    Ok(AttackOutcome {
        adaptive,
        random,
        summary,
    })
}
