use std::fmt::Write as _;
use std::path::PathBuf;

use ade_core::rng::{self, label};
use ade_core::stats::lp_norm;
use ade_core::{AdeStructure, QueryResult};
use clap::Args;
use serde::Serialize;

use crate::dataset::read_dataset;
use crate::error::{CliError, CliResult};
use crate::output::{header, write_atomic};

#[derive(Debug, Clone, Args, Serialize)]
pub struct QueryArgs {
    #[arg(long)]
    pub structure: PathBuf,
    /// Query vectors (CSV or ADEV binary); may be empty.
    #[arg(long)]
    pub queries: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Check every estimate against brute-force distances to `--data`.
    #[arg(long, requires = "data")]
    pub verify: bool,
    /// Original dataset, used by `--verify`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub query: usize,
    pub point: usize,
    pub estimate: f64,
    pub exact: f64,
}

pub struct QueryOutcome {
    pub results: Vec<QueryResult>,
    pub violations: Vec<Violation>,
}

/// Renders the estimates CSV: comment header, column line, then one block
/// per query introduced by a comment carrying its sampled indices.
pub fn render(args: &QueryArgs, results: &[QueryResult]) -> String {
    let mut out = header("query", args, args.seed);
    out.push_str("point_index,estimate\n");
    for (qi, res) in results.iter().enumerate() {
        let idx: Vec<String> = res.sampled_indices.iter().map(|j| j.to_string()).collect();
        let _ = writeln!(out, "# query {qi} sampled_indices {}", idx.join(" "));
        for (i, e) in res.estimates.iter().enumerate() {
            let _ = writeln!(out, "{i},{e}");
        }
    }
    out
}

pub fn run_query(args: &QueryArgs) -> CliResult<QueryOutcome> {
    if args.verify && args.data.is_none() {
        return Err(CliError::Usage("--verify needs --data".into()));
    }
    let structure = AdeStructure::load(&args.structure)?;
    let queries = read_dataset(&args.queries, true, Some(structure.d()))?;
    let results = queries
        .rows()
        .enumerate()
        .map(|(qi, q)| structure.query(q, &mut rng::stream(args.seed, label::QUERY, qi as u64)))
        .collect::<Result<Vec<_>, _>>()?;
    write_atomic(&args.out, render(args, &results).as_bytes())?;

    let mut violations = Vec::new();
    if let (true, Some(data_path)) = (args.verify, &args.data) {
        let data = read_dataset(data_path, false, Some(structure.d()))?;
        let eps = structure.params().epsilon;
        let p = structure.params().p;
        for (qi, (q, res)) in queries.rows().zip(&results).enumerate() {
            for (i, (x, &estimate)) in data.rows().zip(&res.estimates).enumerate() {
                let diff: Vec<f64> = q.iter().zip(x).map(|(a, b)| a - b).collect();
                let exact = lp_norm(&diff, p);
                if !((1.0 - eps) * exact <= estimate && estimate <= (1.0 + eps) * exact) {
                    violations.push(Violation {
                        query: qi,
                        point: i,
                        estimate,
                        exact,
                    });
                }
            }
        }
        if !violations.is_empty() {
            for v in &violations {
                eprintln!(
                    "violation: query {} point {}: estimate {} vs exact {}",
                    v.query, v.point, v.estimate, v.exact
                );
            }
            return Err(CliError::Verify {
                count: violations.len(),
            });
        }
    }
    Ok(QueryOutcome {
        results,
        violations,
    })
}
