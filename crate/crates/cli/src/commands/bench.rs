use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use ade_core::rng::{self, derive_seed, label};
use ade_core::stats::median;
use ade_core::{AdeParams, AdeStructure, MemoryCap, Points};
use clap::Args;
use rand::Rng;
use serde::Serialize;

use super::mib;
use crate::error::{CliError, CliResult};
use crate::output::{header, write_atomic};

#[derive(Debug, Clone, Args, Serialize)]
pub struct BenchArgs {
    /// Dataset sizes.
    #[arg(long, value_delimiter = ',', default_value = "1000,2000,4000")]
    pub n: Vec<usize>,
    /// Dimensions.
    #[arg(long, value_delimiter = ',', default_value = "16,32")]
    pub d: Vec<usize>,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Timed queries per cell; the median is reported.
    #[arg(long, default_value_t = 15)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 2048)]
    pub memory_cap_mib: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub l: usize,
    pub r: usize,
    pub build_ms: f64,
    pub query_ms: f64,
    pub footprint_floats: usize,
}

fn uniform_points(n: usize, d: usize, seed: u64) -> Points {
    let mut r = rng::stream(seed, label::DATA, 0);
    let data = (0..n * d).map(|_| r.random::<f64>() * 2.0 - 1.0).collect();
    Points::new(d, data).expect("finite uniform data")
}

pub fn bench_cell(args: &BenchArgs, n: usize, d: usize) -> CliResult<BenchRow> {
    let cell_seed = derive_seed(args.seed, label::BENCH, ((n as u64) << 32) | d as u64);
    let points = uniform_points(n, d, cell_seed);
    let params = AdeParams::new(args.p, args.epsilon, args.delta, cell_seed);
    let start = Instant::now();
    let structure = AdeStructure::build_with(
        &points,
        params,
        &ade_core::MedPTable::builtin(),
        MemoryCap(mib(args.memory_cap_mib)),
    )?;
    let build_ms = start.elapsed().as_secs_f64() * 1e3;

    let queries = uniform_points(args.queries + 1, d, cell_seed ^ 1);
    let mut qrng = rng::stream(cell_seed, label::QUERY, 0);
    // warm-up
    structure.query_with(queries.row(0), &mut qrng, false)?;
    let mut times = Vec::with_capacity(args.queries);
    for q in queries.rows().skip(1) {
        let t = Instant::now();
        let res = structure.query_with(q, &mut qrng, false)?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(res);
    }
    let sizes = structure.sizes();
    Ok(BenchRow {
        n,
        d,
        m: sizes.m,
        l: sizes.l,
        r: sizes.r,
        build_ms,
        query_ms: median(&times),
        footprint_floats: structure.footprint_floats(),
    })
}

pub fn render(args: &BenchArgs, rows: &[BenchRow]) -> String {
    let mut out = header("bench", args, args.seed);
    out.push_str("n,d,m,l,r,build_ms,query_ms\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.n, r.d, r.m, r.l, r.r, r.build_ms, r.query_ms
        );
    }
    out
}

/// Times build and query over the `d x n` grid. Cells run sequentially so
/// timings do not contend with each other.
pub fn run_bench(args: &BenchArgs) -> CliResult<Vec<BenchRow>> {
    if args.queries == 0 {
        return Err(CliError::Usage("--queries must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &d in &args.d {
        for &n in &args.n {
            rows.push(bench_cell(args, n, d)?);
        }
    }
    if let Some(path) = &args.out {
        write_atomic(path, render(args, &rows).as_bytes())?;
    }
    Ok(rows)
}
