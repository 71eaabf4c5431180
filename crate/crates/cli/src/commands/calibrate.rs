use std::path::PathBuf;

use ade_core::{MedPTable, StableParams};
use clap::Args;
use serde::Serialize;

use crate::error::CliResult;
use crate::output::{header, write_atomic};

#[derive(Debug, Clone, Args, Serialize)]
pub struct CalibrateArgs {
    /// Stability indices to calibrate.
    #[arg(long, value_delimiter = ',', required = true)]
    pub p: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000_000)]
    pub samples: usize,
    /// Med_p table (TSV) to write; existing entries are kept.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run_calibrate(args: &CalibrateArgs) -> CliResult<MedPTable> {
    let mut table = if args.out.exists() {
        MedPTable::load(&args.out)?
    } else {
        MedPTable::new()
    };
    for &p in &args.p {
        table.calibrate(StableParams::new(p)?, args.seed, args.samples)?;
    }
    let mut text = header("calibrate", args, args.seed);
    text.push_str("# p\tmed_p\tseed\tn_samples\n");
    text.push_str(&table.to_tsv());
    write_atomic(&args.out, text.as_bytes())?;
    Ok(table)
}
