use std::path::PathBuf;

use ade_core::ade::{DEFAULT_C_L, DEFAULT_C_M, DEFAULT_C_R};
use ade_core::{AdeParams, AdeStructure, MemoryCap};
use clap::Args;
use serde::Serialize;

use super::{med_table, mib};
use crate::dataset::read_dataset;
use crate::error::CliResult;

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildArgs {
    /// Dataset (CSV or ADEV binary).
    #[arg(long)]
    pub data: PathBuf,
    /// Stability index in [0.25, 2]; 2 selects the Gaussian path.
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    #[arg(long, default_value_t = DEFAULT_C_M)]
    pub c_m: f64,
    #[arg(long, default_value_t = DEFAULT_C_L)]
    pub c_l: f64,
    #[arg(long, default_value_t = DEFAULT_C_R)]
    pub c_r: f64,
    /// Cap on the number of sketch matrices.
    #[arg(long)]
    pub max_sketches: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2048)]
    pub memory_cap_mib: u64,
    /// Extra Med_p calibrations (TSV) for indices not in the shipped table.
    #[arg(long)]
    pub med_table: Option<PathBuf>,
}

impl BuildArgs {
    pub fn params(&self) -> AdeParams {
        let mut params = AdeParams::new(self.p, self.epsilon, self.delta, self.seed)
            .with_constants(self.c_m, self.c_l, self.c_r);
        params.max_sketches = self.max_sketches;
        params
    }
}

pub struct BuildOutcome {
    pub structure: AdeStructure,
    pub footprint_bytes: usize,
}

impl BuildOutcome {
    pub fn summary(&self) -> String {
        let s = self.structure.sizes();
        format!(
            "n={} d={} m={} l={} r={} footprint_bytes={}",
            self.structure.n(),
            self.structure.d(),
            s.m,
            s.l,
            s.r,
            self.footprint_bytes
        )
    }
}

pub fn run_build(args: &BuildArgs) -> CliResult<BuildOutcome> {
    let data = read_dataset(&args.data, false, None)?;
    let table = med_table(args.med_table.as_deref())?;
    let structure = AdeStructure::build_with(
        &data.points,
        args.params(),
        &table,
        MemoryCap(mib(args.memory_cap_mib)),
    )?;
    structure.save(&args.out)?;
    let footprint_bytes = structure.footprint_floats() * 8;
    Ok(BuildOutcome {
        structure,
        footprint_bytes,
    })
}
