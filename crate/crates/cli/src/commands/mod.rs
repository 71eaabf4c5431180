pub mod attack;
pub mod audit;
pub mod bench;
pub mod build;
pub mod calibrate;
pub mod query;

use std::path::Path;

use ade_core::MedPTable;

use crate::error::CliResult;

/// Shipped Med_p table, extended with the entries of `extra` when given.
pub(crate) fn med_table(extra: Option<&Path>) -> CliResult<MedPTable> {
    let mut table = MedPTable::builtin();
    if let Some(path) = extra {
        for entry in MedPTable::load(path)?.entries() {
            table.insert(*entry)?;
        }
    }
    Ok(table)
}

pub(crate) fn mib(x: u64) -> u64 {
    x.saturating_mul(1 << 20)
}
