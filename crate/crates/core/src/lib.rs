//! Distance estimation that stays accurate under adaptively chosen queries.
//!
//! An [`AdeStructure`] keeps many independent linear sketches of a dataset and
//! answers each query from the median over a few randomly sampled sketches.
//! [`adversary`] holds the sign-leak attack that breaks a single fixed
//! Johnson-Lindenstrauss sketch, with oracles for running it against the
//! naive sketch, the ensemble and exact distances.

pub mod ade;
pub mod adversary;
pub mod audit;
pub mod error;
pub mod persist;
pub mod points;
pub mod rng;
pub mod robust;
pub mod sketch;
pub mod stable_dist;
pub mod stats;

pub use ade::{derive_sizes, AdeParams, AdeStructure, QueryResult, Sizes};
pub use adversary::{
    alignment_diagnostic, random_query_baseline, run_attack, three_point_database, AdeOracle,
    AttackConfig, AttackMode, AttackTrace, DistanceOracle, EvalRecord, ExactOracle, NaiveJlOracle,
    OracleKind,
};
pub use audit::{audit_representativeness, AuditReport};
pub use error::{Error, Result};
pub use points::Points;
pub use robust::{Aggregator, Answerer, Robustified};
pub use sketch::{
    apply_batch, estimate_l2, estimate_lp, MemoryCap, SketchBatch, SketchIndex, SketchKind,
    SketchMatrix, SketchedVector,
};
pub use stable_dist::{
    fill_stable, med_p, sample_stable, tail_survival_estimate, MedPEntry, MedPTable, StableParams,
};
