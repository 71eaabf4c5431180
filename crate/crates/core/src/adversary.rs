//! Adaptive attack on distance-estimation oracles.
//!
//! The database is `{-e, 0, +e}` for a basis vector `e`. Each round the
//! attacker submits a fresh Gaussian probe `z_i`, reads the reported distances
//! to `+e` and `-e`, sets `W_i = 1` when the distance to `+e` is no larger, and
//! accumulates `z += (-1)^W_i z_i`. Against a single fixed JL matrix `Pi` the
//! sign bit leaks `sign(<z_i, Pi^T Pi e>)`, so `z` drifts toward
//! `-Pi^T Pi e` and its sketched length blows up relative to its true length.
//!
//! The attack only reads answers. Evaluation queries on the accumulated
//! vector never feed back into probe generation.

use std::io::{self, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ade::{AdeParams, AdeStructure};
use crate::error::{Error, Result};
use crate::points::Points;
use crate::rng::{self, label, StreamRng};
use crate::sketch::{MemoryCap, SketchKind, SketchMatrix};
use crate::stable_dist::MedPTable;
use crate::stats::{dot, l2_norm};

/// Indices of the three database points.
pub const MINUS_E: usize = 0;
pub const ORIGIN: usize = 1;
pub const PLUS_E: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    NaiveJl { k: usize },
    Ade,
    Exact,
}

/// Answers distance queries against a fixed database.
pub trait DistanceOracle {
    fn dim(&self) -> usize;

    fn kind(&self) -> OracleKind;

    /// Reported distance from `q` to every database point.
    fn answer(&mut self, q: &[f64]) -> Result<Vec<f64>>;

    /// Answers non-adaptive queries in order. Must be equivalent to calling
    /// [`Self::answer`] on each query in turn.
    fn answer_batch(&mut self, queries: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        queries.iter().map(|q| self.answer(q)).collect()
    }
}

fn check_dim(expected: usize, q: &[f64]) -> Result<()> {
    if q.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: q.len(),
        });
    }
    Ok(())
}

/// `{-e_axis, 0, +e_axis}` in `R^d`.
pub fn three_point_database(d: usize, axis: usize) -> Result<Points> {
    if axis >= d {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} outside dimension {d}"
        )));
    }
    let mut data = vec![0.0; 3 * d];
    data[MINUS_E * d + axis] = -1.0;
    data[PLUS_E * d + axis] = 1.0;
    Points::new(d, data)
}

/// One fixed `k x d` Gaussian matrix with `N(0, 1/k)` entries; reports
/// `||Pi q - Pi x_i||`.
#[derive(Debug, Clone)]
pub struct NaiveJlOracle {
    matrix: SketchMatrix,
    sketched: Vec<Vec<f64>>,
    buf: Vec<f64>,
}

impl NaiveJlOracle {
    pub fn new(points: &Points, k: usize, seed: u64) -> Result<Self> {
        let mut stream = rng::stream(seed, label::ORACLE, 0);
        let matrix = SketchMatrix::generate(
            SketchKind::GaussianInvM,
            k,
            points.d(),
            0,
            &mut stream,
            MemoryCap::DEFAULT,
        )?;
        Self::with_matrix(points, matrix)
    }

    pub fn with_matrix(points: &Points, matrix: SketchMatrix) -> Result<Self> {
        let sketched = points
            .rows()
            .map(|x| matrix.apply(x).map(|s| s.values))
            .collect::<Result<Vec<_>>>()?;
        let buf = vec![0.0; matrix.rows()];
        Ok(Self {
            matrix,
            sketched,
            buf,
        })
    }

    /// White-box access for [`alignment_diagnostic`].
    pub fn matrix(&self) -> &SketchMatrix {
        &self.matrix
    }
}

impl DistanceOracle for NaiveJlOracle {
    fn dim(&self) -> usize {
        self.matrix.cols()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::NaiveJl {
            k: self.matrix.rows(),
        }
    }

    fn answer(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        self.matrix.apply_into(q, &mut self.buf)?;
        Ok(self
            .sketched
            .iter()
            .map(|px| {
                self.buf
                    .iter()
                    .zip(px)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }
}

/// True Euclidean distances.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    points: Points,
}

impl ExactOracle {
    pub fn new(points: Points) -> Self {
        Self { points }
    }
}

impl DistanceOracle for ExactOracle {
    fn dim(&self) -> usize {
        self.points.d()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::Exact
    }

    fn answer(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.points.d(), q)?;
        Ok(self
            .points
            .rows()
            .map(|x| {
                q.iter()
                    .zip(x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect())
    }
}

/// An [`AdeStructure`] with its own query stream.
#[derive(Debug, Clone)]
pub struct AdeOracle {
    structure: AdeStructure,
    rng: StreamRng,
}

impl AdeOracle {
    pub fn new(structure: AdeStructure, query_seed: u64) -> Self {
        Self {
            structure,
            rng: rng::stream(query_seed, label::QUERY, 0),
        }
    }

    pub fn build(
        points: &Points,
        params: AdeParams,
        table: &MedPTable,
        cap: MemoryCap,
    ) -> Result<Self> {
        let structure = AdeStructure::build_with(points, params, table, cap)?;
        let query_seed = rng::derive_seed(params.master_seed, label::QUERY, 0);
        Ok(Self::new(structure, query_seed))
    }

    pub fn structure(&self) -> &AdeStructure {
        &self.structure
    }
}

impl DistanceOracle for AdeOracle {
    fn dim(&self) -> usize {
        self.structure.d()
    }

    fn kind(&self) -> OracleKind {
        OracleKind::Ade
    }

    fn answer(&mut self, q: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .structure
            .query_with(q, &mut self.rng, false)?
            .estimates)
    }

    fn answer_batch(&mut self, queries: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .structure
            .query_batch(queries, &mut self.rng, false)?
            .into_iter()
            .map(|r| r.estimates)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackMode {
    Adaptive,
    /// Same probes, no sign adaptation.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub n_rounds: usize,
    pub eval_every: usize,
    /// Probe `i` is drawn from the stream `(seed, PROBE, i)`.
    pub seed: u64,
}

/// Evaluation of the accumulated vector after `round` probes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalRecord {
    pub round: usize,
    /// Sign bit of the probe in this round.
    pub w: bool,
    pub acc_norm_true: f64,
    pub acc_norm_reported: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackTrace {
    pub mode: AttackMode,
    pub oracle: OracleKind,
    pub config: AttackConfig,
    /// `W_i` for every round.
    pub signs: Vec<bool>,
    pub evaluations: Vec<EvalRecord>,
    /// Accumulated vector after the last round.
    pub z: Vec<f64>,
}

pub const TRACE_CSV_HEADER: &str = "round,w,acc_norm_true,acc_norm_reported,ratio";

impl AttackTrace {
    pub fn final_ratio(&self) -> Option<f64> {
        self.evaluations.last().map(|e| e.ratio)
    }

    /// Header line plus one row per evaluation, LF line endings, shortest
    /// round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{TRACE_CSV_HEADER}")?;
        for e in &self.evaluations {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.round, e.w as u8, e.acc_norm_true, e.acc_norm_reported, e.ratio
            )?;
        }
        Ok(())
    }
}

pub fn probe(seed: u64, round: usize, d: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, label::PROBE, round as u64);
    (0..d).map(|_| StandardNormal.sample(&mut r)).collect()
}

fn validate(oracle: &dyn DistanceOracle, config: &AttackConfig) -> Result<()> {
    if config.n_rounds == 0 || config.eval_every == 0 {
        return Err(Error::InvalidParameter(
            "n_rounds and eval_every must be at least 1".into(),
        ));
    }
    if oracle.dim() == 0 {
        return Err(Error::InvalidParameter("oracle has dimension 0".into()));
    }
    Ok(())
}

fn evaluate(
    oracle: &mut dyn DistanceOracle,
    z: &[f64],
    round: usize,
    w: bool,
) -> Result<EvalRecord> {
    let answers = oracle.answer(z)?;
    if answers.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            found: answers.len(),
        });
    }
    let acc_norm_true = l2_norm(z);
    let acc_norm_reported = answers[ORIGIN];
    Ok(EvalRecord {
        round,
        w,
        acc_norm_true,
        acc_norm_reported,
        ratio: acc_norm_reported / acc_norm_true,
    })
}

fn run(
    oracle: &mut dyn DistanceOracle,
    config: AttackConfig,
    mode: AttackMode,
) -> Result<AttackTrace> {
    validate(oracle, &config)?;
    let d = oracle.dim();
    let mut z = vec![0.0; d];
    let mut signs = Vec::with_capacity(config.n_rounds);
    let mut evaluations = Vec::with_capacity(config.n_rounds / config.eval_every);
    // Probes never depend on answers, so each stretch of probes up to the
    // next evaluation is submitted as one batch.
    let mut round = 0;
    while round < config.n_rounds {
        let next_eval = (round / config.eval_every + 1) * config.eval_every;
        let stop = next_eval.min(config.n_rounds);
        let probes: Vec<Vec<f64>> = (round + 1..=stop)
            .map(|i| probe(config.seed, i, d))
            .collect();
        let ws: Vec<bool> = match mode {
            AttackMode::Adaptive => oracle
                .answer_batch(&probes)?
                .iter()
                .map(|answers| {
                    if answers.len() != 3 {
                        return Err(Error::DimensionMismatch {
                            expected: 3,
                            found: answers.len(),
                        });
                    }
                    Ok(answers[PLUS_E] <= answers[MINUS_E])
                })
                .collect::<Result<_>>()?,
            AttackMode::Random => vec![false; probes.len()],
        };
        for (zi, &w) in probes.iter().zip(&ws) {
            if w {
                z.iter_mut().zip(zi).for_each(|(a, b)| *a -= b);
            } else {
                z.iter_mut().zip(zi).for_each(|(a, b)| *a += b);
            }
        }
        signs.extend_from_slice(&ws);
        round = stop;
        if round % config.eval_every == 0 {
            let w = *signs.last().expect("at least one round ran");
            evaluations.push(evaluate(oracle, &z, round, w)?);
        }
    }
    Ok(AttackTrace {
        mode,
        oracle: oracle.kind(),
        config,
        signs,
        evaluations,
        z,
    })
}

/// Runs the sign-adaptive attack. The oracle must be built over
/// [`three_point_database`].
pub fn run_attack(oracle: &mut dyn DistanceOracle, config: AttackConfig) -> Result<AttackTrace> {
    run(oracle, config, AttackMode::Adaptive)
}

/// Same schedule and probes as [`run_attack`] but the accumulated vector is a
/// plain sum of the probes.
pub fn random_query_baseline(
    oracle: &mut dyn DistanceOracle,
    config: AttackConfig,
) -> Result<AttackTrace> {
    run(oracle, config, AttackMode::Random)
}

/// Cosine similarity between `z` and `Pi^T Pi e_axis`. White-box; needs the
/// attacked matrix.
pub fn alignment_diagnostic(z: &[f64], matrix: &SketchMatrix, axis: usize) -> Result<f64> {
    let d = matrix.cols();
    check_dim(d, z)?;
    if axis >= d {
        return Err(Error::InvalidParameter(format!(
            "axis {axis} outside dimension {d}"
        )));
    }
    // Pi e = column `axis`; y = Pi^T (Pi e)
    let pe: Vec<f64> = (0..matrix.rows()).map(|i| matrix.row(i)[axis]).collect();
    let mut y = vec![0.0; d];
    for (i, &c) in pe.iter().enumerate() {
        y.iter_mut()
            .zip(matrix.row(i))
            .for_each(|(a, b)| *a += c * b);
    }
    let (nz, ny) = (l2_norm(z), l2_norm(&y));
    if nz == 0.0 || ny == 0.0 {
        return Err(Error::InvalidParameter(
            "alignment of a zero vector is undefined".into(),
        ));
    }
    Ok(dot(z, &y) / (nz * ny))
}

/// Median of `values`, for summarising repetitions.
pub fn median_ratio(values: &[f64]) -> f64 {
    crate::stats::median(values)
}
