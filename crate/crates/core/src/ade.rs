//! The adaptive distance-estimation structure.
//!
//! Build draws `l` independent sketch matrices, each with `m` rows, and stores
//! the sketch of every data point under every matrix. A query samples `r`
//! matrix indices with replacement, estimates each distance once per sampled
//! matrix and reports the per-point median. The original points are not
//! retained.
//!
//! `p = 2` uses Gaussian `N(0, 1/m)` matrices with the plain Euclidean norm of
//! the sketched difference. `p < 2` uses `Stab(p)` matrices and the
//! median-of-absolute-coordinates estimator normalised by Med_p.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::points::Points;
use crate::rng::{self, label};
use crate::robust::{sample_indices, Aggregator};
use crate::sketch::{sketch_rows_into, MemoryCap, SketchBatch, SketchKind, SketchMatrix};
use crate::stable_dist::{MedPTable, StableParams, MED_2};
use crate::stats::{dot_many, l2_norm, median_in_place};

pub const DEFAULT_C_M: f64 = 40.0;
pub const DEFAULT_C_L: f64 = 1.0;
pub const DEFAULT_C_R: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdeParams {
    /// Stability index; 2.0 selects the Euclidean path.
    pub p: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub c_m: f64,
    pub c_l: f64,
    pub c_r: f64,
    pub master_seed: u64,
    /// Optional hard cap on the number of sketch matrices.
    pub max_sketches: Option<usize>,
}

impl AdeParams {
    pub fn new(p: f64, epsilon: f64, delta: f64, master_seed: u64) -> Self {
        Self {
            p,
            epsilon,
            delta,
            c_m: DEFAULT_C_M,
            c_l: DEFAULT_C_L,
            c_r: DEFAULT_C_R,
            master_seed,
            max_sketches: None,
        }
    }

    pub fn with_constants(mut self, c_m: f64, c_l: f64, c_r: f64) -> Self {
        self.c_m = c_m;
        self.c_l = c_l;
        self.c_r = c_r;
        self
    }

    pub fn with_max_sketches(mut self, cap: usize) -> Self {
        self.max_sketches = Some(cap);
        self
    }

    pub fn is_euclidean(&self) -> bool {
        self.p == 2.0
    }

    pub fn validate(&self) -> Result<()> {
        StableParams::new(self.p)?;
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.epsilon) {
            return Err(Error::InvalidParameter(format!(
                "epsilon = {} not in (0, 1)",
                self.epsilon
            )));
        }
        if !open_unit(self.delta) {
            return Err(Error::InvalidParameter(format!(
                "delta = {} not in (0, 1)",
                self.delta
            )));
        }
        for (name, c) in [("c_m", self.c_m), ("c_l", self.c_l), ("c_r", self.c_r)] {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {c} must be positive"
                )));
            }
        }
        if self.max_sketches == Some(0) {
            return Err(Error::InvalidParameter(
                "max_sketches must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn sketch_kind(&self) -> Result<SketchKind> {
        Ok(if self.is_euclidean() {
            SketchKind::GaussianInvM
        } else {
            SketchKind::PStable(StableParams::new(self.p)?)
        })
    }
}

/// Rows per sketch (`m`), number of sketches (`l`) and sketches sampled per query (`r`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sizes {
    pub m: usize,
    pub l: usize,
    pub r: usize,
}

// Absorbs representation error such as 40 / 0.1^2 = 4000.000000000001.
fn ceil_count(x: f64) -> usize {
    ((x * (1.0 - 1e-12)).ceil() as usize).max(1)
}

/// Resolved sizes:
///
/// * `m = ceil(c_m / eps^2)`
/// * `l = ceil(c_l (d + ln 1/delta) ln(3d/eps))` for `p < 2`,
///   `l = ceil(c_l (d + ln 1/delta))` for `p = 2`, then clipped to `max_sketches`
/// * `r = ceil(c_r ln(2n/delta))`
pub fn derive_sizes(params: &AdeParams, d: usize, n: usize) -> Sizes {
    let eps = params.epsilon;
    let ln_inv_delta = (1.0 / params.delta).ln();
    let m = ceil_count(params.c_m / (eps * eps));
    let base = params.c_l * (d as f64 + ln_inv_delta);
    let mut l = if params.is_euclidean() {
        ceil_count(base)
    } else {
        ceil_count(base * (3.0 * d as f64 / eps).ln())
    };
    if let Some(cap) = params.max_sketches {
        l = l.min(cap.max(1));
    }
    let r = ceil_count(params.c_r * (2.0 * n as f64 / params.delta).ln());
    Sizes { m, l, r }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QueryResult {
    pub estimates: Vec<f64>,
    pub sampled_indices: Vec<usize>,
    /// Row-major `n x r` per-sketch estimates, when retained.
    pub per_point_samples: Option<Vec<f64>>,
}

impl QueryResult {
    pub fn samples_for(&self, i: usize) -> Option<&[f64]> {
        let r = self.sampled_indices.len();
        self.per_point_samples
            .as_ref()
            .map(|s| &s[i * r..(i + 1) * r])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdeStructure {
    params: AdeParams,
    d: usize,
    n: usize,
    sizes: Sizes,
    med_p: f64,
    matrices: Vec<SketchMatrix>,
    sketched: SketchBatch,
}

impl AdeStructure {
    /// Builds with the shipped Med_p table and the default memory cap.
    pub fn build(points: &Points, params: AdeParams) -> Result<Self> {
        Self::build_with(points, params, &MedPTable::builtin(), MemoryCap::DEFAULT)
    }

    /// A `max_sketches` cap that does not bind is dropped from the stored
    /// parameters, so a saved structure loads back equal to the original.
    pub fn build_with(
        points: &Points,
        mut params: AdeParams,
        table: &MedPTable,
        cap: MemoryCap,
    ) -> Result<Self> {
        params.validate()?;
        let (n, d) = (points.n(), points.d());
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if let Some(max) = params.max_sketches {
            let uncapped = derive_sizes(
                &AdeParams {
                    max_sketches: None,
                    ..params
                },
                d,
                n,
            );
            if max >= uncapped.l {
                params.max_sketches = None;
            }
        }
        let sizes = derive_sizes(&params, d, n);
        let Sizes { m, l, .. } = sizes;
        cap.check_floats(l as u128 * m as u128 * d as u128 + n as u128 * m as u128 * l as u128)?;
        let kind = params.sketch_kind()?;
        let med_p = if params.is_euclidean() {
            MED_2
        } else {
            table.resolve(params.p)?
        };
        // each matrix sketches the data while it is still in cache
        let rows: Vec<&[f64]> = points.rows().collect();
        let mut data = vec![0.0; n * l * m];
        let matrices = (0..l)
            .zip(data.chunks_exact_mut(n * m))
            .map(|(j, out)| {
                let mut stream = rng::stream(params.master_seed, label::SKETCH, j as u64);
                let mat = SketchMatrix::generate(kind, m, d, j as u64, &mut stream, cap)?;
                sketch_rows_into(&mat, &rows, out);
                Ok(mat)
            })
            .collect::<Result<Vec<_>>>()?;
        let sketched = SketchBatch::from_raw(n, l, m, data);
        Ok(Self {
            params,
            d,
            n,
            sizes,
            med_p,
            matrices,
            sketched,
        })
    }

    /// Assembles a structure from pre-computed parts (deserialisation, tests).
    pub fn from_parts(
        params: AdeParams,
        r: usize,
        med_p: f64,
        matrices: Vec<SketchMatrix>,
        sketched: SketchBatch,
    ) -> Result<Self> {
        let first = matrices
            .first()
            .ok_or_else(|| Error::InvalidParameter("structure needs at least one matrix".into()))?;
        let (m, d) = (first.rows(), first.cols());
        if let Some(bad) = matrices.iter().find(|x| x.rows() != m || x.cols() != d) {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                found: bad.rows() * bad.cols(),
            });
        }
        if sketched.l() != matrices.len() || sketched.m() != m {
            return Err(Error::DimensionMismatch {
                expected: matrices.len() * m,
                found: sketched.l() * sketched.m(),
            });
        }
        if sketched.n() == 0 {
            return Err(Error::EmptyDataset);
        }
        if r == 0 || med_p.is_nan() || med_p <= 0.0 {
            return Err(Error::InvalidParameter(
                "r and med_p must be positive".into(),
            ));
        }
        Ok(Self {
            params,
            d,
            n: sketched.n(),
            sizes: Sizes {
                m,
                l: matrices.len(),
                r,
            },
            med_p,
            matrices,
            sketched,
        })
    }

    pub fn params(&self) -> &AdeParams {
        &self.params
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn sizes(&self) -> Sizes {
        self.sizes
    }

    pub fn med_p(&self) -> f64 {
        self.med_p
    }

    pub fn matrices(&self) -> &[SketchMatrix] {
        &self.matrices
    }

    pub fn sketched(&self) -> &SketchBatch {
        &self.sketched
    }

    /// Test hook: mutable access to the matrices, for corrupting a structure.
    #[doc(hidden)]
    pub fn matrices_mut(&mut self) -> &mut [SketchMatrix] {
        &mut self.matrices
    }

    /// Floats held by the structure (matrices plus sketched points).
    pub fn footprint_floats(&self) -> usize {
        self.matrices
            .iter()
            .map(|x| x.entries().len())
            .sum::<usize>()
            + self.sketched.as_slice().len()
    }

    /// Length of `v` as estimated by matrix `j` alone.
    pub fn single_sketch_estimate(&self, j: usize, v: &[f64]) -> Result<f64> {
        self.matrices[j].estimate_length(v, self.med_p)
    }

    pub fn query<R: Rng + ?Sized>(&self, q: &[f64], rng: &mut R) -> Result<QueryResult> {
        self.query_with(q, rng, true)
    }

    pub fn query_with<R: Rng + ?Sized>(
        &self,
        q: &[f64],
        rng: &mut R,
        keep_samples: bool,
    ) -> Result<QueryResult> {
        let mut out = self.query_batch(&[q], rng, keep_samples)?;
        Ok(out.pop().expect("one result per query"))
    }

    /// Answers a sequence of queries, drawing a fresh index sample for each.
    pub fn query_repeated<R: Rng + ?Sized, Q: AsRef<[f64]>>(
        &self,
        queries: &[Q],
        rng: &mut R,
    ) -> Result<Vec<QueryResult>> {
        self.query_batch(queries, rng, true)
    }

    /// Answers several queries at once.
    ///
    /// Index samples are drawn query by query in order, so the results are
    /// bit-identical to calling [`Self::query_with`] on each query in turn.
    /// The batch only changes how the work is scheduled: every sampled matrix
    /// is streamed once and applied to all queries that drew it.
    pub fn query_batch<R: Rng + ?Sized, Q: AsRef<[f64]>>(
        &self,
        queries: &[Q],
        rng: &mut R,
        keep_samples: bool,
    ) -> Result<Vec<QueryResult>> {
        if let Some(bad) = queries.iter().find(|q| q.as_ref().len() != self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: bad.as_ref().len(),
            });
        }
        let Sizes { m, l, r } = self.sizes;
        let sampled: Vec<Vec<usize>> = queries.iter().map(|_| sample_indices(l, r, rng)).collect();
        let distinct: Vec<Vec<usize>> = sampled
            .iter()
            .map(|s| {
                let mut d = s.clone();
                d.sort_unstable();
                d.dedup();
                d
            })
            .collect();

        // Pi_j q, once per (query, distinct sampled j)
        let mut projected: Vec<Vec<f64>> =
            distinct.iter().map(|d| vec![0.0; d.len() * m]).collect();
        let mut users: Vec<Vec<(usize, usize)>> = vec![Vec::new(); l];
        for (t, ds) in distinct.iter().enumerate() {
            for (slot, &j) in ds.iter().enumerate() {
                users[j].push((t, slot));
            }
        }
        let mut refs: Vec<&[f64]> = Vec::new();
        let mut column = Vec::new();
        for (mat, us) in self.matrices.iter().zip(&users) {
            if us.is_empty() {
                continue;
            }
            refs.clear();
            refs.extend(us.iter().map(|&(t, _)| queries[t].as_ref()));
            column.resize(us.len(), 0.0);
            for row in 0..m {
                dot_many(mat.row(row), &refs, &mut column);
                for (&(t, slot), &v) in us.iter().zip(&column) {
                    projected[t][slot * m + row] = v;
                }
            }
        }

        Ok(sampled
            .into_iter()
            .zip(&distinct)
            .zip(&projected)
            .map(|((sampled, distinct), projected)| {
                self.finish_query(sampled, distinct, projected, keep_samples)
            })
            .collect())
    }

    fn finish_query(
        &self,
        sampled: Vec<usize>,
        distinct: &[usize],
        projected: &[f64],
        keep_samples: bool,
    ) -> QueryResult {
        let Sizes { m, r, .. } = self.sizes;
        let n = self.n;
        let mut samples = vec![0.0; n * r];
        let mut scratch = vec![0.0; m];
        for (k, &j) in sampled.iter().enumerate() {
            let slot = distinct
                .binary_search(&j)
                .expect("sampled index is in the distinct set");
            let pq = &projected[slot * m..(slot + 1) * m];
            let stored = self.sketched.for_matrix(j);
            for (i, px) in stored.chunks_exact(m).enumerate() {
                samples[i * r + k] = if self.params.is_euclidean() {
                    pq.iter()
                        .zip(px)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                } else {
                    for ((s, a), b) in scratch.iter_mut().zip(pq).zip(px) {
                        *s = (a - b).abs();
                    }
                    median_in_place(&mut scratch) / self.med_p
                };
            }
        }
        let mut column = vec![0.0; r];
        let estimates = samples
            .chunks_exact(r)
            .map(|row| {
                column.copy_from_slice(row);
                Aggregator::Median.aggregate(&mut column)
            })
            .collect();
        QueryResult {
            estimates,
            sampled_indices: sampled,
            per_point_samples: keep_samples.then_some(samples),
        }
    }

    /// Lengths of `v` under every matrix, used by the representativeness audit.
    pub fn per_sketch_lengths(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: v.len(),
            });
        }
        let mut buf = vec![0.0; self.sizes.m];
        self.matrices
            .iter()
            .map(|mat| {
                mat.apply_into(v, &mut buf)?;
                Ok(if self.params.is_euclidean() {
                    l2_norm(&buf)
                } else {
                    for x in buf.iter_mut() {
                        *x = x.abs();
                    }
                    median_in_place(&mut buf) / self.med_p
                })
            })
            .collect()
    }
}
