//! Dense linear sketch matrices and the two per-sketch length estimators.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::points::Points;
use crate::robust::Answerer;
use crate::stable_dist::{fill_stable, StableParams};
use crate::stats::{dot, dot4, l2_norm, median_in_place};

/// Upper bound on the bytes a single build may allocate for sketch data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemoryCap(pub u64);

impl MemoryCap {
    pub const DEFAULT: MemoryCap = MemoryCap(2 << 30);

    pub fn check_floats(self, floats: u128) -> Result<()> {
        let requested = floats.saturating_mul(8);
        if requested > self.0 as u128 {
            return Err(Error::Capacity {
                requested: requested.min(u64::MAX as u128) as u64,
                cap: self.0,
            });
        }
        Ok(())
    }
}

impl Default for MemoryCap {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SketchKind {
    /// Entries i.i.d. N(0, 1/m).
    GaussianInvM,
    /// Entries i.i.d. Stab(p).
    PStable(StableParams),
}

/// An `m x d` projection, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchMatrix {
    kind: SketchKind,
    m: usize,
    d: usize,
    entries: Vec<f64>,
    stream_id: u64,
}

impl SketchMatrix {
    pub fn generate<R: Rng + ?Sized>(
        kind: SketchKind,
        m: usize,
        d: usize,
        stream_id: u64,
        rng: &mut R,
        cap: MemoryCap,
    ) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "sketch shape must be positive, got {m} x {d}"
            )));
        }
        cap.check_floats(m as u128 * d as u128)?;
        let len = m * d;
        let entries: Vec<f64> = match kind {
            SketchKind::GaussianInvM => {
                let scale = 1.0 / (m as f64).sqrt();
                (0..len)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(rng);
                        z * scale
                    })
                    .collect()
            }
            SketchKind::PStable(params) => {
                let mut entries = vec![0.0; len];
                fill_stable(params, rng, &mut entries);
                entries
            }
        };
        Ok(Self {
            kind,
            m,
            d,
            entries,
            stream_id,
        })
    }

    /// Wraps caller-supplied entries (row-major, `m * d` finite values).
    pub fn from_entries(
        kind: SketchKind,
        m: usize,
        d: usize,
        entries: Vec<f64>,
        stream_id: u64,
    ) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::InvalidParameter(format!(
                "sketch shape must be positive, got {m} x {d}"
            )));
        }
        if entries.len() != m * d {
            return Err(Error::DimensionMismatch {
                expected: m * d,
                found: entries.len(),
            });
        }
        if let Some(pos) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                row: pos / d,
                col: pos % d,
            });
        }
        Ok(Self {
            kind,
            m,
            d,
            entries,
            stream_id,
        })
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn cols(&self) -> usize {
        self.d
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[doc(hidden)]
    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn apply(&self, v: &[f64]) -> Result<SketchedVector> {
        let mut values = vec![0.0; self.m];
        self.apply_into(v, &mut values)?;
        Ok(SketchedVector {
            values,
            source: self.stream_id,
        })
    }

    /// `out = self * v`; `out` must have length `m`.
    pub fn apply_into(&self, v: &[f64], out: &mut [f64]) -> Result<()> {
        if v.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: v.len(),
            });
        }
        if out.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                found: out.len(),
            });
        }
        for (o, row) in out.iter_mut().zip(self.entries.chunks_exact(self.d)) {
            *o = dot(row, v);
        }
        Ok(())
    }

    pub fn frobenius(&self) -> f64 {
        l2_norm(&self.entries)
    }

    /// Length estimate of `v` as seen through this single sketch, using the
    /// estimator that matches the sketch kind.
    pub fn estimate_length(&self, v: &[f64], med_p: f64) -> Result<f64> {
        let sv = self.apply(v)?;
        Ok(match self.kind {
            SketchKind::GaussianInvM => sv.estimate_l2(),
            SketchKind::PStable(_) => sv.estimate_lp(med_p),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchedVector {
    pub values: Vec<f64>,
    /// `stream_id` of the matrix that produced it.
    pub source: u64,
}

impl SketchedVector {
    pub fn estimate_l2(&self) -> f64 {
        estimate_l2(&self.values)
    }

    pub fn estimate_lp(&self, med_p: f64) -> f64 {
        estimate_lp(&self.values, med_p)
    }
}

/// Plain Euclidean norm of the sketched coordinates.
pub fn estimate_l2(values: &[f64]) -> f64 {
    l2_norm(values)
}

/// `median(|values|) / med_p`.
pub fn estimate_lp(values: &[f64], med_p: f64) -> f64 {
    let mut scratch: Vec<f64> = values.iter().map(|x| x.abs()).collect();
    median_in_place(&mut scratch) / med_p
}

/// Sketches of every point under every matrix, laid out sketch-major:
/// `[matrix j][point i][row]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchBatch {
    n: usize,
    l: usize,
    m: usize,
    data: Vec<f64>,
}

impl SketchBatch {
    pub(crate) fn from_raw(n: usize, l: usize, m: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * l * m);
        Self { n, l, m, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Sketch of point `i` under matrix `j`.
    pub fn get(&self, i: usize, j: usize) -> &[f64] {
        let start = (j * self.n + i) * self.m;
        &self.data[start..start + self.m]
    }

    /// All `n` sketches under matrix `j`, contiguous.
    pub fn for_matrix(&self, j: usize) -> &[f64] {
        let start = j * self.n * self.m;
        &self.data[start..start + self.n * self.m]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn capacity_floats(&self) -> usize {
        self.data.capacity()
    }
}

/// `out[i * m..(i + 1) * m] = mat * rows[i]`, accumulated like [`SketchMatrix::apply`].
pub(crate) fn sketch_rows_into(mat: &SketchMatrix, rows: &[&[f64]], out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the feature was detected at runtime
        return unsafe { sketch_rows_into_avx(mat, rows, out) };
    }
    sketch_rows_into_generic(mat, rows, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
unsafe fn sketch_rows_into_avx(mat: &SketchMatrix, rows: &[&[f64]], out: &mut [f64]) {
    use std::arch::x86_64::*;

    let (m, d) = (mat.m, mat.d);
    let body = d - d % 4;
    let mut groups = rows.chunks_exact(4);
    let mut outs = out.chunks_exact_mut(4 * m);
    for (g, o) in (&mut groups).zip(&mut outs) {
        let pts = [g[0], g[1], g[2], g[3]];
        for r in 0..m {
            let e = &mat.entries[r * d..(r + 1) * d];
            let mut acc = [_mm256_setzero_pd(); 4];
            let mut c = 0;
            while c < body {
                // SAFETY: c + 4 <= body <= d, the length of e and of every point
                let x = unsafe { _mm256_loadu_pd(e.as_ptr().add(c)) };
                for (acc, p) in acc.iter_mut().zip(pts) {
                    let y = unsafe { _mm256_loadu_pd(p.as_ptr().add(c)) };
                    *acc = _mm256_add_pd(*acc, _mm256_mul_pd(x, y));
                }
                c += 4;
            }
            for (k, p) in pts.iter().enumerate() {
                let mut lanes = [0.0; 4];
                // SAFETY: lanes holds four f64
                unsafe { _mm256_storeu_pd(lanes.as_mut_ptr(), acc[k]) };
                let mut tail = 0.0;
                for (x, y) in e[body..].iter().zip(&p[body..]) {
                    tail += x * y;
                }
                o[k * m + r] = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]) + tail;
            }
        }
    }
    for (x, o) in groups
        .remainder()
        .iter()
        .zip(outs.into_remainder().chunks_exact_mut(m))
    {
        for (e, v) in mat.entries.chunks_exact(d).zip(o.iter_mut()) {
            *v = dot(e, x);
        }
    }
}

#[inline(always)]
fn sketch_rows_into_generic(mat: &SketchMatrix, rows: &[&[f64]], out: &mut [f64]) {
    let (m, d) = (mat.m, mat.d);
    debug_assert_eq!(out.len(), rows.len() * m);
    let mut groups = rows.chunks_exact(4);
    let mut outs = out.chunks_exact_mut(4 * m);
    for (g, o) in (&mut groups).zip(&mut outs) {
        let (o0, rest) = o.split_at_mut(m);
        let (o1, rest) = rest.split_at_mut(m);
        let (o2, o3) = rest.split_at_mut(m);
        let pts = [g[0], g[1], g[2], g[3]];
        for (r, e) in mat.entries.chunks_exact(d).enumerate() {
            let v = dot4(e, pts);
            o0[r] = v[0];
            o1[r] = v[1];
            o2[r] = v[2];
            o3[r] = v[3];
        }
    }
    for (x, o) in groups
        .remainder()
        .iter()
        .zip(outs.into_remainder().chunks_exact_mut(m))
    {
        for (e, v) in mat.entries.chunks_exact(d).zip(o.iter_mut()) {
            *v = dot(e, x);
        }
    }
}

/// Sketches every point under every matrix with a blocked product.
///
/// Each output coordinate is accumulated in exactly the order [`SketchMatrix::apply`]
/// uses, so `batch.get(i, j) == matrices[j].apply(points.row(i))` bit for bit.
pub fn apply_batch(
    matrices: &[SketchMatrix],
    points: &Points,
    cap: MemoryCap,
) -> Result<SketchBatch> {
    let n = points.n();
    let l = matrices.len();
    let m = matrices.first().map_or(0, |mat| mat.m);
    for mat in matrices {
        if mat.d != points.d() {
            return Err(Error::DimensionMismatch {
                expected: mat.d,
                found: points.d(),
            });
        }
        if mat.m != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                found: mat.m,
            });
        }
    }
    cap.check_floats(n as u128 * l as u128 * m as u128)?;
    let mut data = vec![0.0; n * l * m];
    if n == 0 || l == 0 {
        return Ok(SketchBatch::from_raw(n, l, m, data));
    }
    let rows: Vec<&[f64]> = points.rows().collect();
    for (j, mat) in matrices.iter().enumerate() {
        sketch_rows_into(mat, &rows, &mut data[j * n * m..(j + 1) * n * m]);
    }
    Ok(SketchBatch::from_raw(n, l, m, data))
}

/// One sketch matrix together with the sketches of a dataset: the plain
/// non-adaptive distance estimator that the ensemble robustifies.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchIndex {
    matrix: SketchMatrix,
    med_p: f64,
    sketches: Vec<f64>,
}

impl SketchIndex {
    pub fn new(matrix: SketchMatrix, points: &Points, med_p: f64) -> Result<Self> {
        let batch = apply_batch(std::slice::from_ref(&matrix), points, MemoryCap::DEFAULT)?;
        Ok(Self {
            matrix,
            med_p,
            sketches: batch.data,
        })
    }

    pub fn matrix(&self) -> &SketchMatrix {
        &self.matrix
    }

    /// Estimated distance from `q` to every indexed point.
    pub fn distances(&self, q: &[f64]) -> Result<Vec<f64>> {
        let pq = self.matrix.apply(q)?.values;
        let mut diff = vec![0.0; self.matrix.m];
        Ok(self
            .sketches
            .chunks_exact(self.matrix.m)
            .map(|px| {
                for ((o, a), b) in diff.iter_mut().zip(&pq).zip(px) {
                    *o = a - b;
                }
                match self.matrix.kind {
                    SketchKind::GaussianInvM => estimate_l2(&diff),
                    SketchKind::PStable(_) => estimate_lp(&diff, self.med_p),
                }
            })
            .collect())
    }
}

impl Answerer<[f64]> for SketchIndex {
    type Error = Error;

    fn answer(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.distances(query)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::stats::median;

    fn gaussian(m: usize, d: usize, seed: u64) -> SketchMatrix {
        let mut r = rng::stream(seed, 1, 0);
        SketchMatrix::generate(
            SketchKind::GaussianInvM,
            m,
            d,
            0,
            &mut r,
            MemoryCap::DEFAULT,
        )
        .unwrap()
    }

    fn identity(d: usize) -> SketchMatrix {
        let mut e = vec![0.0; d * d];
        for i in 0..d {
            e[i * d + i] = 1.0;
        }
        SketchMatrix::from_entries(SketchKind::GaussianInvM, d, d, e, 0).unwrap()
    }

    #[test]
    fn gaussian_entries_have_variance_one_over_m() {
        let mat = gaussian(100, 50, 3);
        let e = mat.entries();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        let var = e.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (e.len() - 1) as f64;
        assert!(mean.abs() <= 0.02, "mean {mean}");
        assert!((0.008..=0.012).contains(&var), "var {var}");
    }

    #[test]
    fn cauchy_entries_have_unit_median_abs() {
        let kind = SketchKind::PStable(StableParams::new(1.0).unwrap());
        let mut all = Vec::new();
        for s in 0..200 {
            let mut r = rng::stream(s, 2, 0);
            let mat = SketchMatrix::generate(kind, 10, 10, s, &mut r, MemoryCap::DEFAULT).unwrap();
            all.extend(mat.entries().iter().map(|x| x.abs()));
        }
        let m = median(&all);
        assert!((0.95..=1.05).contains(&m), "median {m}");
    }

    #[test]
    fn one_by_one_sketch_scales_scalar() {
        let mat = gaussian(1, 1, 9);
        let out = mat.apply(&[3.0]).unwrap();
        assert_eq!(out.values, vec![mat.entries()[0] * 3.0]);
    }

    #[test]
    fn zero_and_identity() {
        let mat = gaussian(7, 5, 1);
        assert!(mat
            .apply(&[0.0; 5])
            .unwrap()
            .values
            .iter()
            .all(|&x| x == 0.0));
        let v = [1.5, -2.0, 0.25, 8.0, -1.0];
        assert_eq!(identity(5).apply(&v).unwrap().values, v.to_vec());
    }

    #[test]
    fn doubling_input_doubles_output_exactly() {
        let mat = gaussian(12, 9, 4);
        let v: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
        let v2: Vec<f64> = v.iter().map(|x| 2.0 * x).collect();
        let a = mat.apply(&v).unwrap().values;
        let b = mat.apply(&v2).unwrap().values;
        assert!(a.iter().zip(&b).all(|(x, y)| 2.0 * x == *y));
    }

    #[test]
    fn dimension_mismatch_and_bad_shapes() {
        let mat = gaussian(3, 4, 1);
        assert!(matches!(
            mat.apply(&[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut r = rng::stream(0, 0, 0);
        assert!(SketchMatrix::generate(
            SketchKind::GaussianInvM,
            0,
            4,
            0,
            &mut r,
            MemoryCap::DEFAULT
        )
        .is_err());
        assert!(matches!(
            SketchMatrix::generate(
                SketchKind::GaussianInvM,
                1000,
                1000,
                0,
                &mut r,
                MemoryCap(1000)
            ),
            Err(Error::Capacity { .. })
        ));
        assert!(
            SketchMatrix::from_entries(SketchKind::GaussianInvM, 2, 2, vec![1.0; 3], 0).is_err()
        );
        assert!(
            SketchMatrix::from_entries(SketchKind::GaussianInvM, 1, 2, vec![1.0, f64::NAN], 0)
                .is_err()
        );
    }

    #[test]
    fn frobenius_norms() {
        let zero =
            SketchMatrix::from_entries(SketchKind::GaussianInvM, 2, 3, vec![0.0; 6], 0).unwrap();
        assert_eq!(zero.frobenius(), 0.0);
        assert!((identity(5).frobenius() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn estimators_on_zero_and_scaling() {
        assert_eq!(estimate_l2(&[0.0; 6]), 0.0);
        assert_eq!(estimate_lp(&[0.0; 6], 1.3), 0.0);
        let v = [0.3, -1.7, 2.2, -0.01, 5.0];
        for c in [0.5, 2.0, -4.0, 1024.0] {
            let cv: Vec<f64> = v.iter().map(|x| c * x).collect();
            assert_eq!(estimate_lp(&cv, 0.9), c.abs() * estimate_lp(&v, 0.9));
            assert_eq!(estimate_l2(&cv), c.abs() * estimate_l2(&v));
        }
        // even length: mean of the middle two
        assert_eq!(estimate_lp(&[1.0, -3.0, 2.0, -4.0], 1.0), 2.5);
    }

    #[test]
    fn portable_kernel_matches_dispatched() {
        let mat = gaussian(9, 11, 4);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|i| (0..11).map(|k| ((i * 11 + k) as f64).sin()).collect())
            .collect();
        let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let (mut a, mut b) = (vec![0.0; 63], vec![0.0; 63]);
        sketch_rows_into(&mat, &rows, &mut a);
        sketch_rows_into_generic(&mat, &rows, &mut b);
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn batch_matches_single_application() {
        let mats: Vec<SketchMatrix> = (0..3).map(|s| gaussian(71, 13, s)).collect();
        let rows: Vec<Vec<f64>> = (0..67)
            .map(|i| (0..13).map(|k| ((i * 13 + k) as f64).cos()).collect())
            .collect();
        let pts = Points::from_rows(&rows).unwrap();
        let batch = apply_batch(&mats, &pts, MemoryCap::DEFAULT).unwrap();
        for (j, mat) in mats.iter().enumerate() {
            for (i, row) in rows.iter().enumerate() {
                let single = mat.apply(row).unwrap().values;
                assert!(single
                    .iter()
                    .zip(batch.get(i, j))
                    .all(|(a, b)| a.to_bits() == b.to_bits()));
            }
        }
    }

    #[test]
    fn batch_of_nothing() {
        let mats = vec![gaussian(4, 3, 0)];
        let pts = Points::new(3, Vec::new()).unwrap();
        let batch = apply_batch(&mats, &pts, MemoryCap::DEFAULT).unwrap();
        assert_eq!(batch.n(), 0);
        assert!(batch.as_slice().is_empty());
        let wrong = Points::new(2, vec![1.0, 2.0]).unwrap();
        assert!(apply_batch(&mats, &wrong, MemoryCap::DEFAULT).is_err());
    }

    #[test]
    fn sketch_index_estimates_every_point() {
        let pts = Points::from_rows(&[vec![0.0, 0.0, 0.0], vec![3.0, 4.0, 0.0]]).unwrap();
        let mut r = rng::stream(6, 0, 0);
        let mat = SketchMatrix::generate(
            SketchKind::GaussianInvM,
            400,
            3,
            0,
            &mut r,
            MemoryCap::DEFAULT,
        )
        .unwrap();
        let index = SketchIndex::new(mat, &pts, 1.0).unwrap();
        let d = index.answer(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] / 5.0 - 1.0).abs() < 0.2, "{}", d[1]);
    }
}
