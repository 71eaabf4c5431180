//! Symmetric p-stable variates and the Med_p normaliser.
//!
//! A draw `Z ~ Stab(p)` has characteristic function `E[exp(-itZ)] = exp(-|t|^p)`.
//! For p = 2 this is a centred normal with variance 2 and for p = 1 the
//! standard Cauchy. Other indices use the two-uniform transform (uniform
//! angle plus unit exponential).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{self, label};
use crate::stats::median_in_place;

pub const MIN_P: f64 = 0.25;
pub const MAX_P: f64 = 2.0;

/// Minimum sample count accepted for a Med_p calibration.
pub const MIN_CALIBRATION_SAMPLES: usize = 1_000_000;

/// 0.75 quantile of the standard normal.
const NORMAL_Q75: f64 = 0.674_489_750_196_081_7;

/// Median of |Z| for Z ~ Stab(2) = N(0, 2).
pub const MED_2: f64 = SQRT_2 * NORMAL_Q75;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StableParams {
    p: f64,
}

impl StableParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(MIN_P..=MAX_P).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "stability index p = {p} outside [{MIN_P}, {MAX_P}]"
            )));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl Distribution<f64> for StableParams {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_stable(*self, rng)
    }
}

pub fn sample_stable<R: Rng + ?Sized>(params: StableParams, rng: &mut R) -> f64 {
    let p = params.p;
    if p == 2.0 {
        let z: f64 = StandardNormal.sample(rng);
        return SQRT_2 * z;
    }
    if p == 1.0 {
        return sample_cauchy(rng);
    }
    let u: f64 = Open01.sample(rng);
    let angle = PI * u - FRAC_PI_2;
    let w: f64 = Exp1.sample(rng);
    let head = (p * angle).sin() / angle.cos().powf(1.0 / p);
    let tail = (((1.0 - p) * angle).cos() / w).powf((1.0 - p) / p);
    head * tail
}

// Ratio of the coordinates of a uniform point in the unit disk: the polar
// angle is uniform, so x / y = cot(angle) is standard Cauchy. Both
// coordinates come from one 64-bit word, on a grid symmetric about zero
// that never hits y = 0. Returns the candidate and whether it is accepted.
#[inline(always)]
fn cauchy_candidate(bits: u64) -> (f64, bool) {
    const SCALE: f64 = 1.0 / (1u64 << 31) as f64;
    let x = ((bits >> 32) as u32 as i32 as f64 + 0.5) * SCALE;
    let y = (bits as u32 as i32 as f64 + 0.5) * SCALE;
    (x / y, x * x + y * y <= 1.0)
}

fn sample_cauchy<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        if let (z, true) = cauchy_candidate(rng.next_u64()) {
            return z;
        }
    }
}

fn fill_cauchy<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the feature was detected at runtime
        return unsafe { fill_cauchy_avx2(rng, out) };
    }
    fill_cauchy_generic(rng, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn fill_cauchy_avx2<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    fill_cauchy_generic(rng, out)
}

#[inline(always)]
fn fill_cauchy_generic<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    const CHUNK: usize = 256;
    let mut words = [0u64; CHUNK];
    let mut cand = [0.0f64; CHUNK];
    let mut accept = [false; CHUNK];
    let mut k = 0;
    while k < out.len() {
        // never more words than outputs still missing, so the generator
        // advances exactly as under repeated single draws
        let take = (out.len() - k).min(CHUNK);
        rng.fill(&mut words[..take]);
        for ((w, c), a) in words[..take]
            .iter()
            .zip(&mut cand[..take])
            .zip(&mut accept[..take])
        {
            (*c, *a) = cauchy_candidate(*w);
        }
        for (&c, &a) in cand[..take].iter().zip(&accept[..take]) {
            out[k] = c;
            k += a as usize;
        }
    }
}

/// Fills `out` with i.i.d. Stab(p) draws; same values as repeated
/// [`sample_stable`] calls on the same generator, which ends in the same state.
pub fn fill_stable<R: Rng + ?Sized>(params: StableParams, rng: &mut R, out: &mut [f64]) {
    if params.p == 1.0 {
        fill_cauchy(rng, out);
    } else {
        out.iter_mut().for_each(|x| *x = sample_stable(params, rng));
    }
}

/// Median of |Z| for Z ~ Stab(p).
///
/// p = 1 and p = 2 have closed forms and ignore `seed`/`n_samples`. Every
/// other index is calibrated by Monte Carlo on the `(seed, p)` stream.
pub fn med_p(params: StableParams, seed: u64, n_samples: usize) -> Result<f64> {
    if let Some(exact) = closed_form_med_p(params.p) {
        return Ok(exact);
    }
    if n_samples < MIN_CALIBRATION_SAMPLES {
        return Err(Error::CalibrationTooSmall {
            n_samples,
            min: MIN_CALIBRATION_SAMPLES,
        });
    }
    let mut rng = rng::stream(seed, label::MED_P, params.p.to_bits());
    let mut draws: Vec<f64> = (0..n_samples)
        .map(|_| sample_stable(params, &mut rng).abs())
        .collect();
    Ok(median_in_place(&mut draws))
}

fn closed_form_med_p(p: f64) -> Option<f64> {
    if p == 1.0 {
        Some(1.0)
    } else if p == 2.0 {
        Some(MED_2)
    } else {
        None
    }
}

/// Empirical P(|Z| >= t) over `n_samples` draws.
pub fn tail_survival_estimate(params: StableParams, t: f64, n_samples: usize, seed: u64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if n_samples == 0 {
        return f64::NAN;
    }
    let mut rng = rng::stream(seed, label::TAIL, params.p.to_bits());
    let hits = (0..n_samples)
        .filter(|_| sample_stable(params, &mut rng).abs() >= t)
        .count();
    hits as f64 / n_samples as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MedPEntry {
    pub p: f64,
    pub med_p: f64,
    pub seed: u64,
    pub n_samples: u64,
}

/// Write-once table of calibrated Med_p values.
///
/// On disk: one line per entry, `p<TAB>med_p<TAB>seed<TAB>n_samples`, LF line
/// endings. Lines starting with `#` are comments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MedPTable {
    // keyed by (p bits, seed, n_samples)
    entries: BTreeMap<(u64, u64, u64), MedPEntry>,
}

const BUILTIN_TABLE: &str = include_str!("../data/med_p.tsv");

impl MedPTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// The table shipped with the crate.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_TABLE).expect("builtin Med_p table is well formed")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| Error::TableParse {
                line: lineno + 1,
                reason: reason.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            let p: f64 = fields[0].parse().map_err(|_| bad("bad p"))?;
            let med_p: f64 = fields[1].parse().map_err(|_| bad("bad med_p"))?;
            let seed: u64 = fields[2].parse().map_err(|_| bad("bad seed"))?;
            let n_samples: u64 = fields[3].parse().map_err(|_| bad("bad n_samples"))?;
            StableParams::new(p).map_err(|_| bad("p out of range"))?;
            if !(med_p.is_finite() && med_p > 0.0) {
                return Err(bad("med_p must be positive"));
            }
            table.insert(MedPEntry {
                p,
                med_p,
                seed,
                n_samples,
            })?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in self.entries.values() {
            let _ = writeln!(out, "{}\t{}\t{}\t{}", e.p, e.med_p, e.seed, e.n_samples);
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    /// Adds an entry. An existing key may only be re-inserted with the same value.
    pub fn insert(&mut self, entry: MedPEntry) -> Result<()> {
        let key = (entry.p.to_bits(), entry.seed, entry.n_samples);
        match self.entries.get(&key) {
            Some(existing) if existing.med_p != entry.med_p => Err(Error::InvalidParameter(
                format!("conflicting Med_p entry for p = {}", entry.p),
            )),
            _ => {
                self.entries.insert(key, entry);
                Ok(())
            }
        }
    }

    /// Runs a calibration and records it.
    pub fn calibrate(&mut self, params: StableParams, seed: u64, n_samples: usize) -> Result<f64> {
        let value = med_p(params, seed, n_samples)?;
        self.insert(MedPEntry {
            p: params.p,
            med_p: value,
            seed,
            n_samples: n_samples as u64,
        })?;
        Ok(value)
    }

    /// Best stored calibration for `p` (largest sample count).
    pub fn get(&self, p: f64) -> Option<&MedPEntry> {
        self.entries
            .values()
            .filter(|e| e.p == p)
            .max_by_key(|e| e.n_samples)
    }

    /// Med_p for `p`: closed form when one exists, otherwise the stored calibration.
    pub fn resolve(&self, p: f64) -> Result<f64> {
        closed_form_med_p(p)
            .or_else(|| self.get(p).map(|e| e.med_p))
            .ok_or(Error::MissingCalibration { p })
    }

    pub fn entries(&self) -> impl Iterator<Item = &MedPEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::median;

    fn draws(p: f64, n: usize, seed: u64) -> Vec<f64> {
        let params = StableParams::new(p).unwrap();
        let mut rng = rng::stream(seed, 99, 0);
        (0..n).map(|_| sample_stable(params, &mut rng)).collect()
    }

    #[test]
    fn rejects_out_of_range_p() {
        assert!(StableParams::new(0.2).is_err());
        assert!(StableParams::new(2.01).is_err());
        assert!(StableParams::new(f64::NAN).is_err());
        assert!(StableParams::new(0.25).is_ok());
    }

    #[test]
    fn gaussian_index_has_variance_two() {
        let z = draws(2.0, 100_000, 1);
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let var = z.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64;
        assert!((1.9..=2.1).contains(&var), "variance {var}");
    }

    #[test]
    fn cauchy_median_abs_is_one() {
        let z: Vec<f64> = draws(1.0, 100_000, 2).iter().map(|x| x.abs()).collect();
        let m = median(&z);
        assert!((0.98..=1.02).contains(&m), "median |Z| = {m}");
    }

    #[test]
    fn half_stable_tail_ratio_near_two() {
        let z = draws(0.5, 1_000_000, 3);
        let s = |t: f64| z.iter().filter(|x| x.abs() >= t).count() as f64;
        let ratio = s(100.0) / s(400.0);
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn signed_median_is_near_zero() {
        for p in [0.5, 1.0, 1.5, 2.0] {
            let m = median(&draws(p, 1_000_000, 4));
            assert!(m.abs() <= 0.01, "p = {p}: signed median {m}");
        }
    }

    #[test]
    fn sample_streams_are_deterministic() {
        for p in [0.25, 0.7, 1.0, 1.3, 2.0] {
            let a = draws(p, 1000, 5);
            let b = draws(p, 1000, 5);
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn fill_matches_single_draws() {
        for p in [0.5, 1.0, 2.0] {
            let params = StableParams::new(p).unwrap();
            let mut a = rng::stream(4, 0, 0);
            let mut b = a.clone();
            let mut filled = vec![0.0; 1000];
            fill_stable(params, &mut a, &mut filled);
            let single: Vec<f64> = (0..1000).map(|_| sample_stable(params, &mut b)).collect();
            assert_eq!(filled, single);
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn portable_cauchy_fill_matches_dispatched() {
        let mut a = rng::stream(5, 0, 0);
        let mut b = a.clone();
        let (mut x, mut y) = (vec![0.0; 777], vec![0.0; 777]);
        fill_cauchy(&mut a, &mut x);
        fill_cauchy_generic(&mut b, &mut y);
        assert_eq!(x, y);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }

    #[test]
    fn closed_form_med_p() {
        let one = StableParams::new(1.0).unwrap();
        let two = StableParams::new(2.0).unwrap();
        assert_eq!(med_p(one, 0, 0).unwrap(), 1.0);
        assert!((med_p(two, 0, 0).unwrap() - 0.95387).abs() < 1e-5);
    }

    #[test]
    fn calibration_rejects_small_sample_counts() {
        let params = StableParams::new(0.5).unwrap();
        assert!(matches!(
            med_p(params, 1, 10_000),
            Err(Error::CalibrationTooSmall { .. })
        ));
    }

    #[test]
    fn calibration_is_reproducible() {
        let params = StableParams::new(1.5).unwrap();
        let a = med_p(params, 11, 1_000_000).unwrap();
        let b = med_p(params, 11, 1_000_000).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn tail_survival_at_zero_is_one() {
        let params = StableParams::new(0.5).unwrap();
        assert_eq!(tail_survival_estimate(params, 0.0, 10, 0), 1.0);
    }

    #[test]
    fn cauchy_tail_matches_cdf() {
        let params = StableParams::new(1.0).unwrap();
        let exact = 2.0 * (0.1f64).atan() / PI;
        let est = tail_survival_estimate(params, 10.0, 1_000_000, 8);
        assert!((est - exact).abs() <= 0.005, "{est} vs {exact}");
    }

    #[test]
    fn table_round_trips_and_resolves() {
        let mut t = MedPTable::new();
        t.insert(MedPEntry {
            p: 0.5,
            med_p: 2.2,
            seed: 1,
            n_samples: 1_000_000,
        })
        .unwrap();
        t.insert(MedPEntry {
            p: 0.5,
            med_p: 2.21,
            seed: 1,
            n_samples: 10_000_000,
        })
        .unwrap();
        let back = MedPTable::parse(&t.to_tsv()).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.resolve(0.5).unwrap(), 2.21);
        assert_eq!(back.resolve(1.0).unwrap(), 1.0);
        assert!(matches!(
            back.resolve(0.6),
            Err(Error::MissingCalibration { .. })
        ));
    }

    #[test]
    fn table_rejects_conflicts_and_garbage() {
        let mut t = MedPTable::new();
        let e = MedPEntry {
            p: 0.5,
            med_p: 2.2,
            seed: 1,
            n_samples: 1_000_000,
        };
        t.insert(e).unwrap();
        t.insert(e).unwrap();
        assert!(t.insert(MedPEntry { med_p: 2.3, ..e }).is_err());
        assert!(MedPTable::parse("0.5\t2.2\t1").is_err());
        assert!(MedPTable::parse("0.5\t-1\t1\t5").is_err());
        assert!(MedPTable::parse("# comment\n\n0.5\t2.2\t1\t5\n").is_ok());
    }

    #[test]
    fn builtin_table_is_positive() {
        let t = MedPTable::builtin();
        assert!(!t.is_empty());
        assert!(t.entries().all(|e| e.med_p > 0.0));
    }
}
