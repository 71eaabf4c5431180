//! Empirical representativeness check.
//!
//! An ensemble is representative when every unit vector has its length
//! estimated within `(1 +- eps)` by at least 90% of the matrices. The audit
//! samples random unit directions and counts, per direction, how many
//! matrices get it right.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::ade::AdeStructure;
use crate::error::Result;
use crate::stats::lp_norm;

pub const REPRESENTATIVE_FRACTION: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub l: usize,
    pub epsilon: f64,
    /// Matrices within `(1 +- eps)`, one entry per direction.
    pub counts: Vec<usize>,
    pub min: usize,
    pub mean: f64,
    pub passed: bool,
}

/// A random direction with unit `l_p` norm (Gaussian, then normalised).
pub fn random_unit_direction<R: Rng + ?Sized>(d: usize, p: f64, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let norm = lp_norm(&v, p);
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn audit_representativeness<R: Rng + ?Sized>(
    structure: &AdeStructure,
    n_directions: usize,
    rng: &mut R,
) -> Result<AuditReport> {
    let eps = structure.params().epsilon;
    let p = structure.params().p;
    let l = structure.sizes().l;
    let counts = (0..n_directions)
        .map(|_| {
            let v = random_unit_direction(structure.d(), p, rng);
            let lengths = structure.per_sketch_lengths(&v)?;
            Ok(lengths
                .iter()
                .filter(|&&x| (1.0 - eps..=1.0 + eps).contains(&x))
                .count())
        })
        .collect::<Result<Vec<usize>>>()?;
    let min = counts.iter().copied().min().unwrap_or(l);
    let mean = if counts.is_empty() {
        l as f64
    } else {
        counts.iter().sum::<usize>() as f64 / counts.len() as f64
    };
    let passed = counts
        .iter()
        .all(|&c| c as f64 >= REPRESENTATIVE_FRACTION * l as f64);
    Ok(AuditReport {
        l,
        epsilon: eps,
        counts,
        min,
        mean,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ade::AdeParams;
    use crate::points::Points;
    use crate::rng;

    #[test]
    fn directions_have_unit_norm() {
        let mut r = rng::stream(0, 0, 0);
        for p in [0.5, 1.0, 2.0] {
            let v = random_unit_direction(17, p, &mut r);
            assert!((lp_norm(&v, p) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn healthy_small_structure_passes_and_zeroed_one_fails() {
        let pts = Points::new(8, vec![0.0; 8]).unwrap();
        let mut s = AdeStructure::build(&pts, AdeParams::new(2.0, 0.25, 0.1, 3)).unwrap();
        let report = audit_representativeness(&s, 30, &mut rng::stream(1, 0, 0)).unwrap();
        assert!(report.passed, "{report:?}");
        assert_eq!(report.counts.len(), 30);
        let l = s.sizes().l;
        for mat in s.matrices_mut().iter_mut().take(l / 2) {
            mat.entries_mut().fill(0.0);
        }
        let report = audit_representativeness(&s, 30, &mut rng::stream(1, 0, 0)).unwrap();
        assert!(!report.passed);
        assert!(report.min <= l - l / 2);
    }
}
