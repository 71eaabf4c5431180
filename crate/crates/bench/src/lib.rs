//! Fixtures shared by the criterion benches.

use ade_core::rng::{self, label};
use ade_core::Points;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian_points(n: usize, d: usize, seed: u64) -> Points {
    let mut r = rng::stream(seed, label::DATA, 0);
    let data = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
    Points::new(d, data).expect("finite gaussian data")
}
