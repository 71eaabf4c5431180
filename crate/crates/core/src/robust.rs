//! Generic robustification: answer each query from a small random sample of
//! many independent non-adaptive instances and aggregate.
//!
//! As long as at least 90% of the instances answer a query correctly, a median
//! (or majority) over `r` indices drawn with replacement is wrong with
//! probability at most `exp(-2 * 0.3^2 * r)`, whatever the query sequence.
//! The ADE query path in [`crate::ade`] is an instance of this scheme.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::stats::median_in_place;

/// `r` indices drawn uniformly with replacement from `0..l`.
pub fn sample_indices<R: Rng + ?Sized>(l: usize, r: usize, rng: &mut R) -> Vec<usize> {
    assert!(l >= 1, "cannot sample from an empty ensemble");
    (0..r).map(|_| rng.random_range(0..l)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Aggregator {
    #[default]
    Median,
    /// Most frequent value; ties go to the smallest value.
    Majority,
}

impl Aggregator {
    /// Reorders `values`.
    pub fn aggregate(self, values: &mut [f64]) -> f64 {
        match self {
            Aggregator::Median => median_in_place(values),
            Aggregator::Majority => {
                let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
                for v in values.iter() {
                    // order-preserving key so ties resolve to the smallest value
                    let bits = v.to_bits();
                    let key = if bits >> 63 == 1 {
                        !bits
                    } else {
                        bits | (1 << 63)
                    };
                    *counts.entry(key).or_default() += 1;
                }
                let best = counts
                    .iter()
                    .fold(None::<(u64, usize)>, |acc, (&k, &c)| match acc {
                        Some((_, bc)) if bc >= c => acc,
                        _ => Some((k, c)),
                    });
                match best {
                    Some((key, _)) => {
                        let bits = if key >> 63 == 1 {
                            key & !(1 << 63)
                        } else {
                            !key
                        };
                        f64::from_bits(bits)
                    }
                    None => f64::NAN,
                }
            }
        }
    }
}

/// A non-adaptive structure answering a query with a vector of numbers.
pub trait Answerer<Q: ?Sized> {
    type Error;

    fn answer(&self, query: &Q) -> std::result::Result<Vec<f64>, Self::Error>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustAnswer {
    pub values: Vec<f64>,
    pub sampled: Vec<usize>,
}

/// `l` independent instances behind a sample-and-aggregate front.
#[derive(Debug, Clone)]
pub struct Robustified<A> {
    instances: Vec<A>,
    aggregator: Aggregator,
    r: usize,
}

impl<A> Robustified<A> {
    pub fn new(instances: Vec<A>, aggregator: Aggregator, r: usize) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::InvalidParameter("need at least one instance".into()));
        }
        if r == 0 {
            return Err(Error::InvalidParameter("r must be at least 1".into()));
        }
        Ok(Self {
            instances,
            aggregator,
            r,
        })
    }

    pub fn instances(&self) -> &[A] {
        &self.instances
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Answers `query` coordinate-wise from `r` sampled instances.
    ///
    /// Panics if the sampled instances return answers of different lengths.
    pub fn answer<Q: ?Sized, R: Rng + ?Sized>(
        &self,
        query: &Q,
        rng: &mut R,
    ) -> std::result::Result<RobustAnswer, A::Error>
    where
        A: Answerer<Q>,
    {
        let sampled = sample_indices(self.instances.len(), self.r, rng);
        let answers = sampled
            .iter()
            .map(|&j| self.instances[j].answer(query))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let width = answers[0].len();
        assert!(
            answers.iter().all(|a| a.len() == width),
            "instances returned answers of different lengths"
        );
        let mut column = vec![0.0; self.r];
        let values = (0..width)
            .map(|c| {
                for (slot, a) in column.iter_mut().zip(&answers) {
                    *slot = a[c];
                }
                self.aggregator.aggregate(&mut column)
            })
            .collect();
        Ok(RobustAnswer { values, sampled })
    }
}
