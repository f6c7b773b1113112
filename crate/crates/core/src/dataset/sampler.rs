use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ManeuverClass;
use crate::error::{Error, Result};

/// Draws sample indices with probability inversely proportional to the
/// frequency of the sample's class, so each class is drawn equally often in
/// expectation.
#[derive(Clone, Debug)]
pub struct BalancedSampler {
    counts: [usize; 3],
    dist: WeightedIndex<f64>,
    rng: ChaCha8Rng,
}

impl BalancedSampler {
    pub fn new(labels: &[ManeuverClass], seed: u64) -> Result<Self> {
        let mut counts = [0usize; 3];
        for l in labels {
            counts[l.index()] += 1;
        }
        if let Some(c) = ManeuverClass::ALL.iter().find(|c| counts[c.index()] == 0) {
            return Err(Error::Config(format!("class {c} has no training samples")));
        }
        let weights = labels.iter().map(|l| 1.0 / counts[l.index()] as f64);
        let dist = WeightedIndex::new(weights).map_err(|e| Error::Config(format!("sampling weights: {e}")))?;
        Ok(BalancedSampler {
            counts,
            dist,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn class_counts(&self) -> [usize; 3] {
        self.counts
    }

    /// Per-sample weight of each class, normalized to sum to 1 over classes.
    pub fn class_weights(&self) -> [f64; 3] {
        let inv = self.counts.map(|c| 1.0 / c as f64);
        let s: f64 = inv.iter().sum();
        inv.map(|w| w / s)
    }

    pub fn draw(&mut self) -> usize {
        self.dist.sample(&mut self.rng)
    }

    /// One batch of `batch_size` indices (with replacement).
    pub fn batch(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        if batch_size < 3 {
            return Err(Error::Config(format!("batch size must be >= 3, got {batch_size}")));
        }
        Ok((0..batch_size).map(|_| self.draw()).collect())
    }

    /// `n` consecutive batches.
    pub fn batches(&mut self, batch_size: usize, n: usize) -> Result<Vec<Vec<usize>>> {
        (0..n).map(|_| self.batch(batch_size)).collect()
    }
}
