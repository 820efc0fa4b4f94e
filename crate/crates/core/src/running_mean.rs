//! Incremental mean of weight vectors (one tail of the averager).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::weights::WeightVector;

/// Count plus incremental mean of absorbed weight vectors.
///
/// The update is `mean <- mean + (theta - mean) / (count + 1)`. When the
/// count is zero the stored mean is irrelevant: the next add overwrites it
/// exactly, since `mean + (theta - mean) / 1 = theta` in floating point.
/// Resets therefore only zero the count and leave the stale vector in place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    count: u64,
    mean: WeightVector,
}

impl RunningMean {
    pub fn new(dimension: usize) -> Self {
        RunningMean {
            count: 0,
            mean: WeightVector::zeros(dimension),
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn dimension(&self) -> usize {
        self.mean.dimension()
    }

    /// The current mean. Meaningless while `count == 0`.
    pub fn mean(&self) -> &WeightVector {
        &self.mean
    }

    /// Absorb one iterate. Rejects dimension mismatches and non-finite entries.
    pub fn add(&mut self, theta: &WeightVector) -> Result<()> {
        theta.check_dimension(self.mean.dimension())?;
        theta.check_finite()?;
        self.add_unchecked(theta);
        Ok(())
    }

    pub(crate) fn add_unchecked(&mut self, theta: &WeightVector) {
        let denom = (self.count + 1) as f64;
        for (m, t) in self.mean.as_mut_slice().iter_mut().zip(theta.iter()) {
            *m += (t - *m) / denom;
        }
        self.count += 1;
    }

    /// Empty this tail. The stale mean vector is left in place; the next add
    /// overwrites it exactly via the count-0 property.
    pub fn reset(&mut self) {
        self.count = 0;
    }

    /// Replace this tail's contents with another's (used by the switch rule).
    pub fn clone_from_other(&mut self, other: &RunningMean) {
        self.count = other.count;
        self.mean = other.mean.clone();
    }
}
