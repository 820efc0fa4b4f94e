//! Dense parameter vectors, the unit being averaged.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense real-valued parameter vector.
///
/// The dimension is fixed for the lifetime of any structure holding one;
/// operations that absorb a `WeightVector` reject dimension mismatches and
/// non-finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(values: Vec<f64>) -> Self {
        WeightVector(values)
    }

    /// All-zero vector of the given dimension.
    pub fn zeros(dimension: usize) -> Self {
        WeightVector(vec![0.0; dimension])
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    /// Index of the first non-finite entry, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            Some(index) => Err(Error::NonFiniteWeight { index }),
            None => Ok(()),
        }
    }

    pub fn check_dimension(&self, expected: usize) -> Result<()> {
        if self.0.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: self.0.len(),
            });
        }
        Ok(())
    }

    /// Euclidean distance to another vector of the same dimension.
    pub fn distance(&self, other: &WeightVector) -> f64 {
        self.0
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl From<Vec<f64>> for WeightVector {
    fn from(values: Vec<f64>) -> Self {
        WeightVector(values)
    }
}

impl From<&[f64]> for WeightVector {
    fn from(values: &[f64]) -> Self {
        WeightVector(values.to_vec())
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}
