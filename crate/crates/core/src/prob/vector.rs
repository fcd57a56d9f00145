use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum - 1|` accepted when constructing a [`ProbVector`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A distribution over `T` types. Entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct ProbVector {
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    weights: Vec<f64>,
}

impl TryFrom<RawWeights> for ProbVector {
    type Error = Error;

    fn try_from(raw: RawWeights) -> Result<Self> {
        ProbVector::new(raw.weights)
    }
}

impl From<ProbVector> for RawWeights {
    fn from(p: ProbVector) -> Self {
        RawWeights { weights: p.weights }
    }
}

impl ProbVector {
    /// Validates and renormalizes. Entries must be finite and nonnegative and
    /// must sum to one within [`SUM_TOLERANCE`].
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidDistribution(format!("entry {i} is {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("weights sum to {sum}")));
        }
        Ok(ProbVector {
            weights: weights.into_iter().map(|w| w / sum).collect(),
        })
    }

    /// Normalizes an arbitrary nonnegative vector with positive mass.
    pub fn from_unnormalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidDistribution(format!("total mass {sum}")));
        }
        ProbVector::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(size: usize) -> Self {
        assert!(size > 0, "uniform distribution over an empty domain");
        ProbVector {
            weights: vec![1.0 / size as f64; size],
        }
    }

    pub fn point_mass(size: usize, at: usize) -> Result<Self> {
        if at >= size {
            return Err(Error::OutOfRange { index: at, size });
        }
        let mut weights = vec![0.0; size];
        weights[at] = 1.0;
        Ok(ProbVector { weights })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.weights
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.weights
    }
}

impl std::ops::Index<usize> for ProbVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.weights[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_negative_and_unnormalized() {
        assert!(ProbVector::new(vec![0.5, -0.1, 0.6]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn renormalizes_within_tolerance() {
        let p = ProbVector::new(vec![0.5 + 4e-10, 0.5]).unwrap();
        assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn json_shape() {
        let p: ProbVector = serde_json::from_str(r#"{"weights":[0.25,0.75]}"#).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.75]);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"weights":[0.25,0.75]}"#);
        assert!(serde_json::from_str::<ProbVector>(r#"{"weights":[0.25,0.5]}"#).is_err());
    }
}
