use serde::{Deserialize, Serialize};

use super::ProbVector;
use crate::error::{Error, Result};

/// A product domain `X^1 x ... x X^d`. Joint types are indexed row-major, with
/// the first feature most significant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DomainSpec {
    feature_sizes: Vec<usize>,
    // strides[j] = product of feature_sizes[j+1..]
    strides: Vec<usize>,
}

impl TryFrom<Vec<usize>> for DomainSpec {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        DomainSpec::new(sizes)
    }
}

impl From<DomainSpec> for Vec<usize> {
    fn from(spec: DomainSpec) -> Self {
        spec.feature_sizes
    }
}

impl DomainSpec {
    pub fn new(feature_sizes: Vec<usize>) -> Result<Self> {
        if feature_sizes.is_empty() {
            return Err(Error::InvalidParameter("a domain needs at least one feature".into()));
        }
        if let Some(&s) = feature_sizes.iter().find(|&&s| s < 2) {
            return Err(Error::InvalidParameter(format!(
                "every feature needs at least two types, got {s}"
            )));
        }
        let mut strides = vec![1usize; feature_sizes.len()];
        for j in (0..feature_sizes.len() - 1).rev() {
            strides[j] = strides[j + 1]
                .checked_mul(feature_sizes[j + 1])
                .ok_or_else(|| Error::InvalidParameter("domain size overflows".into()))?;
        }
        strides[0]
            .checked_mul(feature_sizes[0])
            .ok_or_else(|| Error::InvalidParameter("domain size overflows".into()))?;
        Ok(DomainSpec {
            feature_sizes,
            strides,
        })
    }

    pub fn features(&self) -> usize {
        self.feature_sizes.len()
    }

    pub fn feature_sizes(&self) -> &[usize] {
        &self.feature_sizes
    }

    pub fn feature_size(&self, j: usize) -> usize {
        self.feature_sizes[j]
    }

    /// Total number of joint types `T = prod_j T^j`.
    pub fn total(&self) -> usize {
        self.strides[0] * self.feature_sizes[0]
    }

    pub fn encode(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.features() {
            return Err(Error::DimensionMismatch {
                expected: self.features(),
                found: tuple.len(),
            });
        }
        let mut index = 0;
        for (j, &xj) in tuple.iter().enumerate() {
            if xj >= self.feature_sizes[j] {
                return Err(Error::OutOfRange {
                    index: xj,
                    size: self.feature_sizes[j],
                });
            }
            index += xj * self.strides[j];
        }
        Ok(index)
    }

    pub fn decode(&self, index: usize) -> Result<Vec<usize>> {
        if index >= self.total() {
            return Err(Error::OutOfRange {
                index,
                size: self.total(),
            });
        }
        Ok((0..self.features()).map(|j| self.coordinate(index, j)).collect())
    }

    /// The `j`-th coordinate of joint type `index`. No range checks.
    #[inline]
    pub fn coordinate(&self, index: usize, j: usize) -> usize {
        (index / self.strides[j]) % self.feature_sizes[j]
    }
}

/// Outer product of raw vectors, indexed like a [`DomainSpec`] with the same sizes.
pub fn product_vector(factors: &[&[f64]]) -> Vec<f64> {
    let mut out = vec![1.0];
    for factor in factors {
        let mut next = Vec::with_capacity(out.len() * factor.len());
        for &a in &out {
            next.extend(factor.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}

/// Joint distribution `p^1 x ... x p^d`.
pub fn product_distribution(marginals: &[ProbVector]) -> Result<ProbVector> {
    if marginals.is_empty() {
        return Err(Error::EmptyInput);
    }
    // validates the shape
    DomainSpec::new(marginals.iter().map(ProbVector::len).collect())?;
    let factors: Vec<&[f64]> = marginals.iter().map(ProbVector::as_slice).collect();
    ProbVector::from_unnormalized(product_vector(&factors))
}

/// Sums `joint` over every feature except `j`.
pub fn marginal(joint: &[f64], spec: &DomainSpec, j: usize) -> Result<Vec<f64>> {
    if j >= spec.features() {
        return Err(Error::OutOfRange {
            index: j,
            size: spec.features(),
        });
    }
    if joint.len() != spec.total() {
        return Err(Error::DimensionMismatch {
            expected: spec.total(),
            found: joint.len(),
        });
    }
    let mut out = vec![0.0; spec.feature_size(j)];
    for (x, &w) in joint.iter().enumerate() {
        out[spec.coordinate(x, j)] += w;
    }
    Ok(out)
}
