//! Symmetric randomized response.
//!
//! A user of type `x` reports `x` with probability `rho + gamma` and every
//! other type with probability `rho`, where
//! `rho = 1 / (T - 1 + e^eps)` and `gamma = (e^eps - 1) / (T - 1 + e^eps)`.
//! Signals reuse the type alphabet, so the channel matrix is
//! `G = rho * 1 + gamma * I` and the induced map on distributions is
//! `phi(p) = rho * 1 + gamma * p`.

pub mod io;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prob::{sample_types, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetricMechanism {
    t: usize,
    epsilon: f64,
    rho: f64,
    gamma: f64,
}

impl SymmetricMechanism {
    pub fn new(t: usize, epsilon: f64) -> Result<Self> {
        if t == 0 {
            return Err(Error::InvalidParameter("domain size must be positive".into()));
        }
        if !(epsilon >= 0.0) || epsilon.is_infinite() {
            return Err(Error::InvalidParameter(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        // exp_m1 keeps gamma accurate for small epsilon
        let em1 = epsilon.exp_m1();
        let denom = t as f64 + em1;
        Ok(SymmetricMechanism {
            t,
            epsilon,
            rho: 1.0 / denom,
            gamma: em1 / denom,
        })
    }

    pub fn domain_size(&self) -> usize {
        self.t
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Probability of reporting the true type.
    pub fn keep_probability(&self) -> f64 {
        self.rho + self.gamma
    }

    /// Row `g_s = rho * 1 + gamma * e_s`: likelihood of signal `s` under each type.
    pub fn row(&self, s: usize) -> Vec<f64> {
        let mut g = vec![self.rho; self.t];
        g[s] += self.gamma;
        g
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.t {
            return Err(Error::DimensionMismatch {
                expected: self.t,
                found: len,
            });
        }
        Ok(())
    }

    /// Signal distribution induced by type distribution `p`.
    pub fn phi(&self, p: &ProbVector) -> Result<ProbVector> {
        self.check_len(p.len())?;
        ProbVector::new(self.phi_raw(p.as_slice()))
    }

    /// `rho + gamma * v(x)` for an arbitrary vector.
    pub fn phi_raw(&self, v: &[f64]) -> Vec<f64> {
        v.iter().map(|&w| self.rho + self.gamma * w).collect()
    }

    /// `(q - rho * 1) / gamma`. The result may leave the simplex when `q` is
    /// an empirical frequency vector.
    pub fn phi_inverse(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.check_len(q.len())?;
        if self.gamma == 0.0 {
            return Err(Error::NonInvertible);
        }
        Ok(q.iter().map(|&w| (w - self.rho) / self.gamma).collect())
    }

    /// Distribution of the `j`-th feature of the signals when that feature of
    /// the types is distributed as `pj`: `(1 - gamma) / T^j + gamma * pj`.
    pub fn phi_marginal(&self, pj: &ProbVector) -> ProbVector {
        ProbVector::new(affine_map(self.gamma, pj.as_slice())).expect("convex combination of distributions")
    }

    /// Draws one signal for a user of type `x` from a single uniform variate:
    /// keep `x` with probability `gamma`, otherwise report a uniform type.
    pub fn randomize<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> usize {
        debug_assert!(x < self.t);
        let u: f64 = rng.random();
        if u < self.gamma {
            return x;
        }
        let scaled = (u - self.gamma) / (1.0 - self.gamma) * self.t as f64;
        (scaled as usize).min(self.t - 1)
    }

    /// Draws `n` types from `p` and randomizes each one.
    pub fn sample_signals<R: Rng + ?Sized>(&self, p: &ProbVector, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        self.check_len(p.len())?;
        Ok(sample_types(p, n, rng)
            .into_iter()
            .map(|x| self.randomize(x, rng))
            .collect())
    }
}

/// `(1 - gamma) / len + gamma * v(x)`: randomized response with keep-excess
/// `gamma` on a domain of size `v.len()`.
pub fn affine_map(gamma: f64, v: &[f64]) -> Vec<f64> {
    let base = (1.0 - gamma) / v.len() as f64;
    v.iter().map(|&w| base + gamma * w).collect()
}

/// Inverse of [`affine_map`]: `(v(x) - (1 - gamma) / len) / gamma`.
pub fn affine_inverse(gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
    if gamma == 0.0 {
        return Err(Error::NonInvertible);
    }
    let base = (1.0 - gamma) / v.len() as f64;
    Ok(v.iter().map(|&w| (w - base) / gamma).collect())
}

/// Signal counts `n_s` over the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalHistogram {
    counts: Vec<u64>,
    n: u64,
}

impl SignalHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let n = counts.iter().sum();
        SignalHistogram { counts, n }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Empirical signal distribution `q* = n_s / n`.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.n == 0 {
            return Err(Error::EmptyInput);
        }
        Ok(self.counts.iter().map(|&c| c as f64 / self.n as f64).collect())
    }
}

/// Exact counts of `signals` over an alphabet of size `t`.
pub fn histogram(signals: &[usize], t: usize) -> Result<SignalHistogram> {
    let mut counts = vec![0u64; t];
    for &s in signals {
        *counts.get_mut(s).ok_or(Error::OutOfRange { index: s, size: t })? += 1;
    }
    Ok(SignalHistogram::from_counts(counts))
}
