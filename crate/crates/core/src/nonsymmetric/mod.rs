//! The two-signal mechanism with per-user public sign patterns.
//!
//! User `i` gets a uniformly random pattern `b_i in {+1,-1}^T` and, holding
//! type `x`, reports `y_i = b_i(x)` with probability `1/2 + eta` and
//! `-b_i(x)` otherwise, with `1/2 + eta = e^eps / (1 + e^eps)`. The likelihood
//! vector of the report is `g^y = 1/2 * 1 + eta * y * b_i`, so the per-user
//! contribution `(g^y - 1/2 * 1) / eta` is simply `y * b_i` and
//! `theta = (1/n) sum_i y_i b_i` satisfies `E[theta] = 2 eta f`.

pub mod io;
mod pattern;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use pattern::SignPattern;

use crate::error::{Error, Result};
use crate::prob::binomial;
use crate::prob::{sample_multinomial, ProbVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NonSymmetricMechanism {
    epsilon: f64,
    eta: f64,
}

impl NonSymmetricMechanism {
    /// `epsilon` must be positive: the estimator divides by `eta`.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) || epsilon.is_infinite() {
            return Err(Error::InvalidParameter(format!(
                "epsilon must be finite and > 0, got {epsilon}"
            )));
        }
        Ok(NonSymmetricMechanism {
            epsilon,
            eta: eta_for(epsilon),
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Probability of reporting the likely signal `b(x)`.
    pub fn bias(&self) -> f64 {
        0.5 + self.eta
    }
}

/// `eta = (e^eps - 1) / (2 (e^eps + 1))`.
pub fn eta_for(epsilon: f64) -> f64 {
    let em1 = epsilon.exp_m1();
    em1 / (2.0 * (em1 + 2.0))
}

pub fn generate_pattern<R: Rng + ?Sized>(t: usize, rng: &mut R) -> SignPattern {
    SignPattern::random(t, rng)
}

/// Reports `b(x)` with probability `1/2 + eta`, else `-b(x)`.
pub fn respond<R: Rng + ?Sized>(b: &SignPattern, x: usize, eta: f64, rng: &mut R) -> i8 {
    let likely = b.get(x);
    if rng.random_bool(0.5 + eta) {
        likely
    } else {
        -likely
    }
}

/// One user's public pattern and released signal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NonSymUser {
    pub pattern: SignPattern,
    pub y: i8,
}

impl NonSymUser {
    pub fn new(pattern: SignPattern, y: i8) -> Result<Self> {
        if y != 1 && y != -1 {
            return Err(Error::InvalidParameter(format!("signal must be +1 or -1, got {y}")));
        }
        Ok(NonSymUser { pattern, y })
    }

    pub fn domain_size(&self) -> usize {
        self.pattern.len()
    }

    /// `y * b`.
    pub fn contribution(&self) -> SignPattern {
        if self.y > 0 {
            self.pattern.clone()
        } else {
            self.pattern.negated()
        }
    }

    /// `g^y = 1/2 * 1 + eta * y * b`.
    pub fn likelihood_vector(&self, eta: f64) -> Vec<f64> {
        let yf = self.y as f64;
        (0..self.pattern.len())
            .map(|x| 0.5 + eta * yf * self.pattern.get(x) as f64)
            .collect()
    }
}

/// `theta = (1/n) sum_i y_i b_i` together with the bias it was built under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimator {
    pub theta: Vec<f64>,
    pub n: u64,
    pub eta: f64,
}

impl ThetaEstimator {
    pub fn new(theta: Vec<f64>, n: u64, eta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::InvalidParameter(format!("eta must lie in (0, 1/2), got {eta}")));
        }
        if theta.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-12) {
            return Err(Error::InvalidParameter("theta entries must lie in [-1, 1]".into()));
        }
        Ok(ThetaEstimator { theta, n, eta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `theta / (2 eta)`, an unbiased estimate of the type frequencies.
    pub fn normalized(&self) -> Vec<f64> {
        let s = 1.0 / (2.0 * self.eta);
        self.theta.iter().map(|v| v * s).collect()
    }
}

/// Exact integer running sums of `y_i b_i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThetaAccumulator {
    sums: Vec<i64>,
    n: u64,
}

impl ThetaAccumulator {
    pub fn new(t: usize) -> Self {
        ThetaAccumulator { sums: vec![0; t], n: 0 }
    }

    pub fn add(&mut self, user: &NonSymUser) {
        debug_assert_eq!(user.domain_size(), self.sums.len());
        user.pattern.accumulate_signed(user.y, &mut self.sums);
        self.n += 1;
    }

    pub fn merge(&mut self, other: &ThetaAccumulator) {
        for (a, b) in self.sums.iter_mut().zip(&other.sums) {
            *a += b;
        }
        self.n += other.n;
    }

    pub fn sums(&self) -> &[i64] {
        &self.sums
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn finish(&self, eta: f64) -> Result<ThetaEstimator> {
        if self.n == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.n as f64;
        ThetaEstimator::new(self.sums.iter().map(|&s| s as f64 / n).collect(), self.n, eta)
    }
}

pub fn aggregate_theta(users: &[NonSymUser], eta: f64) -> Result<ThetaEstimator> {
    let first = users.first().ok_or(Error::EmptyInput)?;
    let mut acc = ThetaAccumulator::new(first.domain_size());
    for u in users {
        if u.domain_size() != first.domain_size() {
            return Err(Error::DimensionMismatch {
                expected: first.domain_size(),
                found: u.domain_size(),
            });
        }
        acc.add(u);
    }
    acc.finish(eta)
}

/// A population of users sharing one mechanism.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub t: usize,
    pub epsilon: f64,
    pub users: Vec<NonSymUser>,
}

impl Cohort {
    pub fn theta(&self) -> Result<ThetaEstimator> {
        aggregate_theta(&self.users, eta_for(self.epsilon))
    }
}

fn simulate_user<R: Rng + ?Sized>(x: usize, t: usize, eta: f64, rng: &mut R) -> NonSymUser {
    let pattern = SignPattern::random(t, rng);
    let y = respond(&pattern, x, eta, rng);
    NonSymUser { pattern, y }
}

/// Draws `n` types from `p`, a fresh pattern per user, and one report each.
pub fn simulate_cohort<R: Rng + ?Sized>(
    p: &ProbVector,
    n: usize,
    mech: &NonSymmetricMechanism,
    rng: &mut R,
) -> Result<Cohort> {
    Ok(simulate_cohort_diagnostic(p, n, mech, rng)?.0)
}

/// Like [`simulate_cohort`] but also returns the realized type-frequency
/// vector `f`. Testers never see `f`; this is for harnesses checking
/// `E[theta] = 2 eta f`.
pub fn simulate_cohort_diagnostic<R: Rng + ?Sized>(
    p: &ProbVector,
    n: usize,
    mech: &NonSymmetricMechanism,
    rng: &mut R,
) -> Result<(Cohort, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidParameter("a cohort needs at least one user".into()));
    }
    let t = p.len();
    let types = crate::prob::sample_types(p, n, rng);
    let mut freq = vec![0.0; t];
    let users = types
        .iter()
        .map(|&x| {
            freq[x] += 1.0 / n as f64;
            simulate_user(x, t, mech.eta, rng)
        })
        .collect();
    Ok((
        Cohort {
            t,
            epsilon: mech.epsilon,
            users,
        },
        freq,
    ))
}

/// Users with a fixed type assignment (one entry of `types` per user).
pub fn simulate_users_for_types<R: Rng + ?Sized>(
    types: &[usize],
    t: usize,
    mech: &NonSymmetricMechanism,
    rng: &mut R,
) -> Vec<NonSymUser> {
    types.iter().map(|&x| simulate_user(x, t, mech.eta, rng)).collect()
}

/// How a Monte-Carlo trial produces `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Every user draws a type, a pattern, and a report.
    #[default]
    PerUser,
    /// Draws the sufficient statistics directly: type counts from a
    /// multinomial, then per coordinate `x` the number of `+1` entries among
    /// the `N_x` users of type `x` (`Binomial(N_x, 1/2 + eta)`) and among the
    /// other `n - N_x` users (`Binomial(n - N_x, 1/2)`). For `x' != x` the
    /// entry `y b(x')` is a fair sign independent of everything else, so this
    /// has exactly the distribution of the per-user route at `O(T)` cost.
    Aggregate,
}

/// Samples `theta` for `n` users whose types are drawn from `p`.
pub fn sample_theta<R: Rng + ?Sized>(
    p: &ProbVector,
    n: u64,
    mech: &NonSymmetricMechanism,
    mode: SimulationMode,
    rng: &mut R,
) -> Result<ThetaEstimator> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let t = p.len();
    match mode {
        SimulationMode::PerUser => {
            let dist = rand::distr::weighted::WeightedIndex::new(p.as_slice())
                .expect("a ProbVector has positive total mass");
            let mut acc = ThetaAccumulator::new(t);
            let mut scratch = SignPattern::zeros(t);
            for _ in 0..n {
                let x = rand::distr::Distribution::sample(&dist, rng);
                scratch.fill_random(rng);
                let y = respond(&scratch, x, mech.eta, rng);
                scratch.accumulate_signed(y, &mut acc.sums);
                acc.n += 1;
            }
            acc.finish(mech.eta)
        }
        SimulationMode::Aggregate => {
            let counts = sample_multinomial(p.as_slice(), n, rng);
            let sums = counts
                .iter()
                .map(|&nx| {
                    let own = binomial(nx, 0.5 + mech.eta, rng) as i64;
                    let rest = binomial(n - nx, 0.5, rng) as i64;
                    (2 * own - nx as i64) + (2 * rest - (n - nx) as i64)
                })
                .collect();
            ThetaAccumulator { sums, n }.finish(mech.eta)
        }
    }
}
