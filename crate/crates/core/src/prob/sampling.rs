use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Binomial, Distribution};

use super::ProbVector;
use crate::error::{Error, Result};

/// `n` i.i.d. type indices drawn from `p`.
pub fn sample_types<R: Rng + ?Sized>(p: &ProbVector, n: usize, rng: &mut R) -> Vec<usize> {
    if n == 0 {
        return Vec::new();
    }
    let dist = WeightedIndex::new(p.as_slice()).expect("a ProbVector has positive total mass");
    (0..n).map(|_| dist.sample(rng)).collect()
}

/// Counts of `n` i.i.d. draws from `p`, sampled directly as a multinomial via
/// conditional binomials. Distributed exactly like histogramming
/// [`sample_types`], at `O(T)` cost.
pub fn sample_multinomial<R: Rng + ?Sized>(p: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; p.len()];
    let mut remaining_n = n;
    let mut remaining_mass = 1.0f64;
    for (i, &w) in p.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if i + 1 == p.len() {
            counts[i] = remaining_n;
            break;
        }
        let prob = if remaining_mass > 0.0 {
            (w / remaining_mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = binomial(remaining_n, prob, rng);
        counts[i] = k;
        remaining_n -= k;
        remaining_mass -= w;
    }
    counts
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p checked in (0,1)").sample(rng)
}

/// Pairs types `(0,1), (2,3), ...` and moves `2 alpha / T` mass inside each
/// pair in a direction given by one fair coin per pair. With odd `T` the last
/// type is left alone and the shift is `2 alpha / (T - 1)`.
///
/// For uniform `p` and even `T` the result is exactly `alpha`-far in total
/// variation.
pub fn paninski_perturb<R: Rng + ?Sized>(p: &ProbVector, alpha: f64, rng: &mut R) -> Result<ProbVector> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {alpha}")));
    }
    let t = p.len();
    let paired = t - t % 2;
    if paired == 0 {
        if alpha == 0.0 {
            return Ok(p.clone());
        }
        return Err(Error::InvalidParameter("cannot perturb a single-type domain".into()));
    }
    let shift = 2.0 * alpha / paired as f64;
    // either direction must be feasible, whatever the coins say
    if let Some(i) = (0..paired).find(|&i| p[i] < shift) {
        return Err(Error::InvalidDistribution(format!(
            "perturbation by {shift} can make entry {i} (= {}) negative",
            p[i]
        )));
    }
    let mut q = p.as_slice().to_vec();
    for k in (0..paired).step_by(2) {
        let (up, down) = if rng.random_bool(0.5) { (k, k + 1) } else { (k + 1, k) };
        q[up] += shift;
        q[down] = (q[down] - shift).max(0.0);
    }
    ProbVector::new(q)
}
