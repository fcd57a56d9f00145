//! Identity and independence testers for both mechanisms, plus the
//! chi-squared style statistics `P(theta)` and `Q(theta)`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::chi2::chi2_quantile;
use crate::error::{Error, Result};
use crate::nonsymmetric::ThetaEstimator;
use crate::prob::{marginal, product_vector, sample_multinomial, tv_distance, DomainSpec, ProbVector};
use crate::symmetric::{affine_inverse, affine_map, SignalHistogram, SymmetricMechanism};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub decision: Decision,
    pub statistic: Option<f64>,
    pub threshold: Option<f64>,
    pub diagnostics: BTreeMap<String, Value>,
}

impl TestOutcome {
    /// Accepts iff `statistic <= threshold`.
    pub fn from_threshold(statistic: f64, threshold: f64) -> Self {
        let decision = if statistic <= threshold {
            Decision::Accept
        } else {
            Decision::Reject
        };
        TestOutcome {
            decision,
            statistic: Some(statistic),
            threshold: Some(threshold),
            diagnostics: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.diagnostics.insert(key.to_string(), value.into());
        self
    }

    pub fn accepted(&self) -> bool {
        self.decision == Decision::Accept
    }
}

/// Settings for the Monte-Carlo calibrated chi-squared identity tester.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Target rejection probability under the null.
    pub confidence: f64,
    pub calibration_trials: usize,
}

impl Default for RobustConfig {
    fn default() -> Self {
        RobustConfig {
            confidence: 1.0 / 9.0,
            calibration_trials: 2000,
        }
    }
}

/// `Z = sum_x ((N_x - n r(x))^2 - N_x) / (n r(x))`.
pub fn z_statistic(counts: &[u64], reference: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let n = n as f64;
    counts
        .iter()
        .zip(reference)
        .map(|(&c, &r)| {
            let c = c as f64;
            let e = n * r;
            ((c - e).powi(2) - c) / e
        })
        .sum()
}

/// Chi-squared identity tester against a fixed reference, with a threshold
/// set to the empirical `(1 - confidence)` quantile of `Z` over simulated null
/// samples of the same size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustIdentityTester {
    reference: Vec<f64>,
    distance: f64,
    confidence: f64,
    n: u64,
    threshold: f64,
}

impl RobustIdentityTester {
    pub fn calibrate<R: Rng + ?Sized>(
        reference: &[f64],
        distance: f64,
        n: u64,
        cfg: &RobustConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if let Some((x, r)) = reference.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "reference has non-positive entry {r} at {x}; restrict the alphabet first"
            )));
        }
        ProbVector::new(reference.to_vec())?;
        if !(cfg.confidence > 0.0 && cfg.confidence < 1.0) || cfg.calibration_trials == 0 {
            return Err(Error::InvalidParameter("confidence must lie in (0,1) with at least one calibration trial".into()));
        }
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut zs: Vec<f64> = (0..cfg.calibration_trials)
            .map(|_| z_statistic(&sample_multinomial(reference, n, rng), reference))
            .collect();
        zs.sort_by(f64::total_cmp);
        // smallest order statistic with at least (1 - confidence) of the mass at or below it
        let k = ((1.0 - cfg.confidence) * zs.len() as f64).ceil() as usize;
        let threshold = zs[k.clamp(1, zs.len()) - 1];
        Ok(RobustIdentityTester {
            reference: reference.to_vec(),
            distance,
            confidence: cfg.confidence,
            n,
            threshold,
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn reference(&self) -> &[f64] {
        &self.reference
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn sample_size(&self) -> u64 {
        self.n
    }
}

pub fn robust_identity_test(tester: &RobustIdentityTester, hist: &SignalHistogram) -> Result<TestOutcome> {
    if hist.len() != tester.reference.len() {
        return Err(Error::DimensionMismatch {
            expected: tester.reference.len(),
            found: hist.len(),
        });
    }
    if hist.n() != tester.n {
        return Err(Error::InvalidParameter(format!(
            "tester was calibrated for n = {}, sample has n = {}",
            tester.n,
            hist.n()
        )));
    }
    let z = z_statistic(hist.counts(), &tester.reference);
    Ok(TestOutcome::from_threshold(z, tester.threshold)
        .with("distance", tester.distance)
        .with("confidence", tester.confidence)
        .with("n", tester.n))
}

/// Identity tester for randomized-response signals: the hypothesis `p` maps
/// to `phi(p)` and every alternative at distance `alpha` maps to distance at
/// least `gamma * alpha`, so a chi-squared identity test on the raw signals
/// decides.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricIdentityTester {
    inner: RobustIdentityTester,
    alpha: f64,
}

impl SymmetricIdentityTester {
    pub fn calibrate<R: Rng + ?Sized>(
        p: &ProbVector,
        alpha: f64,
        mech: &SymmetricMechanism,
        n: u64,
        cfg: &RobustConfig,
        rng: &mut R,
    ) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
        }
        if mech.gamma() == 0.0 {
            return Err(Error::NonInvertible);
        }
        let reference = mech.phi(p)?;
        let inner = RobustIdentityTester::calibrate(reference.as_slice(), mech.gamma() * alpha, n, cfg, rng)?;
        Ok(SymmetricIdentityTester { inner, alpha })
    }

    pub fn test(&self, hist: &SignalHistogram) -> Result<TestOutcome> {
        Ok(robust_identity_test(&self.inner, hist)?.with("alpha", self.alpha))
    }

    pub fn inner(&self) -> &RobustIdentityTester {
        &self.inner
    }
}

pub fn sym_identity_tester<R: Rng + ?Sized>(
    p: &ProbVector,
    hist: &SignalHistogram,
    alpha: f64,
    mech: &SymmetricMechanism,
    cfg: &RobustConfig,
    rng: &mut R,
) -> Result<TestOutcome> {
    SymmetricIdentityTester::calibrate(p, alpha, mech, hist.n(), cfg, rng)?.test(hist)
}

/// Small/large classification of per-feature signal values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependencePreprocess {
    pub spec: DomainSpec,
    /// `tau_j = alpha / (10 d T^j)`.
    pub tau: Vec<f64>,
    /// `(1 - gamma) / T^j + gamma tau_j`; a value is small iff its frequency is at most this.
    pub cutoffs: Vec<f64>,
    pub large: Vec<Vec<bool>>,
    /// Original indices of the large values of each feature.
    pub large_values: Vec<Vec<usize>>,
    /// Joint counts over the product of large values (row-major, first feature most significant).
    pub restricted_counts: Vec<u64>,
    pub n_total: u64,
    pub n_effective: u64,
}

impl IndependencePreprocess {
    pub fn restricted_sizes(&self) -> Vec<usize> {
        self.large_values.iter().map(Vec::len).collect()
    }

    /// Fraction of signals dropped because some coordinate was small.
    pub fn removed_fraction(&self) -> f64 {
        1.0 - self.n_effective as f64 / self.n_total as f64
    }

    pub fn removed_types(&self) -> Vec<Vec<usize>> {
        self.large
            .iter()
            .map(|l| (0..l.len()).filter(|&x| !l[x]).collect())
            .collect()
    }

    /// Per-feature counts over the large values, from the restricted joint counts.
    pub fn restricted_marginal_counts(&self) -> Vec<Vec<u64>> {
        let sizes = self.restricted_sizes();
        let mut out: Vec<Vec<u64>> = sizes.iter().map(|&s| vec![0; s]).collect();
        for (idx, &c) in self.restricted_counts.iter().enumerate() {
            let mut rem = idx;
            for j in (0..sizes.len()).rev() {
                out[j][rem % sizes[j]] += c;
                rem /= sizes[j];
            }
        }
        out
    }
}

fn check_independence_inputs(spec: &DomainSpec, hist_len: usize, alpha: f64, mech: &SymmetricMechanism) -> Result<()> {
    if spec.features() < 2 {
        return Err(Error::InvalidParameter("independence testing needs at least two features".into()));
    }
    if hist_len != spec.total() || mech.domain_size() != spec.total() {
        return Err(Error::DimensionMismatch {
            expected: spec.total(),
            found: if hist_len != spec.total() { hist_len } else { mech.domain_size() },
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    Ok(())
}

pub fn sym_independence_preprocess(
    spec: &DomainSpec,
    hist: &SignalHistogram,
    alpha: f64,
    mech: &SymmetricMechanism,
) -> Result<IndependencePreprocess> {
    check_independence_inputs(spec, hist.len(), alpha, mech)?;
    let n = hist.n();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d = spec.features();
    let gamma = mech.gamma();
    let counts_f: Vec<f64> = hist.counts().iter().map(|&c| c as f64).collect();
    let mut tau = Vec::with_capacity(d);
    let mut cutoffs = Vec::with_capacity(d);
    let mut large = Vec::with_capacity(d);
    let mut large_values = Vec::with_capacity(d);
    for j in 0..d {
        let tj = spec.feature_size(j) as f64;
        let t = alpha / (10.0 * d as f64 * tj);
        let cutoff = (1.0 - gamma) / tj + gamma * t;
        let marg = marginal(&counts_f, spec, j)?;
        let mask: Vec<bool> = marg.iter().map(|&c| c / n as f64 > cutoff).collect();
        let values: Vec<usize> = (0..mask.len()).filter(|&x| mask[x]).collect();
        if values.is_empty() {
            return Err(Error::Degenerate(format!("every value of feature {j} is small")));
        }
        tau.push(t);
        cutoffs.push(cutoff);
        large.push(mask);
        large_values.push(values);
    }
    let sizes: Vec<usize> = large_values.iter().map(Vec::len).collect();
    let mut restricted_counts = vec![0u64; sizes.iter().product()];
    let mut n_effective = 0;
    'outer: for (x, &c) in hist.counts().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut idx = 0;
        for j in 0..d {
            let xj = spec.coordinate(x, j);
            if !large[j][xj] {
                continue 'outer;
            }
            let pos = large_values[j].binary_search(&xj).expect("large value listed");
            idx = idx * sizes[j] + pos;
        }
        restricted_counts[idx] += c;
        n_effective += c;
    }
    Ok(IndependencePreprocess {
        spec: spec.clone(),
        tau,
        cutoffs,
        large,
        large_values,
        restricted_counts,
        n_total: n,
        n_effective,
    })
}

/// The add-1 estimator `(1 + n_x) / (T + n)`.
pub fn add_one_estimator(counts: &[u64]) -> Vec<f64> {
    let n: u64 = counts.iter().sum();
    let denom = (counts.len() as u64 + n) as f64;
    counts.iter().map(|&c| (1 + c) as f64 / denom).collect()
}

/// Independence tester for randomized-response signals over a product domain.
///
/// Drops small per-feature values, estimates each feature's type marginal by
/// inverting the channel on the add-1 estimate of the signal marginal, and
/// tests the restricted signals against randomized response applied to the
/// product of those marginals (distance `alpha gamma / 2`, confidence 1/9).
pub fn sym_independence_tester<R: Rng + ?Sized>(
    spec: &DomainSpec,
    hist: &SignalHistogram,
    alpha: f64,
    mech: &SymmetricMechanism,
    calibration_trials: usize,
    rng: &mut R,
) -> Result<TestOutcome> {
    let gamma = mech.gamma();
    if gamma == 0.0 {
        return Err(Error::NonInvertible);
    }
    let pre = sym_independence_preprocess(spec, hist, alpha, mech)?;
    if pre.n_effective == 0 {
        return Err(Error::InsufficientSamples("no signal survives preprocessing".into()));
    }
    let mut z_marginals = Vec::with_capacity(spec.features());
    for (j, counts) in pre.restricted_marginal_counts().iter().enumerate() {
        let z = affine_inverse(gamma, &add_one_estimator(counts))?;
        if let Some(v) = z.iter().find(|&&v| v <= 0.0) {
            return Err(Error::InsufficientSamples(format!(
                "inverted marginal of feature {j} has non-positive entry {v}"
            )));
        }
        z_marginals.push(z);
    }
    let factors: Vec<&[f64]> = z_marginals.iter().map(Vec::as_slice).collect();
    let reference = affine_map(gamma, &product_vector(&factors));
    let cfg = RobustConfig {
        confidence: 1.0 / 9.0,
        calibration_trials,
    };
    let tester = RobustIdentityTester::calibrate(&reference, alpha * gamma / 2.0, pre.n_effective, &cfg, rng)?;
    let restricted = SignalHistogram::from_counts(pre.restricted_counts.clone());
    Ok(robust_identity_test(&tester, &restricted)?
        .with("alpha", alpha)
        .with("removed_types", json!(pre.removed_types()))
        .with("removed_fraction", pre.removed_fraction())
        .with("n_effective", pre.n_effective)
        .with("z_marginals", json!(z_marginals)))
}

fn check_theta(theta: &ThetaEstimator, t: usize, alpha: f64) -> Result<()> {
    if theta.len() != t {
        return Err(Error::DimensionMismatch {
            expected: t,
            found: theta.len(),
        });
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be positive, got {alpha}")));
    }
    if !(theta.eta > 0.0) {
        return Err(Error::InvalidParameter("theta was built with eta = 0".into()));
    }
    Ok(())
}

/// Accepts iff `d_TV(theta / (2 eta), p) <= alpha / 2`.
pub fn ns_identity_tester(p: &ProbVector, theta: &ThetaEstimator, alpha: f64) -> Result<TestOutcome> {
    check_theta(theta, p.len(), alpha)?;
    let tv = tv_distance(&theta.normalized(), p.as_slice())?;
    Ok(TestOutcome::from_threshold(tv, alpha / 2.0).with("alpha", alpha).with("n", theta.n))
}

/// Product of the marginals of `v` over `spec`.
fn marginal_product(v: &[f64], spec: &DomainSpec) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let marginals = (0..spec.features())
        .map(|j| marginal(v, spec, j))
        .collect::<Result<Vec<_>>>()?;
    let factors: Vec<&[f64]> = marginals.iter().map(Vec::as_slice).collect();
    let product = product_vector(&factors);
    Ok((marginals, product))
}

/// Accepts iff `d_TV(theta / (2 eta), theta^1 x ... x theta^d) <= alpha / 2`,
/// where `theta^j` are the marginals of `theta / (2 eta)`. Nothing is
/// projected back onto the simplex.
pub fn ns_independence_tester(spec: &DomainSpec, theta: &ThetaEstimator, alpha: f64) -> Result<TestOutcome> {
    if spec.features() < 2 {
        return Err(Error::InvalidParameter("independence testing needs at least two features".into()));
    }
    check_theta(theta, spec.total(), alpha)?;
    let normalized = theta.normalized();
    let (marginals, product) = marginal_product(&normalized, spec)?;
    let tv = tv_distance(&normalized, &product)?;
    Ok(TestOutcome::from_threshold(tv, alpha / 2.0)
        .with("alpha", alpha)
        .with("n", theta.n)
        .with("marginals", json!(marginals)))
}

/// `P(theta) = n sum_x (theta(x) - 2 eta p(x))^2 / (1 - 4 eta^2 p(x)^2)`.
pub fn p_statistic(theta: &ThetaEstimator, p: &ProbVector) -> Result<f64> {
    if theta.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: theta.len(),
        });
    }
    let two_eta = 2.0 * theta.eta;
    let n = theta.n as f64;
    Ok(n * theta
        .theta
        .iter()
        .zip(p.as_slice())
        .map(|(&th, &px)| (th - two_eta * px).powi(2) / (1.0 - (two_eta * px).powi(2)))
        .sum::<f64>())
}

/// Rejects iff `P(theta)` exceeds the 2/3-quantile of chi-squared with `T`
/// degrees of freedom.
pub fn p_test(theta: &ThetaEstimator, p: &ProbVector) -> Result<TestOutcome> {
    let stat = p_statistic(theta, p)?;
    let threshold = chi2_quantile(p.len() as u32, 2.0 / 3.0)?;
    Ok(TestOutcome::from_threshold(stat, threshold))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QStatistic {
    pub value: f64,
    /// Coordinates skipped because the marginal product vanished there.
    pub excluded: usize,
}

/// `Q(theta) = n sum_x (theta(x) / (2 eta) - bar_theta(x))^2 / bar_theta(x)`.
pub fn q_statistic(theta: &ThetaEstimator, spec: &DomainSpec) -> Result<QStatistic> {
    if theta.len() != spec.total() {
        return Err(Error::DimensionMismatch {
            expected: spec.total(),
            found: theta.len(),
        });
    }
    let normalized = theta.normalized();
    let (_, product) = marginal_product(&normalized, spec)?;
    let mut value = 0.0;
    let mut excluded = 0;
    for (&a, &b) in normalized.iter().zip(&product) {
        if b == 0.0 {
            excluded += 1;
            continue;
        }
        value += (a - b).powi(2) / b;
    }
    Ok(QStatistic {
        value: theta.n as f64 * value,
        excluded,
    })
}

/// Majority vote over `ceil(18 ln(1/beta))` (rounded up to odd) independent
/// runs of a tester with success probability at least 2/3; fails with
/// probability at most `beta` by Hoeffding.
pub fn amplify<F>(beta: f64, mut run: F) -> Result<TestOutcome>
where
    F: FnMut(usize) -> Result<TestOutcome>,
{
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidParameter(format!("beta must lie in (0,1), got {beta}")));
    }
    let mut reps = (18.0 * (1.0 / beta).ln()).ceil().max(1.0) as usize;
    if reps.is_multiple_of(2) {
        reps += 1;
    }
    let mut rejects = 0;
    for i in 0..reps {
        if run(i)?.decision == Decision::Reject {
            rejects += 1;
        }
    }
    let decision = if 2 * rejects > reps {
        Decision::Reject
    } else {
        Decision::Accept
    };
    Ok(TestOutcome {
        decision,
        statistic: Some(rejects as f64 / reps as f64),
        threshold: Some(0.5),
        diagnostics: BTreeMap::from([("repetitions".to_string(), json!(reps))]),
    })
}

/// Sample sizes at the upper-bound rates, scaled by `constant`.
pub mod rates {
    use crate::prob::DomainSpec;

    fn scaled(constant: u64, base: f64) -> u64 {
        constant * base.ceil() as u64
    }

    /// `c * ceil(T^2 / (alpha^2 eps^2))`.
    pub fn ns_identity(t: usize, alpha: f64, epsilon: f64, constant: u64) -> u64 {
        scaled(constant, (t as f64).powi(2) / (alpha * epsilon).powi(2))
    }

    /// `c * ceil(T^2.5 / (eps^2 alpha^2))`.
    pub fn sym_identity(t: usize, alpha: f64, epsilon: f64, constant: u64) -> u64 {
        scaled(constant, (t as f64).powf(2.5) / (alpha * epsilon).powi(2))
    }

    /// `c * ceil((T^2 / (alpha^2 eps^2)) (d^2 (max_j T^j)^2 + sqrt(T)))`.
    pub fn sym_independence(spec: &DomainSpec, alpha: f64, epsilon: f64, constant: u64) -> u64 {
        let t = spec.total() as f64;
        let d = spec.features() as f64;
        let max_tj = *spec.feature_sizes().iter().max().expect("nonempty") as f64;
        scaled(constant, t * t / (alpha * epsilon).powi(2) * (d * d * max_tj * max_tj + t.sqrt()))
    }

    /// `c * ceil((T / (alpha^2 eps^2)) (T + d^2 sum_j T^j))`.
    pub fn ns_independence(spec: &DomainSpec, alpha: f64, epsilon: f64, constant: u64) -> u64 {
        let t = spec.total() as f64;
        let d = spec.features() as f64;
        let sum_tj: usize = spec.feature_sizes().iter().sum();
        scaled(constant, t / (alpha * epsilon).powi(2) * (t + d * d * sum_tj as f64))
    }
}
