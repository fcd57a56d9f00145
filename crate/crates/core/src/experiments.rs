//! Seeded Monte-Carlo harness for the four experiments on the `P` and `Q`
//! statistics.
//!
//! Every random stream is addressed through [`SeedTree`] by
//! `(master seed, experiment id, parameter point, trial)`, so output is a pure
//! function of the configuration and does not depend on the worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chi2::chi2_quantile;
use crate::error::{Error, Result};
use crate::nonsymmetric::{sample_theta, NonSymmetricMechanism, SimulationMode, ThetaEstimator};
use crate::prob::{marginal, paninski_perturb, product_distribution, tv_distance, DomainSpec, ProbVector};
use crate::seed::SeedTree;
use crate::testers::{p_statistic, q_statistic, Decision};

pub const EXP_NULL: u64 = 1;
pub const EXP_ALTERNATIVE: u64 = 2;
pub const EXP_SAMPLE_COMPLEXITY: u64 = 3;
pub const EXP_Q: u64 = 4;

/// Parameter lists swept one at a time (or as a grid for experiments 1 and
/// 2). An empty list means "use the base value".
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Sweeps {
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    pub n: Vec<u64>,
    pub alpha: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl Sweeps {
    pub fn validate(&self) -> Result<()> {
        if self.t.iter().any(|&t| t < 2) {
            return Err(Error::InvalidParameter("swept T must be at least 2".into()));
        }
        if self.n.contains(&0) {
            return Err(Error::InvalidParameter("swept n must be positive".into()));
        }
        if self.alpha.iter().any(|a| !(*a >= 0.0 && *a <= 1.0)) {
            return Err(Error::InvalidParameter("swept alpha must lie in [0,1]".into()));
        }
        if self.epsilon.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter("swept epsilon must be positive".into()));
        }
        Ok(())
    }

    /// The grids of experiment 3: T in 5..=100 step 5, alpha and epsilon in
    /// 0.05..=0.5 step 0.05.
    pub fn paper_grid() -> Self {
        let steps = |k: usize| (1..=k).map(|i| (i as f64 * 0.05 * 100.0).round() / 100.0).collect();
        Sweeps {
            t: (1..=20).map(|i| 5 * i).collect(),
            n: vec![],
            alpha: steps(10),
            epsilon: steps(10),
        }
    }
}

/// Rejection-rate window for the sample-complexity search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RejectionBand {
    pub low: f64,
    pub high: f64,
    pub target: f64,
}

impl RejectionBand {
    /// Window used with the `P`-test on alternatives, whose rejection rate
    /// starts near 1/3 for small `n` and rises to 1.
    pub const POWER: RejectionBand = RejectionBand {
        low: 0.65,
        high: 0.70,
        target: 0.67,
    };
    /// The 30-35% window.
    pub const THIRD: RejectionBand = RejectionBand {
        low: 0.30,
        high: 0.35,
        target: 0.33,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.low && self.low <= self.target && self.target <= self.high && self.high <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "band needs 0 <= low <= target <= high <= 1, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, r: f64) -> bool {
        self.low <= r && r <= self.high
    }

    /// `[target - 0.08, target + 0.09]`.
    pub fn sanity_range(&self) -> (f64, f64) {
        (self.target - 0.08, self.target + 0.09)
    }
}

impl Default for RejectionBand {
    fn default() -> Self {
        RejectionBand::POWER
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    #[serde(rename = "T")]
    pub t: usize,
    /// Null distribution; `None` means uniform on `T`.
    pub p: Option<ProbVector>,
    pub alpha: f64,
    pub n: u64,
    pub epsilon: f64,
    /// Trials per parameter point.
    pub trials: usize,
    pub seed: u64,
    pub sweeps: Sweeps,
    pub mode: SimulationMode,
    /// Monte-Carlo trials per rejection-rate probe (experiment 3).
    pub probe_trials: usize,
    pub equipartition: usize,
    /// First sample size tried by the doubling search.
    pub n_start: u64,
    pub n_cap: u64,
    pub band: RejectionBand,
    /// Product domain for experiment 4.
    pub features: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            t: 10,
            p: None,
            alpha: 0.2,
            n: 1000,
            epsilon: 0.25,
            trials: 10_000,
            seed: 20_190_101,
            sweeps: Sweeps::default(),
            mode: SimulationMode::PerUser,
            probe_trials: 400,
            equipartition: 8,
            n_start: 64,
            n_cap: 10_000_000,
            band: RejectionBand::default(),
            features: vec![3, 3],
        }
    }
}

impl ExperimentConfig {
    /// Defaults for the given experiment: experiment 3 simulates through
    /// sufficient statistics and experiment 4 uses `n = 25000`, `alpha = 0.25`.
    pub fn for_experiment(id: u64) -> Self {
        let mut cfg = ExperimentConfig::default();
        match id {
            EXP_SAMPLE_COMPLEXITY => cfg.mode = SimulationMode::Aggregate,
            EXP_Q => {
                cfg.n = 25_000;
                cfg.alpha = 0.25;
            }
            _ => {}
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.t < 2 {
            return Err(Error::InvalidParameter(format!("T must be at least 2, got {}", self.t)));
        }
        if !(self.alpha >= 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in [0,1], got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n == 0 || self.trials == 0 || self.probe_trials == 0 {
            return Err(Error::InvalidParameter("n, trials and probe_trials must be positive".into()));
        }
        if self.equipartition < 2 {
            return Err(Error::InvalidParameter("equipartition needs at least 2 points".into()));
        }
        if self.n_start == 0 || self.n_start > self.n_cap {
            return Err(Error::InvalidParameter("need 0 < n_start <= n_cap".into()));
        }
        self.band.validate()?;
        self.sweeps.validate()
    }

    pub fn null_distribution(&self, t: usize) -> Result<ProbVector> {
        match &self.p {
            Some(p) if p.len() == t => Ok(p.clone()),
            Some(p) => Err(Error::DimensionMismatch {
                expected: t,
                found: p.len(),
            }),
            None => Ok(ProbVector::uniform(t)),
        }
    }

    fn list<T: Copy>(sweep: &[T], base: T) -> Vec<T> {
        if sweep.is_empty() {
            vec![base]
        } else {
            sweep.to_vec()
        }
    }

    /// Full grid over the sweep lists, in `T, n, alpha, epsilon` order.
    pub fn grid_points(&self) -> Vec<ParamPoint> {
        let mut out = Vec::new();
        for &t in &Self::list(&self.sweeps.t, self.t) {
            for &n in &Self::list(&self.sweeps.n, self.n) {
                for &alpha in &Self::list(&self.sweeps.alpha, self.alpha) {
                    for &epsilon in &Self::list(&self.sweeps.epsilon, self.epsilon) {
                        out.push(ParamPoint { t, n, alpha, epsilon });
                    }
                }
            }
        }
        out
    }

    /// The base point plus one-at-a-time variations of `T`, `alpha` and
    /// `epsilon`, deduplicated.
    pub fn one_at_a_time_points(&self) -> Vec<ParamPoint> {
        let base = ParamPoint {
            t: self.t,
            n: self.n,
            alpha: self.alpha,
            epsilon: self.epsilon,
        };
        let mut out = vec![base];
        let mut push = |pt: ParamPoint| {
            if !out.contains(&pt) {
                out.push(pt);
            }
        };
        for &t in &self.sweeps.t {
            push(ParamPoint { t, ..base });
        }
        for &alpha in &self.sweeps.alpha {
            push(ParamPoint { alpha, ..base });
        }
        for &epsilon in &self.sweeps.epsilon {
            push(ParamPoint { epsilon, ..base });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamPoint {
    #[serde(rename = "T")]
    pub t: usize,
    pub n: u64,
    pub alpha: f64,
    pub epsilon: f64,
}

impl ParamPoint {
    fn seed(&self, root: SeedTree) -> SeedTree {
        root.child(self.t as u64)
            .child(self.alpha.to_bits())
            .child(self.epsilon.to_bits())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub statistic: f64,
    pub decision: Decision,
    /// Euclidean norm of `theta`.
    pub theta_norm: f64,
    /// `d_TV(theta / (2 eta), p)` against the null.
    pub tv_to_null: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRun {
    pub point: ParamPoint,
    pub threshold: f64,
    pub records: Vec<TrialRecord>,
}

impl PointRun {
    pub fn statistics(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.statistic).collect()
    }

    pub fn rejection_rate(&self) -> f64 {
        let rejects = self.records.iter().filter(|r| r.decision == Decision::Reject).count();
        rejects as f64 / self.records.len() as f64
    }

    pub fn summary(&self) -> Summary {
        Summary::of(&self.statistics())
    }
}

/// Mean, unbiased variance and median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Summary {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
                median: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let variance = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64
        } else {
            0.0
        };
        Summary {
            count,
            mean,
            variance,
            median: median(values),
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Two-sample Kolmogorov-Smirnov distance `sup_x |F_a(x) - F_b(x)|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// Runs `f` on a dedicated pool with `threads` workers (0 = rayon default).
/// Results do not depend on the worker count.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn record(trial: usize, theta: &ThetaEstimator, p: &ProbVector, threshold: f64) -> Result<TrialRecord> {
    let statistic = p_statistic(theta, p)?;
    let decision = if statistic > threshold {
        Decision::Reject
    } else {
        Decision::Accept
    };
    Ok(TrialRecord {
        trial,
        statistic,
        decision,
        theta_norm: theta.theta.iter().map(|v| v * v).sum::<f64>().sqrt(),
        tv_to_null: tv_distance(&theta.normalized(), p.as_slice())?,
    })
}

/// `trials` values of `P(theta)` at one point. When `alpha > 0` each trial
/// draws its own Paninski perturbation of the null and samples from it.
fn run_point(cfg: &ExperimentConfig, point: ParamPoint, root: SeedTree) -> Result<PointRun> {
    let p = cfg.null_distribution(point.t)?;
    let mech = NonSymmetricMechanism::new(point.epsilon)?;
    let threshold = chi2_quantile(point.t as u32, 2.0 / 3.0)?;
    let seeds = point.seed(root).child(point.n);
    let records = (0..cfg.trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.child(i as u64).rng();
            let theta = if point.alpha > 0.0 {
                let q = paninski_perturb(&p, point.alpha, &mut rng)?;
                sample_theta(&q, point.n, &mech, cfg.mode, &mut rng)?
            } else {
                sample_theta(&p, point.n, &mech, cfg.mode, &mut rng)?
            };
            record(i, &theta, &p, threshold)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PointRun {
        point,
        threshold,
        records,
    })
}

/// Experiment 1: `P(theta)` under the null over the `T x n x epsilon` grid;
/// alpha is forced to 0.
pub fn run_null_experiment(cfg: &ExperimentConfig) -> Result<Vec<PointRun>> {
    cfg.validate()?;
    let root = SeedTree::new(cfg.seed).child(EXP_NULL);
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for mut pt in cfg.grid_points() {
        pt.alpha = 0.0;
        if seen.contains(&pt) {
            continue;
        }
        seen.push(pt);
        out.push(run_point(cfg, pt, root)?);
    }
    Ok(out)
}

/// Experiment 2: `P(theta)` against the null when samples come from a fresh
/// alpha-far Paninski perturbation each trial.
pub fn run_alternative_experiment(cfg: &ExperimentConfig) -> Result<Vec<PointRun>> {
    cfg.validate()?;
    let root = SeedTree::new(cfg.seed).child(EXP_ALTERNATIVE);
    cfg.grid_points().into_iter().map(|pt| run_point(cfg, pt, root)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub band: RejectionBand,
    pub n_start: u64,
    pub n_cap: u64,
    pub equipartition: usize,
}

impl SearchConfig {
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        SearchConfig {
            band: cfg.band,
            n_start: cfg.n_start,
            n_cap: cfg.n_cap,
            equipartition: cfg.equipartition,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub n_lower: u64,
    pub n_upper: u64,
    pub n_star: u64,
    pub rejection_rate: f64,
    /// Every `(n, r(n))` evaluated, in ascending `n`.
    pub probes: Vec<(u64, f64)>,
}

/// Finds the sample size where a nondecreasing rejection-rate curve `r(n)`
/// crosses the band.
///
/// Doubling from `n_start` brackets the crossing with `r(lo) < low` (or
/// `lo = 1`) and `r(hi) > high`; bisection shrinks `[lo, hi]` until the
/// midpoint lands in the band; the bracket is then split into
/// `equipartition` evenly spaced points and the one whose rate is closest to
/// the target is returned. Each `n` is evaluated at most once.
pub fn search_sample_complexity<F>(search: &SearchConfig, mut eval: F) -> Result<SearchOutcome>
where
    F: FnMut(u64) -> Result<f64>,
{
    search.band.validate()?;
    if search.equipartition < 2 || search.n_start == 0 || search.n_start > search.n_cap {
        return Err(Error::InvalidParameter(format!("bad search configuration {search:?}")));
    }
    let band = search.band;
    let mut memo: BTreeMap<u64, f64> = BTreeMap::new();
    let mut r = |n: u64, memo: &mut BTreeMap<u64, f64>| -> Result<f64> {
        if let Some(&v) = memo.get(&n) {
            return Ok(v);
        }
        let v = eval(n)?;
        memo.insert(n, v);
        Ok(v)
    };

    let mut hi = search.n_start;
    loop {
        let v = r(hi, &mut memo)?;
        if v > band.high {
            break;
        }
        if hi >= search.n_cap {
            if v >= band.low {
                break;
            }
            return Err(Error::NonBracketing { cap: search.n_cap });
        }
        hi = (hi * 2).min(search.n_cap);
    }
    let below = memo.range(..hi).rev().find(|(_, v)| **v < band.low).map(|(n, _)| *n);
    let mut lo = match below {
        Some(n) => n,
        None => {
            let mut m = *memo.keys().next().expect("evaluated at least once") / 2;
            loop {
                if m <= 1 {
                    break 1;
                }
                if r(m, &mut memo)? < band.low {
                    break m;
                }
                m /= 2;
            }
        }
    };

    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let v = r(mid, &mut memo)?;
        if band.contains(v) {
            break;
        }
        if v < band.low {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let k = search.equipartition;
    let span = (hi - lo) as f64;
    let mut grid: Vec<u64> = (0..k)
        .map(|i| lo + (span * i as f64 / (k - 1) as f64).round() as u64)
        .collect();
    grid.dedup();
    let mut best = (grid[0], f64::INFINITY, f64::NAN);
    for &n in &grid {
        if n == 0 {
            continue;
        }
        let v = r(n, &mut memo)?;
        let gap = (v - band.target).abs();
        if gap < best.1 {
            best = (n, gap, v);
        }
    }
    Ok(SearchOutcome {
        n_lower: lo,
        n_upper: hi,
        n_star: best.0,
        rejection_rate: best.2,
        probes: memo.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityResult {
    #[serde(rename = "T")]
    pub t: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub n_lower: u64,
    pub n_upper: u64,
    pub n_star: u64,
    pub rejection_rate: f64,
    pub probes: usize,
    /// Whether the rate at `n_star` lies in the band's sanity range.
    pub sane: bool,
}

impl SampleComplexityResult {
    fn new(pt: ParamPoint, out: SearchOutcome, band: &RejectionBand) -> Self {
        let (a, b) = band.sanity_range();
        SampleComplexityResult {
            t: pt.t,
            alpha: pt.alpha,
            epsilon: pt.epsilon,
            n_lower: out.n_lower,
            n_upper: out.n_upper,
            n_star: out.n_star,
            rejection_rate: out.rejection_rate,
            probes: out.probes.len(),
            sane: a <= out.rejection_rate && out.rejection_rate <= b,
        }
    }
}

/// Rejection-rate curve used by experiment 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluator {
    /// Empirical rejection rate of the `P`-test on samples from one fixed
    /// alpha-far perturbation per parameter point.
    PTest,
    /// `r(n) = min(1, n / scale)`.
    Linear { scale: f64 },
    /// `r(n) = 0`.
    Zero,
}

/// Rejection rate of the `P`-test at `n` users drawn from `q`, tested
/// against `p`, over `trials` seeded runs.
pub fn p_test_rejection_rate(
    p: &ProbVector,
    q: &ProbVector,
    n: u64,
    mech: &NonSymmetricMechanism,
    mode: SimulationMode,
    trials: usize,
    seeds: SeedTree,
) -> Result<f64> {
    let threshold = chi2_quantile(p.len() as u32, 2.0 / 3.0)?;
    let rejects = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeds.child(i as u64).rng();
            let theta = sample_theta(q, n, mech, mode, &mut rng)?;
            Ok(u32::from(p_statistic(&theta, p)? > threshold))
        })
        .collect::<Result<Vec<u32>>>()?;
    Ok(rejects.iter().sum::<u32>() as f64 / trials as f64)
}

/// Experiment 3 at one parameter point (`point.n` is ignored).
pub fn find_sample_complexity(point: ParamPoint, cfg: &ExperimentConfig, evaluator: Evaluator) -> Result<SampleComplexityResult> {
    cfg.validate()?;
    let search = SearchConfig::from_experiment(cfg);
    let out = match evaluator {
        Evaluator::Linear { scale } => {
            if !(scale > 0.0) {
                return Err(Error::InvalidParameter(format!("stub scale must be positive, got {scale}")));
            }
            search_sample_complexity(&search, |n| Ok((n as f64 / scale).min(1.0)))?
        }
        Evaluator::Zero => search_sample_complexity(&search, |_| Ok(0.0))?,
        Evaluator::PTest => {
            let p = cfg.null_distribution(point.t)?;
            let mech = NonSymmetricMechanism::new(point.epsilon)?;
            let seeds = point.seed(SeedTree::new(cfg.seed).child(EXP_SAMPLE_COMPLEXITY));
            // one alpha-far alternative for the whole point
            let q = paninski_perturb(&p, point.alpha, &mut seeds.child(u64::MAX).rng())?;
            search_sample_complexity(&search, |n| {
                p_test_rejection_rate(&p, &q, n, &mech, cfg.mode, cfg.probe_trials, seeds.child(n))
            })?
        }
    };
    Ok(SampleComplexityResult::new(point, out, &cfg.band))
}

/// Experiment 3 over the base point and the one-at-a-time sweeps.
pub fn run_sample_complexity_experiment(cfg: &ExperimentConfig, evaluator: Evaluator) -> Result<Vec<SampleComplexityResult>> {
    cfg.validate()?;
    cfg.one_at_a_time_points()
        .into_iter()
        .map(|pt| find_sample_complexity(pt, cfg, evaluator))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Exponents {
    pub c_t: Option<f64>,
    pub c_alpha: Option<f64>,
    pub c_epsilon: Option<f64>,
}

/// Median over all pairs differing in exactly one of `(T, alpha, epsilon)`
/// of `ln(N_i / N_j) / ln(xi_i / xi_j)`.
pub fn fit_exponents(results: &[SampleComplexityResult]) -> Exponents {
    let mut est: [Vec<f64>; 3] = Default::default();
    for (i, a) in results.iter().enumerate() {
        for b in &results[i + 1..] {
            let diffs = [a.t != b.t, a.alpha != b.alpha, a.epsilon != b.epsilon];
            if diffs.iter().filter(|&&d| d).count() != 1 || a.n_star == 0 || b.n_star == 0 {
                continue;
            }
            let k = diffs.iter().position(|&d| d).expect("one difference");
            let (xa, xb) = match k {
                0 => (a.t as f64, b.t as f64),
                1 => (a.alpha, b.alpha),
                _ => (a.epsilon, b.epsilon),
            };
            if !(xa > 0.0 && xb > 0.0) {
                continue;
            }
            est[k].push((a.n_star as f64 / b.n_star as f64).ln() / (xa / xb).ln());
        }
    }
    let med = |v: &Vec<f64>| if v.is_empty() { None } else { Some(median(v)) };
    Exponents {
        c_t: med(&est[0]),
        c_alpha: med(&est[1]),
        c_epsilon: med(&est[2]),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRun {
    pub spec: DomainSpec,
    pub null: Vec<f64>,
    pub alternative: Vec<f64>,
    /// Coordinates skipped per trial because the marginal product vanished.
    pub excluded: usize,
}

/// Experiment 4: `Q(theta)` under a product null (the product of the
/// marginals of `p`, uniform by default) and under a fresh alpha-far
/// Paninski perturbation of that joint per trial.
pub fn run_q_experiment(cfg: &ExperimentConfig) -> Result<QRun> {
    cfg.validate()?;
    let spec = DomainSpec::new(cfg.features.clone())?;
    if spec.features() < 2 {
        return Err(Error::InvalidParameter("experiment 4 needs a multi-feature domain".into()));
    }
    let joint = match &cfg.p {
        Some(p) if p.len() == spec.total() => p.clone(),
        Some(p) => {
            return Err(Error::DimensionMismatch {
                expected: spec.total(),
                found: p.len(),
            })
        }
        None => ProbVector::uniform(spec.total()),
    };
    let marginals = (0..spec.features())
        .map(|j| ProbVector::new(marginal(joint.as_slice(), &spec, j)?))
        .collect::<Result<Vec<_>>>()?;
    let null = product_distribution(&marginals)?;
    let mech = NonSymmetricMechanism::new(cfg.epsilon)?;
    let root = SeedTree::new(cfg.seed)
        .child(EXP_Q)
        .child(spec.total() as u64)
        .child(cfg.alpha.to_bits())
        .child(cfg.epsilon.to_bits())
        .child(cfg.n);
    let arm = |label: u64, perturb: bool| -> Result<Vec<(f64, usize)>> {
        (0..cfg.trials)
            .into_par_iter()
            .map(|i| {
                let mut rng = root.child(label).child(i as u64).rng();
                let dist = if perturb {
                    paninski_perturb(&null, cfg.alpha, &mut rng)?
                } else {
                    null.clone()
                };
                let theta = sample_theta(&dist, cfg.n, &mech, cfg.mode, &mut rng)?;
                let q = q_statistic(&theta, &spec)?;
                Ok((q.value, q.excluded))
            })
            .collect()
    };
    let a = arm(0, false)?;
    let b = arm(1, true)?;
    let excluded = a.iter().chain(&b).map(|x| x.1).sum();
    Ok(QRun {
        spec,
        null: a.into_iter().map(|x| x.0).collect(),
        alternative: b.into_iter().map(|x| x.0).collect(),
        excluded,
    })
}

/// Row of the experiment 1 and 2 CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticRow {
    pub trial: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub n: u64,
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(rename = "P")]
    pub p: f64,
}

pub fn statistic_rows(runs: &[PointRun]) -> Vec<StatisticRow> {
    runs.iter()
        .flat_map(|run| {
            run.records.iter().map(move |r| StatisticRow {
                trial: r.trial,
                t: run.point.t,
                n: run.point.n,
                epsilon: run.point.epsilon,
                alpha: run.point.alpha,
                p: r.statistic,
            })
        })
        .collect()
}

/// Row of the experiment 3 CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleComplexityRow {
    #[serde(rename = "T")]
    pub t: usize,
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(rename = "n_L")]
    pub n_lower: u64,
    #[serde(rename = "n_U")]
    pub n_upper: u64,
    pub n_star: u64,
    pub rejection_rate: f64,
}

impl From<&SampleComplexityResult> for SampleComplexityRow {
    fn from(r: &SampleComplexityResult) -> Self {
        SampleComplexityRow {
            t: r.t,
            alpha: r.alpha,
            epsilon: r.epsilon,
            n_lower: r.n_lower,
            n_upper: r.n_upper,
            n_star: r.n_star,
            rejection_rate: r.rejection_rate,
        }
    }
}

/// Row of the experiment 4 CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QRow {
    pub trial: usize,
    pub arm: String,
    #[serde(rename = "Q")]
    pub q: f64,
}

pub fn q_rows(run: &QRun) -> Vec<QRow> {
    let arm = |name: &str, values: &[f64]| -> Vec<QRow> {
        values
            .iter()
            .enumerate()
            .map(|(trial, &q)| QRow {
                trial,
                arm: name.to_string(),
                q,
            })
            .collect()
    };
    let mut rows = arm("null", &run.null);
    rows.extend(arm("alternative", &run.alternative));
    rows
}
