//! Maximum-likelihood estimation of the type distribution from signals.
//!
//! Both mechanisms give a loss of the form `-(1/n) sum_i log(g_i . p)` with
//! nonnegative likelihood vectors `g_i`, which is convex in `p`. It is
//! minimized over the probability simplex (optionally intersected with affine
//! equality constraints) by projected gradient descent with backtracking.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonsymmetric::{NonSymUser, SignPattern};
use crate::prob::project_raw;
use crate::prob::ProbVector;
use crate::symmetric::{SignalHistogram, SymmetricMechanism};

/// A differentiable loss over `R^T`.
pub trait LogLoss {
    fn dim(&self) -> usize;

    fn value(&self, p: &[f64]) -> f64;

    fn value_grad(&self, p: &[f64]) -> (f64, Vec<f64>);
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian_diag: Vec<f64>,
}

/// `f(p) = -sum_x (n_x / n) log(rho + gamma p(x))`.
#[derive(Debug, Clone)]
pub struct SymmetricLogLoss {
    hist: SignalHistogram,
    mech: SymmetricMechanism,
    freqs: Vec<f64>,
}

impl SymmetricLogLoss {
    pub fn new(hist: SignalHistogram, mech: SymmetricMechanism) -> Result<Self> {
        if hist.len() != mech.domain_size() {
            return Err(Error::DimensionMismatch {
                expected: mech.domain_size(),
                found: hist.len(),
            });
        }
        if mech.gamma() == 0.0 {
            return Err(Error::Degenerate("gamma = 0 makes the likelihood constant".into()));
        }
        let freqs = hist.frequencies()?;
        Ok(SymmetricLogLoss { hist, mech, freqs })
    }

    pub fn histogram(&self) -> &SignalHistogram {
        &self.hist
    }

    pub fn mechanism(&self) -> &SymmetricMechanism {
        &self.mech
    }

    /// Value, gradient `-gamma q_x / (rho + gamma p_x)` and the Hessian
    /// diagonal `gamma^2 q_x / (rho + gamma p_x)^2`. The Hessian is diagonal.
    pub fn value_grad_hess(&self, p: &[f64]) -> LossEval {
        let (rho, gamma) = (self.mech.rho(), self.mech.gamma());
        let mut value = 0.0;
        let mut gradient = Vec::with_capacity(p.len());
        let mut hessian_diag = Vec::with_capacity(p.len());
        for (&q, &px) in self.freqs.iter().zip(p) {
            let form = rho + gamma * px;
            if q == 0.0 {
                // unobserved signals contribute nothing
                gradient.push(0.0);
                hessian_diag.push(0.0);
                continue;
            }
            value -= q * form.ln();
            gradient.push(-gamma * q / form);
            hessian_diag.push(gamma * gamma * q / (form * form));
        }
        LossEval {
            value,
            gradient,
            hessian_diag,
        }
    }
}

impl LogLoss for SymmetricLogLoss {
    fn dim(&self) -> usize {
        self.freqs.len()
    }

    fn value(&self, p: &[f64]) -> f64 {
        let (rho, gamma) = (self.mech.rho(), self.mech.gamma());
        self.freqs
            .iter()
            .zip(p)
            .filter(|(&q, _)| q > 0.0)
            .map(|(&q, &px)| -q * (rho + gamma * px).ln())
            .sum()
    }

    fn value_grad(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let e = self.value_grad_hess(p);
        (e.value, e.gradient)
    }
}

/// `f(p) = -(1/n) sum_i log(g_i^{y_i} . p)` with `g^y = 1/2 * 1 + eta * y * b`.
///
/// Users are grouped by their contribution `y * b`; the loss only depends on
/// that vector and its multiplicity.
#[derive(Debug, Clone)]
pub struct NonSymLogLoss {
    t: usize,
    eta: f64,
    n: u64,
    groups: Vec<(SignPattern, f64)>,
}

impl NonSymLogLoss {
    pub fn new(users: &[NonSymUser], eta: f64) -> Result<Self> {
        let first = users.first().ok_or(Error::EmptyInput)?;
        if !(0.0..0.5).contains(&eta) {
            return Err(Error::InvalidParameter(format!("eta must lie in [0, 1/2), got {eta}")));
        }
        let t = first.domain_size();
        let mut counts: BTreeMap<SignPattern, u64> = BTreeMap::new();
        for u in users {
            if u.domain_size() != t {
                return Err(Error::DimensionMismatch {
                    expected: t,
                    found: u.domain_size(),
                });
            }
            *counts.entry(u.contribution()).or_default() += 1;
        }
        let n = users.len() as u64;
        Ok(NonSymLogLoss {
            t,
            eta,
            n,
            groups: counts.into_iter().map(|(c, k)| (c, k as f64 / n as f64)).collect(),
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Distinct contribution vectors with their empirical weights.
    pub fn groups(&self) -> &[(SignPattern, f64)] {
        &self.groups
    }
}

impl LogLoss for NonSymLogLoss {
    fn dim(&self) -> usize {
        self.t
    }

    fn value(&self, p: &[f64]) -> f64 {
        let half_mass = 0.5 * p.iter().sum::<f64>();
        self.groups
            .iter()
            .map(|(c, w)| -w * (half_mass + self.eta * c.dot(p)).ln())
            .sum()
    }

    fn value_grad(&self, p: &[f64]) -> (f64, Vec<f64>) {
        let half_mass = 0.5 * p.iter().sum::<f64>();
        let mut value = 0.0;
        let mut common = 0.0;
        let mut grad = vec![0.0; self.t];
        for (c, w) in &self.groups {
            let form = half_mass + self.eta * c.dot(p);
            value -= w * form.ln();
            let scale = w / form;
            common -= 0.5 * scale;
            for (x, g) in grad.iter_mut().enumerate() {
                *g -= scale * self.eta * c.get(x) as f64;
            }
        }
        grad.iter_mut().for_each(|g| *g += common);
        (value, grad)
    }
}

/// A linear equality `a . p = b` added to the simplex constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineConstraint {
    pub a: Vec<f64>,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// First trial step of every backtracking search.
    pub initial_step: f64,
    /// Multiplier applied on each rejected trial step.
    pub decay: f64,
    pub armijo: f64,
    /// Stop once the unit-step gradient mapping has at most this norm.
    pub tolerance: f64,
    /// Start each line search from the Barzilai-Borwein step instead of
    /// `initial_step`.
    pub barzilai_borwein: bool,
    pub strong_convexity_hint: Option<f64>,
    pub constraints: Vec<AffineConstraint>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 10_000,
            initial_step: 1.0,
            decay: 0.5,
            armijo: 1e-4,
            tolerance: 1e-8,
            barzilai_borwein: true,
            strong_convexity_hint: None,
            constraints: Vec::new(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters > 0
            && self.initial_step > 0.0
            && self.decay > 0.0
            && self.decay < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0
            && self.tolerance > 0.0
            && self.strong_convexity_hint.is_none_or(|m| m > 0.0);
        if !ok {
            return Err(Error::InvalidParameter("solver settings must be positive (decay and armijo in (0,1))".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub iterations: usize,
    pub final_loss: f64,
    pub grad_norm: f64,
    pub converged: bool,
    pub p_hat: Vec<f64>,
    /// Loss after every accepted step, starting with the initial point.
    #[serde(skip)]
    pub loss_trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Projection onto the simplex intersected with `constraints` (Dykstra's
/// alternating projections; plain simplex projection when unconstrained).
pub fn project_feasible(v: &[f64], constraints: &[AffineConstraint]) -> Vec<f64> {
    if constraints.is_empty() {
        return project_raw(v);
    }
    let sets = constraints.len() + 1;
    let mut x = v.to_vec();
    let mut increments = vec![vec![0.0; v.len()]; sets];
    for _ in 0..10_000 {
        let before = x.clone();
        for (k, inc) in increments.iter_mut().enumerate() {
            let y: Vec<f64> = x.iter().zip(inc.iter()).map(|(a, b)| a + b).collect();
            let projected = if k == 0 {
                project_raw(&y)
            } else {
                let c = &constraints[k - 1];
                let aa = dot(&c.a, &c.a);
                let shift = (dot(&c.a, &y) - c.b) / aa;
                y.iter().zip(&c.a).map(|(yi, ai)| yi - shift * ai).collect()
            };
            for ((i, yi), pi) in inc.iter_mut().zip(&y).zip(&projected) {
                *i = yi - pi;
            }
            x = projected;
        }
        let moved: f64 = x.iter().zip(&before).map(|(a, b)| (a - b).abs()).sum();
        if moved < 1e-15 {
            break;
        }
    }
    x
}

fn gradient_mapping_norm(p: &[f64], g: &[f64], constraints: &[AffineConstraint]) -> f64 {
    let step: Vec<f64> = p.iter().zip(g).map(|(a, b)| a - b).collect();
    let proj = project_feasible(&step, constraints);
    p.iter().zip(&proj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}

/// Projected gradient descent with Armijo backtracking, started from the
/// feasible point nearest the uniform distribution.
pub fn pgd_solve<L: LogLoss + ?Sized>(loss: &L, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    let t = loss.dim();
    for c in &cfg.constraints {
        if c.a.len() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                found: c.a.len(),
            });
        }
    }
    let mut p = project_feasible(&vec![1.0 / t as f64; t], &cfg.constraints);
    let (mut f, mut g) = loss.value_grad(&p);
    if !f.is_finite() {
        return Err(Error::Degenerate("loss is not finite at the starting point".into()));
    }
    let mut trace = vec![f];
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut grad_norm = gradient_mapping_norm(&p, &g, &cfg.constraints);
    let mut iterations = 0;
    while iterations < cfg.max_iters && grad_norm > cfg.tolerance {
        let mut step = cfg.initial_step;
        if cfg.barzilai_borwein {
            if let Some((p_old, g_old)) = &prev {
                let dp: Vec<f64> = p.iter().zip(p_old).map(|(a, b)| a - b).collect();
                let dg: Vec<f64> = g.iter().zip(g_old).map(|(a, b)| a - b).collect();
                let curv = dot(&dp, &dg);
                if curv > 0.0 {
                    step = (dot(&dp, &dp) / curv).clamp(1e-12, 1e12);
                }
            }
        }
        let mut accepted = None;
        let mut last_trial = f64::NAN;
        while step > 1e-20 {
            let trial: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let candidate = project_feasible(&trial, &cfg.constraints);
            let decrease: f64 = g.iter().zip(candidate.iter().zip(&p)).map(|(gi, (c, pi))| gi * (c - pi)).sum();
            let fc = loss.value(&candidate);
            last_trial = fc;
            if fc.is_finite() && fc <= f + cfg.armijo * decrease {
                accepted = Some((candidate, fc));
                break;
            }
            step *= cfg.decay;
        }
        iterations += 1;
        let Some((candidate, fc)) = accepted else {
            if last_trial.is_nan() || last_trial > f + 1e-12 * f.abs().max(1.0) {
                return Err(Error::SolverDiverged {
                    iterations,
                    loss: f,
                    iterate: p,
                });
            }
            // no representable progress left
            break;
        };
        let (fc2, gc) = loss.value_grad(&candidate);
        debug_assert!((fc2 - fc).abs() <= 1e-12 * fc.abs().max(1.0));
        prev = Some((std::mem::replace(&mut p, candidate), std::mem::replace(&mut g, gc)));
        f = fc2;
        trace.push(f);
        grad_norm = gradient_mapping_norm(&p, &g, &cfg.constraints);
    }
    Ok(SolverReport {
        iterations,
        final_loss: f,
        grad_norm,
        converged: grad_norm <= cfg.tolerance,
        p_hat: p,
        loss_trace: trace,
    })
}

/// Result of inverting the channel on the empirical signal frequencies.
#[derive(Debug, Clone, PartialEq)]
pub enum ClosedForm {
    /// `p* = phi^{-1}(q*)` lies in the simplex and is the exact MLE.
    Inside(ProbVector),
    /// `p*` has a negative entry; the MLE has to be found iteratively.
    OutsideSimplex(Vec<f64>),
}

/// `p* = G^{-1} q*`, which for randomized response is `(q* - rho) / gamma`.
pub fn closed_form_symmetric(hist: &SignalHistogram, mech: &SymmetricMechanism) -> Result<ClosedForm> {
    let q = hist.frequencies()?;
    let p = mech.phi_inverse(&q)?;
    // boundary points belong to the (closed) simplex
    if p.iter().all(|&w| w >= -1e-12) {
        let clamped: Vec<f64> = p.iter().map(|w| w.max(0.0)).collect();
        Ok(ClosedForm::Inside(ProbVector::from_unnormalized(clamped)?))
    } else {
        Ok(ClosedForm::OutsideSimplex(p))
    }
}

/// Smallest curvature of the symmetric loss over the simplex,
/// `min_x gamma^2 (n_x / n) / (rho + gamma)^2`.
pub fn strong_convexity_estimate(loss: &SymmetricLogLoss) -> f64 {
    let m = loss.mechanism();
    let top = m.rho() + m.gamma();
    let min_freq = loss.freqs.iter().copied().fold(f64::INFINITY, f64::min);
    let bound = m.gamma() * m.gamma() * min_freq / (top * top);
    debug_assert!(
        m.epsilon() > 1.0 || bound >= m.epsilon().powi(2) / 9.0 * min_freq * (1.0 - 1e-12),
        "curvature bound below eps^2/9 * min frequency"
    );
    bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prob::tv_distance;
    use approx::assert_abs_diff_eq;

    fn ln3_binary() -> SymmetricMechanism {
        SymmetricMechanism::new(2, 3f64.ln()).unwrap()
    }

    #[test]
    fn symmetric_eval_examples() {
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![50, 50]), ln3_binary()).unwrap();
        let e = loss.value_grad_hess(&[0.5, 0.5]);
        assert_abs_diff_eq!(e.hessian_diag[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.hessian_diag[1], 0.5, epsilon = 1e-15);
        assert_eq!(e.gradient[0], e.gradient[1]);

        let m = SymmetricMechanism::new(5, 0.8).unwrap();
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![7; 5]), m).unwrap();
        let g = loss.value_grad_hess(ProbVector::uniform(5).as_slice()).gradient;
        assert!(g.iter().all(|&x| x == g[0]));

        let flat = SymmetricMechanism::new(2, 0.0).unwrap();
        assert!(SymmetricLogLoss::new(SignalHistogram::from_counts(vec![1, 1]), flat).is_err());
        assert!(SymmetricLogLoss::new(SignalHistogram::from_counts(vec![0, 0]), ln3_binary()).is_err());
    }

    #[test]
    fn nonsymmetric_constant_form() {
        let ones = SignPattern::from_signs(&[1, 1, 1]).unwrap();
        let loss = NonSymLogLoss::new(&[NonSymUser::new(ones, 1).unwrap()], 0.25).unwrap();
        for p in [[1.0, 0.0, 0.0], [0.2, 0.3, 0.5]] {
            assert_abs_diff_eq!(loss.value(&p), -(0.75f64.ln()), epsilon = 1e-15);
        }
    }

    #[test]
    fn closed_form_examples() {
        let m = ln3_binary();
        match closed_form_symmetric(&SignalHistogram::from_counts(vec![6, 4]), &m).unwrap() {
            ClosedForm::Inside(p) => {
                assert_abs_diff_eq!(p[0], 0.7, epsilon = 1e-12);
                assert_abs_diff_eq!(p[1], 0.3, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        match closed_form_symmetric(&SignalHistogram::from_counts(vec![9, 1]), &m).unwrap() {
            ClosedForm::OutsideSimplex(p) => {
                assert_abs_diff_eq!(p[0], 1.3, epsilon = 1e-12);
                assert_abs_diff_eq!(p[1], -0.3, epsilon = 1e-12);
            }
            other => panic!("{other:?}"),
        }
        let m5 = SymmetricMechanism::new(5, 1.0).unwrap();
        match closed_form_symmetric(&SignalHistogram::from_counts(vec![3; 5]), &m5).unwrap() {
            ClosedForm::Inside(p) => assert!(tv_distance(p.as_slice(), ProbVector::uniform(5).as_slice()).unwrap() < 1e-12),
            other => panic!("{other:?}"),
        }
        let flat = SymmetricMechanism::new(2, 0.0).unwrap();
        assert!(matches!(
            closed_form_symmetric(&SignalHistogram::from_counts(vec![1, 1]), &flat),
            Err(Error::NonInvertible)
        ));
    }

    #[test]
    fn pgd_matches_closed_form_binary() {
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![6, 4]), ln3_binary()).unwrap();
        let r = pgd_solve(&loss, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.p_hat[0], 0.7, epsilon = 1e-4);
        assert!(r.loss_trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pgd_outside_simplex_lands_on_boundary() {
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![9, 1]), ln3_binary()).unwrap();
        let r = pgd_solve(&loss, &SolverConfig::default()).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.p_hat[0], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pgd_with_equality_constraint() {
        let m = SymmetricMechanism::new(3, 1.5).unwrap();
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![50, 30, 20]), m).unwrap();
        let cfg = SolverConfig {
            constraints: vec![AffineConstraint {
                a: vec![1.0, -1.0, 0.0],
                b: 0.0,
            }],
            ..SolverConfig::default()
        };
        let r = pgd_solve(&loss, &cfg).unwrap();
        assert!(r.converged, "{r:?}");
        assert_abs_diff_eq!(r.p_hat[0], r.p_hat[1], epsilon = 1e-8);
        assert_abs_diff_eq!(r.p_hat.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn strong_convexity_examples() {
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![10, 10]), ln3_binary()).unwrap();
        assert_abs_diff_eq!(strong_convexity_estimate(&loss), 0.125 / 0.5625, epsilon = 1e-12);
        let loss = SymmetricLogLoss::new(SignalHistogram::from_counts(vec![10, 0, 3]), SymmetricMechanism::new(3, 0.5).unwrap()).unwrap();
        assert_eq!(strong_convexity_estimate(&loss), 0.0);
    }

    #[test]
    fn invalid_config() {
        let cfg = SolverConfig {
            decay: 1.5,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
