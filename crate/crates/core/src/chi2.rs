//! The chi-squared distribution: cdf via the regularized lower incomplete
//! gamma function, quantile by bracketed bisection with a Newton polish.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::error::{Error, Result};

const MAX_ITERS: usize = 10_000;
const REL_EPS: f64 = 1e-15;

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEFFS[0];
    let t = x + 7.5;
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x.is_infinite() {
        return 1.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x)
    } else {
        1.0 - gamma_q_continued_fraction(a, x)
    }
}

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITERS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * REL_EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITERS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < REL_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

fn check_dof(k: u32) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("chi-squared needs at least one degree of freedom".into()));
    }
    Ok(())
}

pub fn chi2_cdf(k: u32, x: f64) -> Result<f64> {
    check_dof(k)?;
    if x.is_nan() {
        return Err(Error::InvalidParameter("x is NaN".into()));
    }
    Ok(gamma_p(k as f64 / 2.0, x.max(0.0) / 2.0))
}

pub fn chi2_pdf(k: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return if k == 2 { 0.5 } else { 0.0 };
    }
    let a = k as f64 / 2.0;
    ((a - 1.0) * x.ln() - x / 2.0 - a * std::f64::consts::LN_2 - ln_gamma(a)).exp()
}

pub fn chi2_quantile(k: u32, q: f64) -> Result<f64> {
    check_dof(k)?;
    if !(0.0..1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "quantile probability must lie in [0, 1), got {q}"
        )));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = k as f64 + 1.0;
    while chi2_cdf(k, hi)? < q {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(k, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi.max(1.0) {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let f = chi2_cdf(k, x)? - q;
        let d = chi2_pdf(k, x);
        if d <= 0.0 {
            break;
        }
        let next = x - f / d;
        if next <= lo || next >= hi {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// A chi-squared distribution with a fixed number of degrees of freedom and a
/// memo of quantiles already computed.
#[derive(Debug)]
pub struct Chi2Table {
    dof: u32,
    cache: Mutex<HashMap<u64, f64>>,
}

impl Chi2Table {
    pub fn new(dof: u32) -> Result<Self> {
        check_dof(dof)?;
        Ok(Chi2Table {
            dof,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dof(&self) -> u32 {
        self.dof
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        chi2_cdf(self.dof, x)
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        let key = q.to_bits();
        if let Some(&v) = self.cache.lock().expect("poisoned").get(&key) {
            return Ok(v);
        }
        let v = chi2_quantile(self.dof, q)?;
        self.cache.lock().expect("poisoned").insert(key, v);
        Ok(v)
    }
}
