use crate::error::{Error, Result};

fn check_dims(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    Ok(())
}

/// Half the L1 distance. Accepts arbitrary real vectors, not just distributions.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dims(p, q)?;
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// `sum_x (p(x) - q(x))^2 / p(x)`; the first argument is the denominator.
///
/// Terms with `p(x) = q(x) = 0` contribute nothing; a zero denominator with a
/// nonzero numerator gives `+inf`.
pub fn chi2_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_dims(p, q)?;
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let diff = a - b;
        if diff == 0.0 {
            continue;
        }
        if a == 0.0 {
            return Ok(f64::INFINITY);
        }
        total += diff * diff / a;
    }
    Ok(total)
}

/// The 2/3 quasi-norm `(sum |v_i|^{2/3})^{3/2}`.
pub fn two_thirds_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs().powf(2.0 / 3.0)).sum::<f64>().powf(1.5)
}
