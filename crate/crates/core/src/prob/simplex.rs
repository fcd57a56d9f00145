use super::ProbVector;

/// Euclidean projection onto the probability simplex (sort-and-threshold).
///
/// # Panics
/// On an empty or non-finite input.
pub fn simplex_project(v: &[f64]) -> ProbVector {
    ProbVector::new(project_raw(v)).expect("projection lies on the simplex")
}

pub(crate) fn project_raw(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "cannot project an empty vector");
    assert!(v.iter().all(|x| x.is_finite()), "non-finite entry in projection input");
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // clean up rounding so the sum is 1 to machine precision
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= s);
    out
}
