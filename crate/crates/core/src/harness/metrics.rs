use crate::error::{Error, Result};
use crate::momdp::{dot, Momdp, NormalizedMomdp, OccupancyMeasure};

/// `(J_i(d) - min J_i) / (max J_i - min J_i)` for every kept agent, using the
/// raw rewards of `original` and the normalization constants in `norm`.
pub fn normalized_returns(norm: &NormalizedMomdp, original: &Momdp, d: &OccupancyMeasure) -> Vec<f64> {
    norm.raw_rewards(original)
        .iter()
        .enumerate()
        .map(|(k, r)| norm.normalize_return(k, dot(r, &d.values)))
        .collect()
}

/// Gini index `Σ_i Σ_j |x_i - x_j| / (2 n Σ_i x_i)`.
pub fn gini(returns: &[f64]) -> Result<f64> {
    let total: f64 = returns.iter().sum();
    if total <= 1e-12 {
        return Err(Error::ZeroWelfare);
    }
    let mut diffs = 0.0;
    for &a in returns {
        for &b in returns {
            diffs += (a - b).abs();
        }
    }
    Ok(diffs / (2.0 * returns.len() as f64 * total))
}

/// Geometric mean; zero as soon as one return is zero (or negative).
pub fn nash_welfare(returns: &[f64]) -> f64 {
    if returns.is_empty() || returns.iter().any(|&x| x <= 0.0) {
        return 0.0;
    }
    let n = returns.len() as f64;
    (returns.iter().map(|x| x.ln()).sum::<f64>() / n).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::momdp::normalize_rewards;
    use crate::polytope::build_polytope;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(gini(&[0.0, 1.0]).unwrap(), 0.5);
        assert!((gini(&[1.0, 2.0, 3.0]).unwrap() - 4.0 / 18.0).abs() < 1e-15);
        assert!(matches!(gini(&[0.0, 0.0]), Err(Error::ZeroWelfare)));
    }

    #[test]
    fn nash_examples() {
        assert_eq!(nash_welfare(&[4.0, 1.0]), 2.0);
        assert!((nash_welfare(&[0.3; 4]) - 0.3).abs() < 1e-15);
        assert_eq!(nash_welfare(&[0.0, 0.7]), 0.0);
    }

    #[test]
    fn segment_midpoint_is_half_each() {
        let m = instances::gen_simplex_instance(2).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = normalize_rewards(&m, &poly).unwrap();
        let d = poly.measure(vec![0.5, 0.5]);
        assert_eq!(normalized_returns(&norm, &m, &d), vec![0.5, 0.5]);
        let vertex = poly.measure(vec![1.0, 0.0]);
        assert_eq!(normalized_returns(&norm, &m, &vertex), vec![1.0, 0.0]);
    }
}
