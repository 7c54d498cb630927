use super::{Certificate, RuleResult, Tracker};
use crate::error::Result;
use crate::lp::{leximin, pareto_complete};
use crate::momdp::NormalizedMomdp;
use crate::polytope::OccupancyPolytope;

/// Maximizes total return under `rewards`, one table per kept agent. Pass the
/// normalized tables or the raw ones; the reported returns are normalized
/// either way.
pub fn utilitarian(norm: &NormalizedMomdp, poly: &OccupancyPolytope, rewards: &[&[f64]]) -> Result<RuleResult> {
    let tracker = Tracker::start();
    let d = pareto_complete(poly, &vec![f64::NEG_INFINITY; rewards.len()], rewards)?;
    Ok(tracker.finish("utilitarian", norm, d, Certificate::None, 0))
}

/// Leximin over `rewards`, one table per kept agent.
pub fn egalitarian(norm: &NormalizedMomdp, poly: &OccupancyPolytope, rewards: &[&[f64]]) -> Result<RuleResult> {
    let tracker = Tracker::start();
    let d = leximin(poly, rewards)?;
    Ok(tracker.finish("egalitarian", norm, d, Certificate::None, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::momdp::normalize_rewards;
    use crate::polytope::build_polytope;
    use crate::rules::reward_slices;

    #[test]
    fn simplex_baselines() {
        let m = instances::gen_simplex_instance(3).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = normalize_rewards(&m, &poly).unwrap();
        let rewards = reward_slices(&norm);
        let u = utilitarian(&norm, &poly, &rewards).unwrap();
        assert!((u.returns.iter().sum::<f64>() - 1.0).abs() < 1e-7);
        let e = egalitarian(&norm, &poly, &rewards).unwrap();
        for r in &e.returns {
            assert!((r - 1.0 / 3.0).abs() < 1e-6);
        }
    }
}
