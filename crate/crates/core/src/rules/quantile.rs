use super::{check_cdfs, grid_levels, reward_slices, Certificate, QuantileCertificate, RuleResult, Tracker};
use crate::error::{Error, Result};
use crate::lp::{pareto_complete, solve_lp, LinearObjective, SolveStatus};
use crate::momdp::NormalizedMomdp;
use crate::polytope::{Halfspace, OccupancyPolytope};
use crate::volume::{quantile_inverse, ReturnCdf};

/// Whether some policy gives every agent at least `F_i^{-1}(q)`.
pub fn quantile_feasible(
    norm: &NormalizedMomdp,
    poly: &OccupancyPolytope,
    cdfs: &[ReturnCdf],
    q: f64,
) -> Result<bool> {
    check_cdfs(norm, cdfs)?;
    let rewards = reward_slices(norm);
    let rows: Vec<Halfspace> = rewards
        .iter()
        .zip(cdfs)
        .map(|(r, cdf)| Halfspace::at_least(r, quantile_inverse(cdf, q)))
        .collect();
    let probe = solve_lp(poly, &rows, &LinearObjective::maximize(&vec![0.0; poly.num_vars()]))?;
    match probe.status {
        SolveStatus::Optimal => Ok(true),
        SolveStatus::Infeasible => Ok(false),
        SolveStatus::IterationLimit => Err(Error::IterationLimit),
    }
}

/// ε-max-quantile fairness: the largest grid level `q = kε` at which every
/// agent can simultaneously reach its `q`-quantile return, found by bisection
/// over `k ∈ {0, …, 1/ε}`, followed by Pareto completion.
pub fn max_quantile(
    norm: &NormalizedMomdp,
    poly: &OccupancyPolytope,
    cdfs: &[ReturnCdf],
    epsilon: f64,
) -> Result<RuleResult> {
    let tracker = Tracker::start();
    check_cdfs(norm, cdfs)?;
    let levels = grid_levels(epsilon)?;
    let q_of = |k: usize| k as f64 / levels as f64;
    let feasible = |k: usize| quantile_feasible(norm, poly, cdfs, q_of(k));
    let (mut lo, mut hi) = (0usize, levels);
    let mut infeasible_at = None;
    if !feasible(hi)? {
        infeasible_at = Some(hi);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if feasible(mid)? {
                lo = mid;
            } else {
                hi = mid;
                infeasible_at = Some(mid);
            }
        }
    } else {
        lo = hi;
    }
    let q_star = q_of(lo);
    let thresholds: Vec<f64> = cdfs.iter().map(|cdf| quantile_inverse(cdf, q_star)).collect();
    let d = pareto_complete(poly, &thresholds, &reward_slices(norm))?;
    let samples = cdfs.first().map_or(0, |c| c.samples);
    let certificate = Certificate::Quantile(QuantileCertificate {
        epsilon,
        q_star,
        thresholds,
        infeasible_at: infeasible_at.map(q_of),
    });
    Ok(tracker.finish("max-quantile", norm, d, certificate, samples))
}
