use super::{reward_slices, Certificate, RuleResult, Tracker, VetoCertificate};
use crate::error::{Error, Result};
use crate::lp::{pareto_complete, solve_lp, LinearObjective, SolveStatus};
use crate::momdp::{dot, NormalizedMomdp};
use crate::polytope::{Halfspace, OccupancyPolytope};
use crate::volume::{fraction_of, SampleCloud};

const BISECTION_STEPS: usize = 60;
/// Thresholds stay this far below the region's best return so the cut
/// region is never empty.
const TOP_MARGIN: f64 = 1e-9;

/// Sequential ε-proportional veto core.
///
/// Agents take turns (in `order`, default input order) vetoing the part of
/// the remaining region they like least, each removing a `δ = 1/n - ε/(n+1)`
/// fraction of the original polytope. The cloud is a uniform sample of the
/// whole polytope; the points still inside the current region are a uniform
/// sample of that region, so cut sizes are counted against the full cloud.
pub fn veto_core(
    norm: &NormalizedMomdp,
    poly: &OccupancyPolytope,
    cloud: &SampleCloud,
    epsilon: f64,
    order: Option<&[usize]>,
) -> Result<RuleResult> {
    let tracker = Tracker::start();
    let rewards = reward_slices(norm);
    let n = rewards.len();
    if !(epsilon > 0.0 && epsilon < 1.0 / n as f64) {
        return Err(Error::InvalidModel(format!("veto core needs ε in (0, 1/{n}), got {epsilon}")));
    }
    let order: Vec<usize> = match order {
        Some(o) => o.to_vec(),
        None => (0..n).collect(),
    };
    let mut sorted_order = order.clone();
    sorted_order.sort_unstable();
    if sorted_order != (0..n).collect::<Vec<_>>() {
        return Err(Error::InvalidModel("veto order must be a permutation of the agents".into()));
    }
    if cloud.is_empty() {
        return Err(Error::InvalidModel("empty sample cloud".into()));
    }
    let delta = 1.0 / n as f64 - epsilon / (n as f64 + 1.0);
    let total = cloud.len();
    let mut alive = vec![true; total];
    let mut rows: Vec<Halfspace> = Vec::new();
    let mut thresholds = vec![0.0; n];
    let mut measured_cuts = vec![0.0; n];
    let mut cut_std_errors = vec![0.0; n];
    for &i in &order {
        let r = rewards[i];
        let best = solve_lp(poly, &rows, &LinearObjective::maximize(r))?;
        let best = match best.status {
            SolveStatus::Optimal => best.objective_value,
            SolveStatus::Infeasible => return Err(Error::EmptyRegion),
            SolveStatus::IterationLimit => return Err(Error::IterationLimit),
        };
        let returns: Vec<f64> = cloud.points().map(|x| dot(x, r)).collect();
        let mut alive_returns: Vec<f64> = returns
            .iter()
            .zip(&alive)
            .filter(|(_, &a)| a)
            .map(|(&v, _)| v)
            .collect();
        alive_returns.sort_by(f64::total_cmp);
        let cut_at = |v: f64| alive_returns.partition_point(|&x| x < v) as f64 / total as f64;
        // `{x ∈ 𝒪_{i-1} : ⟨x, R_i⟩ ≥ v}` is nonempty exactly when v ≤ best,
        // so the bracket never leaves the feasible range.
        let (mut lo, mut hi) = (0.0f64.min(best), best - TOP_MARGIN);
        if cut_at(hi) < delta {
            lo = hi;
        } else {
            for _ in 0..BISECTION_STEPS {
                let mid = 0.5 * (lo + hi);
                if cut_at(mid) < delta {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
        }
        let v = lo;
        let hits: Vec<bool> = returns.iter().zip(&alive).map(|(&x, &a)| a && x < v).collect();
        let cut = fraction_of(&hits);
        thresholds[i] = v;
        measured_cuts[i] = cut.value;
        cut_std_errors[i] = cut.std_error;
        for (a, &x) in alive.iter_mut().zip(&returns) {
            *a = *a && x >= v;
        }
        rows.push(Halfspace::at_least(r, v));
    }
    let d = pareto_complete(poly, &thresholds, &rewards).map_err(|e| match e {
        Error::InfeasibleBounds => Error::EmptyRegion,
        other => other,
    })?;
    let certificate = Certificate::Veto(VetoCertificate {
        epsilon,
        delta,
        order,
        thresholds,
        measured_cuts,
        cut_std_errors,
    });
    Ok(tracker.finish("veto-core", norm, d, certificate, total))
}
