use super::{welfare_objective, LinearObjective, LpOutcome, Model, Sense, Solution, SolveStatus};
use crate::error::{Error, Result};
use crate::momdp::{dot, OccupancyMeasure};
use crate::polytope::{Halfspace, OccupancyPolytope};

const FIX_SLACK: f64 = 1e-7;
const BOUND_SLACK: f64 = 1e-9;

fn check_rewards(poly: &OccupancyPolytope, rewards: &[&[f64]]) -> Result<()> {
    if rewards.iter().any(|r| r.len() != poly.num_vars()) {
        return Err(Error::InvalidModel("reward table length != |S|·|A|".into()));
    }
    Ok(())
}

fn expect_point(sol: Solution) -> Result<OccupancyMeasure> {
    match sol.status {
        SolveStatus::Optimal => Ok(sol.point.expect("optimal solution carries a point")),
        SolveStatus::Infeasible => Err(Error::InfeasibleBounds),
        SolveStatus::IterationLimit => Err(Error::IterationLimit),
    }
}

/// Maximizes total welfare `Σ_i R_i · d` subject to `R_i · d ≥ lower_bounds[i]`.
///
/// A bound of `-∞` leaves agent `i` unconstrained.
pub fn pareto_complete(
    poly: &OccupancyPolytope,
    lower_bounds: &[f64],
    rewards: &[&[f64]],
) -> Result<OccupancyMeasure> {
    pareto_complete_within(poly, &[], lower_bounds, rewards)
}

pub(crate) fn pareto_complete_within(
    poly: &OccupancyPolytope,
    extra_rows: &[Halfspace],
    lower_bounds: &[f64],
    rewards: &[&[f64]],
) -> Result<OccupancyMeasure> {
    check_rewards(poly, rewards)?;
    if lower_bounds.len() != rewards.len() {
        return Err(Error::InvalidModel("one lower bound per agent required".into()));
    }
    let mut rows = extra_rows.to_vec();
    for (r, &lb) in rewards.iter().zip(lower_bounds) {
        if lb > f64::NEG_INFINITY {
            rows.push(Halfspace::at_least(r, lb));
        }
    }
    let objective = LinearObjective::new(welfare_objective(rewards, poly.num_vars()), Sense::Maximize);
    expect_point(super::solve_lp(poly, &rows, &objective)?)
}

/// Leximin-optimal occupancy measure.
///
/// Repeatedly maximizes the worst return among agents not yet fixed. An agent
/// is fixed once its own best return under the current floors cannot exceed
/// the level found. The final point maximizes welfare with every agent held
/// at its fixed level.
pub fn leximin(poly: &OccupancyPolytope, rewards: &[&[f64]]) -> Result<OccupancyMeasure> {
    check_rewards(poly, rewards)?;
    let n = rewards.len();
    if n == 0 {
        return Err(Error::AllAgentsIndifferent);
    }
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    while fixed.iter().any(Option::is_none) {
        let mut model = Model::over(poly, Sense::Maximize);
        let t = model.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        for (r, f) in rewards.iter().zip(&fixed) {
            match f {
                Some(level) => model.add_at_least(r, &[], level - BOUND_SLACK),
                None => model.add_at_least(r, &[(t, -1.0)], 0.0),
            }
        }
        let level = match model.solve()? {
            LpOutcome::Optimal { x, .. } => x[t],
            LpOutcome::Infeasible => return Err(Error::InfeasibleBounds),
            LpOutcome::Limit => return Err(Error::IterationLimit),
        };
        let floors: Vec<Halfspace> = rewards
            .iter()
            .zip(&fixed)
            .map(|(r, f)| Halfspace::at_least(r, f.unwrap_or(level) - BOUND_SLACK))
            .collect();
        // Floors on unfixed agents at `level` hold for the whole optimal face.
        let mut newly = Vec::new();
        for i in 0..n {
            if fixed[i].is_some() {
                continue;
            }
            let best = super::solve_lp(poly, &floors, &LinearObjective::maximize(rewards[i]))?;
            let best = match best.status {
                SolveStatus::Optimal => best.objective_value,
                SolveStatus::Infeasible => return Err(Error::InfeasibleBounds),
                SolveStatus::IterationLimit => return Err(Error::IterationLimit),
            };
            if best <= level + FIX_SLACK {
                newly.push(i);
            }
        }
        if newly.is_empty() {
            // Numerical safety: fix the first unfixed agent.
            newly.push(fixed.iter().position(Option::is_none).expect("an unfixed agent"));
        }
        for i in newly {
            fixed[i] = Some(level);
        }
    }
    let bounds: Vec<f64> = fixed.iter().map(|f| f.expect("all fixed") - BOUND_SLACK).collect();
    pareto_complete(poly, &bounds, rewards)
}

/// Largest total-welfare increase available without lowering any agent's
/// return at `d`. Zero (up to solver noise) means `d` is Pareto optimal.
pub fn welfare_gain(poly: &OccupancyPolytope, d: &OccupancyMeasure, rewards: &[&[f64]]) -> Result<f64> {
    check_rewards(poly, rewards)?;
    let achieved: Vec<f64> = rewards.iter().map(|r| dot(r, &d.values)).collect();
    let bounds: Vec<f64> = achieved.iter().map(|v| v - BOUND_SLACK).collect();
    let best = pareto_complete(poly, &bounds, rewards)?;
    let before: f64 = achieved.iter().sum();
    let after: f64 = rewards.iter().map(|r| dot(r, &best.values)).sum();
    Ok((after - before).max(0.0))
}
