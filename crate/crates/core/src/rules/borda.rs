use super::{
    check_cdfs, grid_levels, reward_slices, BordaCertificate, Certificate, ConcaveCertificate, RuleResult,
    Tracker,
};
use crate::error::{Error, Result};
use crate::lp::{
    milp_solve, pareto_complete, solve_lp, Cmp, Indicator, LinearObjective, LpOutcome,
    MilpConfig, MilpProgram, Model, Sense, SolveStatus,
};
use crate::momdp::{dot, NormalizedMomdp};
use crate::polytope::{Halfspace, OccupancyPolytope};
use crate::volume::{mode_estimate, ReturnCdf};

/// Knots of the concave surrogate on `[mode, 1]`.
pub const CONCAVE_KNOTS: usize = 20;

/// Continuous Borda score `Σ_i F_i(J_i)`.
pub fn borda_score(cdfs: &[ReturnCdf], returns: &[f64]) -> f64 {
    cdfs.iter().zip(returns).map(|(cdf, &j)| cdf.eval(j)).sum()
}

/// ε-Borda: one binary per agent and return level `kε`, worth the cdf mass
/// `F_i(kε) - F_i((k-1)ε)` and active only if `J_i ≥ kε`. Levels of an agent
/// are chained `a_{i,k} ≥ a_{i,k+1}`. The optimum is completed with every
/// agent held at its achieved return.
pub fn borda_milp(
    norm: &NormalizedMomdp,
    poly: &OccupancyPolytope,
    cdfs: &[ReturnCdf],
    epsilon: f64,
    config: MilpConfig,
) -> Result<RuleResult> {
    let tracker = Tracker::start();
    check_cdfs(norm, cdfs)?;
    let levels = grid_levels(epsilon)?;
    let rewards = reward_slices(norm);
    let n = rewards.len();
    let level = |k: usize| k as f64 / levels as f64;
    let weights: Vec<Vec<f64>> = cdfs
        .iter()
        .map(|cdf| (1..=levels).map(|k| cdf.eval(level(k)) - cdf.eval(level(k - 1))).collect())
        .collect();
    let mut indicators = Vec::with_capacity(n * levels);
    let mut implications = Vec::with_capacity(n * levels);
    for (i, r) in rewards.iter().enumerate() {
        for k in 1..=levels {
            indicators.push(Indicator {
                coeffs: r.to_vec(),
                threshold: level(k),
                weight: weights[i][k - 1],
            });
            if k < levels {
                let at = i * levels + k - 1;
                implications.push((at, at + 1));
            }
        }
    }
    let mut program = MilpProgram::new(poly, indicators);
    program.implications = implications;
    program.config = config;
    let sol = milp_solve(&program)?;
    let (Some(point), Some(bits)) = (sol.point, sol.binary_assignment) else {
        return Err(Error::InfeasibleModel);
    };
    let achieved: Vec<f64> = rewards.iter().map(|r| dot(r, &point.values)).collect();
    let d = complete_at(poly, &achieved, &rewards)?;
    let level_indicators = bits.chunks(levels).map(<[bool]>::to_vec).collect();
    let certificate = Certificate::Borda(BordaCertificate {
        epsilon,
        level_indicators,
        rounded_score: sol.objective_value,
        weights,
    });
    Ok(tracker.finish("borda-milp", norm, d, certificate, cdfs.first().map_or(0, |c| c.samples)))
}

/// Pareto completion keeping every agent at (just below) `achieved`.
fn complete_at(
    poly: &OccupancyPolytope,
    achieved: &[f64],
    rewards: &[&[f64]],
) -> Result<crate::OccupancyMeasure> {
    let bounds: Vec<f64> = achieved.iter().map(|v| v - crate::lp::ACTIVATION_SLACK).collect();
    pareto_complete(poly, &bounds, rewards)
}

/// Upper concave envelope of points sorted by `x` (monotone chain).
fn upper_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    hull
}

/// Borda over the region where every agent is at or above its density mode.
///
/// There each `F_i` is concave (the density is unimodal), so the objective is
/// replaced by the upper concave envelope of `F_i` sampled at 20 knots on
/// `[mode_i, 1]` and maximized with one LP over hypograph variables.
pub fn borda_concave(
    norm: &NormalizedMomdp,
    poly: &OccupancyPolytope,
    cdfs: &[ReturnCdf],
) -> Result<RuleResult> {
    let tracker = Tracker::start();
    check_cdfs(norm, cdfs)?;
    let rewards = reward_slices(norm);
    let modes: Vec<f64> = cdfs.iter().map(mode_estimate).collect();
    let floors: Vec<Halfspace> = rewards
        .iter()
        .zip(&modes)
        .map(|(r, &m)| Halfspace::at_least(r, m))
        .collect();
    let probe = solve_lp(poly, &floors, &LinearObjective::maximize(&vec![0.0; poly.num_vars()]))?;
    match probe.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::ConcaveRegionEmpty),
        SolveStatus::IterationLimit => return Err(Error::IterationLimit),
    }
    let mut model = Model::over(poly, Sense::Maximize);
    for h in &floors {
        model.add_halfspace(h);
    }
    for ((r, cdf), &mode) in rewards.iter().zip(cdfs).zip(&modes) {
        let knots: Vec<(f64, f64)> = (0..CONCAVE_KNOTS)
            .map(|j| {
                let v = mode + (1.0 - mode) * j as f64 / (CONCAVE_KNOTS - 1) as f64;
                (v, cdf.eval(v))
            })
            .collect();
        let hull = upper_hull(&knots);
        let h = model.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        if hull.len() < 2 {
            model.add_row(vec![(h, 1.0)], Cmp::Le, hull[0].1);
            continue;
        }
        for w in hull.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x1 - x0 <= 1e-12 {
                continue;
            }
            let slope = (y1 - y0) / (x1 - x0);
            // h ≤ y0 + slope (⟨d, R⟩ - x0)
            let mut terms = vec![(h, 1.0)];
            terms.extend(r.iter().enumerate().filter(|(_, &c)| c != 0.0).map(|(j, &c)| (j, -slope * c)));
            model.add_row(terms, Cmp::Le, y0 - slope * x0);
        }
    }
    let (x, surrogate_score) = match model.solve()? {
        LpOutcome::Optimal { x, objective } => (x, objective),
        LpOutcome::Infeasible => return Err(Error::ConcaveRegionEmpty),
        LpOutcome::Limit => return Err(Error::IterationLimit),
    };
    let achieved: Vec<f64> = rewards.iter().map(|r| dot(r, &x[..poly.num_vars()])).collect();
    let d = complete_at(poly, &achieved, &rewards)?;
    let certificate = Certificate::Concave(ConcaveCertificate { modes, surrogate_score });
    Ok(tracker.finish("borda-concave", norm, d, certificate, cdfs.first().map_or(0, |c| c.samples)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::momdp::normalize_rewards;
    use crate::polytope::build_polytope;
    use crate::volume::{affine_hull, estimate_cdf, sample_uniform, CdfMethod};

    fn setup(m: &crate::Momdp, n: usize) -> (NormalizedMomdp, OccupancyPolytope, Vec<ReturnCdf>) {
        let poly = build_polytope(m).unwrap();
        let norm = normalize_rewards(m, &poly).unwrap();
        let cloud = sample_uniform(&poly, &affine_hull(&poly).unwrap(), n, 21).unwrap();
        let cdfs = (0..norm.kept.len())
            .map(|k| estimate_cdf(&cloud, k, norm.momdp.reward(k), (0.0, 1.0), CdfMethod::Empirical))
            .collect();
        (norm, poly, cdfs)
    }

    #[test]
    fn upper_hull_drops_interior_points() {
        let pts = [(0.0, 0.0), (0.5, 0.2), (1.0, 1.0), (1.5, 1.2), (2.0, 1.3)];
        let hull = upper_hull(&pts);
        assert_eq!(hull.first(), Some(&(0.0, 0.0)));
        assert!(!hull.contains(&(0.5, 0.2)));
        assert!(hull.contains(&(1.0, 1.0)));
    }

    #[test]
    fn segment_scores_tie_at_one() {
        let (norm, poly, cdfs) = setup(&instances::gen_simplex_instance(2).unwrap(), 50_000);
        let r = borda_milp(&norm, &poly, &cdfs, 0.05, MilpConfig::default()).unwrap();
        assert!((borda_score(&cdfs, &r.returns) - 1.0).abs() < 0.03);
        let Certificate::Borda(c) = &r.certificate else { panic!() };
        for row in &c.level_indicators {
            assert!(row.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn lone_agent_reaches_its_optimum() {
        let m = instances::fully_connected(2, 2, vec![vec![0.3, 0.9, 0.1, 0.4]], crate::Criterion::Average).unwrap();
        let (norm, poly, cdfs) = setup(&m, 20_000);
        let r = borda_milp(&norm, &poly, &cdfs, 0.05, MilpConfig::default()).unwrap();
        assert!((r.returns[0] - 1.0).abs() < 1e-7);
        let Certificate::Borda(c) = &r.certificate else { panic!() };
        assert!(c.level_indicators[0].iter().all(|&a| a));
        let r = borda_concave(&norm, &poly, &cdfs).unwrap();
        assert!((r.returns[0] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn concave_region_can_be_empty() {
        // Two opposed agents on a segment whose densities both peak at 0.8:
        // no point gives both a return of 0.8.
        let m = instances::gen_simplex_instance(2).unwrap();
        let (norm, poly, _) = setup(&m, 100);
        let peaked = |agent| {
            let mut sorted: Vec<f64> = (0..1000).map(|k| 0.78 + 0.04 * k as f64 / 1000.0).collect();
            sorted.insert(0, 0.0);
            sorted.push(1.0);
            ReturnCdf {
                agent,
                kind: crate::volume::CdfKind::Empirical { sorted },
                support: (0.0, 1.0),
                samples: 1002,
            }
        };
        let cdfs = vec![peaked(0), peaked(1)];
        assert!(matches!(borda_concave(&norm, &poly, &cdfs), Err(Error::ConcaveRegionEmpty)));
    }
}
