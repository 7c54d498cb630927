use super::{check_cdfs, reward_slices, ApprovalCertificate, Certificate, RuleResult, Tracker};
use crate::error::{Error, Result};
use crate::lp::{milp_solve, pareto_complete, Indicator, MilpConfig, MilpProgram, SolveStatus};
use crate::momdp::NormalizedMomdp;
use crate::polytope::OccupancyPolytope;
use crate::volume::{quantile_inverse, ReturnCdf};

/// Plurality approves returns within this of the normalized maximum 1.
pub const PLURALITY_SLACK: f64 = 1e-6;

/// α-approval: maximize the number of agents whose return reaches
/// `F_i^{-1}(α)`, then complete to a Pareto optimal policy that keeps every
/// approving agent at its threshold. With `α = 1` this is plurality and the
/// thresholds are the agents' maxima, so no cdfs are consulted.
///
/// Indifferent agents (dropped during normalization) attain their maximum
/// under every policy and are counted as approving.
pub fn alpha_approval(
    norm: &NormalizedMomdp,
    poly: &OccupancyPolytope,
    cdfs: &[ReturnCdf],
    alpha: f64,
    config: MilpConfig,
) -> Result<RuleResult> {
    let tracker = Tracker::start();
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidModel(format!("α must lie in (0, 1], got {alpha}")));
    }
    let rewards = reward_slices(norm);
    let plurality = alpha >= 1.0;
    let thresholds: Vec<f64> = if plurality {
        vec![1.0 - PLURALITY_SLACK; rewards.len()]
    } else {
        check_cdfs(norm, cdfs)?;
        cdfs.iter().map(|cdf| quantile_inverse(cdf, alpha)).collect()
    };
    let indicators = rewards
        .iter()
        .zip(&thresholds)
        .map(|(r, &t)| Indicator {
            coeffs: r.to_vec(),
            threshold: t,
            weight: 1.0,
        })
        .collect();
    let mut program = MilpProgram::new(poly, indicators);
    program.config = config;
    let sol = milp_solve(&program)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::InfeasibleModel);
    }
    let bits = sol.binary_assignment.expect("MILP solution carries its assignment");
    let bounds: Vec<f64> = bits
        .iter()
        .zip(&thresholds)
        .map(|(&on, &t)| if on { t - crate::lp::ACTIVATION_SLACK } else { f64::NEG_INFINITY })
        .collect();
    let d = pareto_complete(poly, &bounds, &rewards)?;
    let approving_agents: Vec<usize> = bits
        .iter()
        .zip(&norm.kept)
        .filter(|(&on, _)| on)
        .map(|(_, &i)| i)
        .collect();
    let score = approving_agents.len() + norm.dropped.len();
    let certificate = Certificate::Approval(ApprovalCertificate {
        alpha,
        approving_agents,
        indifferent_agents: norm.dropped.clone(),
        thresholds,
        score,
    });
    let samples = if plurality { 0 } else { cdfs.first().map_or(0, |c| c.samples) };
    let name = if plurality { "plurality" } else { "approval" };
    Ok(tracker.finish(name, norm, d, certificate, samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{self, CnfFormula, Graph, Literal};
    use crate::momdp::normalize_rewards;
    use crate::polytope::build_polytope;
    use crate::volume::{affine_hull, estimate_cdf, sample_uniform, CdfMethod};

    fn score(r: &RuleResult) -> usize {
        match &r.certificate {
            Certificate::Approval(c) => c.score,
            _ => panic!(),
        }
    }

    #[test]
    fn plurality_on_triangle_and_path() {
        for (g, want) in [
            (Graph::complete(3), 1),
            (Graph::new(3, vec![(0, 1), (1, 2)]).unwrap(), 2),
        ] {
            let m = instances::gen_from_mis(&g).unwrap();
            let poly = build_polytope(&m).unwrap();
            let norm = normalize_rewards(&m, &poly).unwrap();
            let r = alpha_approval(&norm, &poly, &[], 1.0, MilpConfig::default()).unwrap();
            assert_eq!(score(&r), want);
            assert_eq!(r.rule, "plurality");
        }
    }

    #[test]
    fn isolated_vertices_always_approve() {
        let g = Graph::new(4, vec![(0, 1)]).unwrap();
        let m = instances::gen_from_mis(&g).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = normalize_rewards(&m, &poly).unwrap();
        let r = alpha_approval(&norm, &poly, &[], 1.0, MilpConfig::default()).unwrap();
        assert_eq!(score(&r), 3);
    }

    #[test]
    fn two_clause_formula() {
        let f = CnfFormula::new(2, vec![[Literal::pos(0), Literal::pos(1)], [Literal::neg(0), Literal::pos(1)]]).unwrap();
        let m = instances::gen_from_max2sat(&f).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = normalize_rewards(&m, &poly).unwrap();
        let cloud = sample_uniform(&poly, &affine_hull(&poly).unwrap(), 20_000, 8).unwrap();
        let cdfs: Vec<ReturnCdf> = (0..norm.kept.len())
            .map(|k| estimate_cdf(&cloud, k, norm.momdp.reward(k), (0.0, 1.0), CdfMethod::Empirical))
            .collect();
        let r = alpha_approval(&norm, &poly, &cdfs, 0.95, MilpConfig::default()).unwrap();
        assert_eq!(score(&r), 2);
        // x2 = True: the policy picks action True in state 1.
        assert!(r.policy.prob(1, 0) > 0.5);
    }

    #[test]
    fn low_alpha_everyone_approves() {
        let m = instances::random_momdp(3, 3, 3, 17).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = normalize_rewards(&m, &poly).unwrap();
        let cloud = sample_uniform(&poly, &affine_hull(&poly).unwrap(), 20_000, 8).unwrap();
        let cdfs: Vec<ReturnCdf> = (0..norm.kept.len())
            .map(|k| estimate_cdf(&cloud, k, norm.momdp.reward(k), (0.0, 1.0), CdfMethod::Empirical))
            .collect();
        let r = alpha_approval(&norm, &poly, &cdfs, 0.3, MilpConfig::default()).unwrap();
        assert_eq!(score(&r), 3);
    }
}
