//! Instance generators and brute-force oracles.

mod reductions;
mod warehouse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use reductions::{
    brute_force_max2sat, brute_force_mis, gen_from_max2sat, gen_from_mis, literal_pair, random_cnf,
    random_graph, CnfFormula, Graph, Literal, BRUTE_FORCE_LIMIT,
};
pub use warehouse::{gen_warehouse, warehouse_fixture, ListMode, WarehouseParams, DEFAULT_MAX_VARS, INC, NORM, RISK};

use crate::error::{Error, Result};
use crate::momdp::{policy_to_occupancy, Criterion, Momdp, OccupancyMeasure, Policy};

/// Cap on the number of deterministic policies enumerated.
pub const POLICY_ENUMERATION_LIMIT: usize = 1_000_000;

/// One state, `ℓ` self-looping actions and `ℓ` agents, agent `i` rewarded
/// only for action `i`. Its occupancy polytope is the standard simplex.
pub fn gen_simplex_instance(l: usize) -> Result<Momdp> {
    if l < 2 {
        return Err(Error::InvalidModel("simplex instance needs ℓ ≥ 2".into()));
    }
    let rewards = (0..l)
        .map(|i| (0..l).map(|a| if a == i { 1.0 } else { 0.0 }).collect())
        .collect();
    Momdp::new(1, l, vec![1.0; l], rewards, Criterion::Average)
}

/// MOMDP whose transitions are uniform over states whatever the action.
pub fn fully_connected(
    num_states: usize,
    num_actions: usize,
    rewards: Vec<Vec<f64>>,
    criterion: Criterion,
) -> Result<Momdp> {
    let p = 1.0 / num_states as f64;
    Momdp::new(
        num_states,
        num_actions,
        vec![p; num_states * num_actions * num_states],
        rewards,
        criterion,
    )
}

/// Random MOMDP with strictly positive transitions and rewards in `[0, 1)`.
pub fn random_momdp(num_states: usize, num_actions: usize, num_agents: usize, seed: u64) -> Result<Momdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        let row: Vec<f64> = (0..num_states).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = row.iter().sum();
        let mut row: Vec<f64> = row.iter().map(|p| p / total).collect();
        // Put the rounding remainder on the last entry so the row sums to 1.
        let head: f64 = row[..num_states - 1].iter().sum();
        row[num_states - 1] = 1.0 - head;
        transitions.extend(row);
    }
    let rewards = (0..num_agents)
        .map(|_| (0..num_states * num_actions).map(|_| rng.random::<f64>()).collect())
        .collect();
    Momdp::new(num_states, num_actions, transitions, rewards, Criterion::Average)
}

/// Every deterministic policy with its occupancy measure, in lexicographic
/// order of the action vector (state 0 most significant).
pub fn enumerate_deterministic_policies(m: &Momdp) -> Result<Vec<(Policy, OccupancyMeasure)>> {
    let (ns, na) = (m.num_states(), m.num_actions());
    let count = (0..ns).try_fold(1usize, |acc, _| acc.checked_mul(na));
    let count = match count {
        Some(c) if c <= POLICY_ENUMERATION_LIMIT => c,
        _ => {
            return Err(Error::SizeLimit {
                what: "deterministic policies",
                size: count.unwrap_or(usize::MAX),
                limit: POLICY_ENUMERATION_LIMIT,
            })
        }
    };
    let mut out = Vec::with_capacity(count);
    let mut actions = vec![0usize; ns];
    for _ in 0..count {
        let policy = Policy::deterministic(na, &actions);
        let d = policy_to_occupancy(&policy, m)?;
        out.push((policy, d));
        for s in (0..ns).rev() {
            actions[s] += 1;
            if actions[s] < na {
                break;
            }
            actions[s] = 0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::build_polytope;

    #[test]
    fn simplex_instance_shape() {
        let m = gen_simplex_instance(2).unwrap();
        assert_eq!((m.num_states(), m.num_actions(), m.num_agents()), (1, 2, 2));
        assert_eq!(m.reward(0), &[1.0, 0.0]);
        assert!(gen_simplex_instance(1).is_err());
    }

    #[test]
    fn simplex_policies_are_vertices() {
        let m = gen_simplex_instance(3).unwrap();
        let all = enumerate_deterministic_policies(&m).unwrap();
        assert_eq!(all.len(), 3);
        for (k, (_, d)) in all.iter().enumerate() {
            let mut e = vec![0.0; 3];
            e[k] = 1.0;
            assert_eq!(d.values, e);
        }
    }

    #[test]
    fn random_momdp_is_valid_and_seeded() {
        let a = random_momdp(3, 2, 3, 4).unwrap();
        assert_eq!(a, random_momdp(3, 2, 3, 4).unwrap());
        assert!(build_polytope(&a).is_ok());
    }

    #[test]
    fn enumeration_limit() {
        let m = fully_connected(21, 2, vec![vec![0.0; 42]], Criterion::Average).unwrap();
        assert!(matches!(enumerate_deterministic_policies(&m), Err(Error::SizeLimit { .. })));
    }
}
