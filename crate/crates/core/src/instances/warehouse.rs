use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::momdp::{Criterion, Momdp};

/// Per-warehouse stage, in state-encoding order.
pub const NORM: usize = 0;
pub const RISK: usize = 1;
pub const INC: usize = 2;

const PENALTIES: [f64; 4] = [100.0, 150.0, 200.0, 250.0];

/// Default cap on `3^m · (m + 1)`; admits `m = 5`.
pub const DEFAULT_MAX_VARS: usize = 1500;

/// How agents' valued-warehouse lists are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListMode {
    /// Uniform over nonempty subsets of the warehouses.
    RandomSubset,
    /// Agent `i` values warehouse `i mod m` only.
    OnePerWarehouse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarehouseParams {
    pub m: usize,
    pub n: usize,
    /// Incident penalty `w_j` per warehouse.
    pub penalties: Vec<f64>,
    /// Penalty scale `ρ_i` per agent.
    pub scales: Vec<f64>,
    pub p_risk: Vec<f64>,
    pub p_inc: Vec<f64>,
    /// Valued warehouses `ℓ_i` per agent (0-based).
    pub lists: Vec<Vec<usize>>,
    pub criterion: Criterion,
    pub seed: u64,
    pub max_vars: usize,
}

impl WarehouseParams {
    /// Draws every random parameter from `seed`.
    ///
    /// `ρ_i` is uniform on `{0.25, 0.5, …, n}` and the stage probabilities are
    /// uniform on `[0.5, 0.8]`.
    pub fn sample(m: usize, n: usize, lists: ListMode, seed: u64) -> Result<Self> {
        if m == 0 || n == 0 {
            return Err(Error::InvalidModel("warehouse instance needs m ≥ 1 and n ≥ 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let penalties = (0..m).map(|_| *PENALTIES.choose(&mut rng).expect("nonempty")).collect();
        let grid: Vec<f64> = (1..=4 * n).map(|k| k as f64 * 0.25).collect();
        let scales = (0..n).map(|_| *grid.choose(&mut rng).expect("nonempty")).collect();
        let p_risk = (0..m).map(|_| rng.random_range(0.5..=0.8)).collect();
        let p_inc = (0..m).map(|_| rng.random_range(0.5..=0.8)).collect();
        let lists = (0..n)
            .map(|i| match lists {
                ListMode::OnePerWarehouse => vec![i % m],
                ListMode::RandomSubset => {
                    let mask = rng.random_range(1..(1u64 << m));
                    (0..m).filter(|j| mask >> j & 1 == 1).collect()
                }
            })
            .collect();
        Ok(WarehouseParams {
            m,
            n,
            penalties,
            scales,
            p_risk,
            p_inc,
            lists,
            criterion: Criterion::Average,
            seed,
            max_vars: DEFAULT_MAX_VARS,
        })
    }

    pub fn num_states(&self) -> usize {
        3usize.pow(self.m as u32)
    }

    /// Stage of warehouse `j` in state `s` (warehouse 0 least significant).
    pub fn stage(&self, s: usize, j: usize) -> usize {
        s / 3usize.pow(j as u32) % 3
    }
}

/// Distribution of warehouse `j`'s next stage.
fn stage_step(params: &WarehouseParams, j: usize, stage: usize, monitored: bool) -> [f64; 3] {
    if monitored {
        return [1.0, 0.0, 0.0];
    }
    match stage {
        NORM => [1.0 - params.p_risk[j], params.p_risk[j], 0.0],
        RISK => [0.0, 1.0 - params.p_inc[j], params.p_inc[j]],
        _ => [0.0, 0.0, 1.0],
    }
}

/// Moves the floating-point rounding remainder onto the largest entry until
/// the row sums to exactly 1.
fn close_row(row: &mut [f64]) {
    let Some(big) = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])) else {
        return;
    };
    for _ in 0..8 {
        let total: f64 = row.iter().sum();
        if total == 1.0 {
            return;
        }
        row[big] += 1.0 - total;
    }
}

/// Builds the warehouse-monitoring MOMDP.
///
/// Actions `0..m` monitor the matching warehouse; action `m` does nothing.
pub fn gen_warehouse(params: &WarehouseParams) -> Result<Momdp> {
    let m = params.m;
    if params.penalties.len() != m
        || params.p_risk.len() != m
        || params.p_inc.len() != m
        || params.scales.len() != params.n
        || params.lists.len() != params.n
        || params.lists.iter().flatten().any(|&j| j >= m)
    {
        return Err(Error::InvalidModel("warehouse parameter lengths are inconsistent".into()));
    }
    let size = 3usize
        .checked_pow(m as u32)
        .and_then(|s| s.checked_mul(m + 1))
        .unwrap_or(usize::MAX);
    if size > params.max_vars {
        return Err(Error::SizeLimit {
            what: "state-action pairs",
            size,
            limit: params.max_vars,
        });
    }
    let ns = params.num_states();
    let na = m + 1;
    let mut transitions = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let steps: Vec<[f64; 3]> = (0..m)
                .map(|j| stage_step(params, j, params.stage(s, j), a == j))
                .collect();
            let row = &mut transitions[(s * na + a) * ns..(s * na + a + 1) * ns];
            for (next, p) in row.iter_mut().enumerate() {
                *p = (0..m).map(|j| steps[j][params.stage(next, j)]).product();
            }
            close_row(row);
        }
    }
    let rewards = (0..params.n)
        .map(|i| {
            let mut table = Vec::with_capacity(ns * na);
            for s in 0..ns {
                for a in 0..na {
                    let monitoring = if a < m { 1.0 } else { 0.0 };
                    let incidents: f64 = params.lists[i]
                        .iter()
                        .filter(|&&j| params.stage(s, j) == INC && a != j)
                        .map(|&j| params.scales[i] * params.penalties[j])
                        .sum();
                    table.push(-monitoring - incidents);
                }
            }
            table
        })
        .collect();
    Momdp::new(ns, na, transitions, rewards, params.criterion.clone())
}

/// Small fixed warehouse instance (2 warehouses, 3 agents) used in tests.
pub fn warehouse_fixture() -> Momdp {
    let params = WarehouseParams::sample(2, 3, ListMode::RandomSubset, 2024).expect("valid parameters");
    gen_warehouse(&params).expect("fixture builds")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_warehouse() -> WarehouseParams {
        WarehouseParams {
            m: 1,
            n: 1,
            penalties: vec![100.0],
            scales: vec![1.0],
            p_risk: vec![0.6],
            p_inc: vec![0.7],
            lists: vec![vec![0]],
            criterion: Criterion::Average,
            seed: 0,
            max_vars: DEFAULT_MAX_VARS,
        }
    }

    #[test]
    fn single_warehouse_dynamics_and_rewards() {
        let m = gen_warehouse(&one_warehouse()).unwrap();
        assert_eq!((m.num_states(), m.num_actions()), (3, 2));
        // Monitoring a risky warehouse resets it.
        assert_eq!(m.transition_row(RISK, 0), &[1.0, 0.0, 0.0]);
        assert!((m.transition(NORM, 1, RISK) - 0.6).abs() < 1e-15);
        assert!((m.transition(RISK, 1, INC) - 0.7).abs() < 1e-15);
        assert_eq!(m.transition(INC, 1, INC), 1.0);
        // No-op during an incident costs the penalty; monitoring costs 1.
        assert_eq!(m.reward(0)[m.pair(INC, 1)], -100.0);
        assert_eq!(m.reward(0)[m.pair(INC, 0)], -1.0);
        assert_eq!(m.reward(0)[m.pair(NORM, 1)], 0.0);
    }

    #[test]
    fn rows_are_stochastic_and_sampling_is_seeded() {
        let a = WarehouseParams::sample(3, 4, ListMode::RandomSubset, 9).unwrap();
        assert_eq!(a, WarehouseParams::sample(3, 4, ListMode::RandomSubset, 9).unwrap());
        assert!(a.scales.iter().all(|r| (0.25..=4.0).contains(r) && (r * 4.0).fract() == 0.0));
        assert!(a.p_risk.iter().chain(&a.p_inc).all(|p| (0.5..=0.8).contains(p)));
        assert!(a.lists.iter().all(|l| !l.is_empty()));
        let m = gen_warehouse(&a).unwrap();
        assert_eq!((m.num_states(), m.num_actions()), (27, 4));
        for s in 0..27 {
            for act in 0..4 {
                assert_eq!(m.transition_row(s, act).iter().sum::<f64>(), 1.0);
            }
        }
    }

    #[test]
    fn rows_sum_to_exactly_one_across_seeds() {
        for seed in 0..300 {
            let m = gen_warehouse(&WarehouseParams::sample(3, 2, ListMode::RandomSubset, seed).unwrap()).unwrap();
            for s in 0..27 {
                for act in 0..4 {
                    assert_eq!(m.transition_row(s, act).iter().sum::<f64>(), 1.0);
                }
            }
        }
    }

    #[test]
    fn size_limit() {
        let mut p = WarehouseParams::sample(6, 2, ListMode::OnePerWarehouse, 0).unwrap();
        assert!(matches!(gen_warehouse(&p), Err(Error::SizeLimit { .. })));
        p.max_vars = 10_000;
        assert!(gen_warehouse(&p).is_ok());
    }
}
