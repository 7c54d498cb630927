//! Multi-objective MDPs, occupancy measures, policies and reward normalization.
//!
//! State-action pairs are flattened row-major: pair `(s, a)` lives at index
//! `s * num_actions + a`. Transition tables are stored densely as
//! `P[s][a][s']` in the same order.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearObjective, SolveStatus};
use crate::polytope::OccupancyPolytope;
use crate::tol;

/// Reward criterion of a MOMDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Average,
    Discounted { gamma: f64, d_init: Vec<f64> },
}

/// A MOMDP: shared dynamics plus one reward table per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MomdpFile", into = "MomdpFile")]
pub struct Momdp {
    num_states: usize,
    num_actions: usize,
    transitions: Vec<f64>,
    rewards: Vec<Vec<f64>>,
    criterion: Criterion,
    agent_names: Option<Vec<String>>,
}

/// On-disk JSON layout of a [`Momdp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct MomdpFile {
    states: usize,
    actions: usize,
    criterion: Criterion,
    /// Indexed `[s][a][s']`.
    transitions: Vec<Vec<Vec<f64>>>,
    /// Indexed `[agent][s][a]`.
    rewards: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    agent_names: Option<Vec<String>>,
}

impl TryFrom<MomdpFile> for Momdp {
    type Error = Error;

    fn try_from(f: MomdpFile) -> Result<Self> {
        let (ns, na) = (f.states, f.actions);
        if f.transitions.len() != ns || f.transitions.iter().any(|row| row.len() != na) {
            return Err(Error::InvalidModel("transitions must be indexed [s][a][s']".into()));
        }
        let mut transitions = Vec::with_capacity(ns * na * ns);
        for row in f.transitions.iter().flatten() {
            if row.len() != ns {
                return Err(Error::InvalidModel("transition row length != states".into()));
            }
            transitions.extend_from_slice(row);
        }
        let mut rewards = Vec::with_capacity(f.rewards.len());
        for table in &f.rewards {
            if table.len() != ns || table.iter().any(|row| row.len() != na) {
                return Err(Error::InvalidModel("rewards must be indexed [agent][s][a]".into()));
            }
            rewards.push(table.iter().flatten().copied().collect());
        }
        let mut m = Momdp::new(ns, na, transitions, rewards, f.criterion)?;
        if let Some(names) = f.agent_names {
            m = m.with_agent_names(names)?;
        }
        Ok(m)
    }
}

impl From<Momdp> for MomdpFile {
    fn from(m: Momdp) -> Self {
        let (ns, na) = (m.num_states, m.num_actions);
        let transitions = (0..ns)
            .map(|s| {
                (0..na)
                    .map(|a| m.transition_row(s, a).to_vec())
                    .collect()
            })
            .collect();
        let rewards = m
            .rewards
            .iter()
            .map(|table| table.chunks(na).map(<[f64]>::to_vec).collect())
            .collect();
        MomdpFile {
            states: ns,
            actions: na,
            criterion: m.criterion,
            transitions,
            rewards,
            agent_names: m.agent_names,
        }
    }
}

impl Momdp {
    /// Builds and validates a MOMDP. `transitions` is flattened `[s][a][s']`,
    /// each reward table is flattened `[s][a]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<Vec<f64>>,
        criterion: Criterion,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("need at least one state and one action".into()));
        }
        let pairs = num_states * num_actions;
        if transitions.len() != pairs * num_states {
            return Err(Error::InvalidModel(format!(
                "transition table has {} entries, expected {}",
                transitions.len(),
                pairs * num_states
            )));
        }
        for (k, row) in transitions.chunks(num_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidModel(format!(
                    "negative or non-finite transition probability at (s={}, a={})",
                    k / num_actions,
                    k % num_actions
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > tol::DEGENERATE {
                return Err(Error::InvalidModel(format!(
                    "transition row (s={}, a={}) sums to {total}",
                    k / num_actions,
                    k % num_actions
                )));
            }
        }
        for (i, table) in rewards.iter().enumerate() {
            if table.len() != pairs {
                return Err(Error::InvalidModel(format!(
                    "reward table of agent {i} has {} entries, expected {pairs}",
                    table.len()
                )));
            }
            if table.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidModel(format!("non-finite reward for agent {i}")));
            }
        }
        if let Criterion::Discounted { gamma, d_init } = &criterion {
            if !(*gamma > 0.0 && *gamma < 1.0) {
                return Err(Error::InvalidModel(format!("discount {gamma} outside (0, 1)")));
            }
            if d_init.len() != num_states || d_init.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidModel("d_init must be a distribution over states".into()));
            }
            if (d_init.iter().sum::<f64>() - 1.0).abs() > tol::DEGENERATE {
                return Err(Error::InvalidModel("d_init does not sum to 1".into()));
            }
        }
        Ok(Momdp {
            num_states,
            num_actions,
            transitions,
            rewards,
            criterion,
            agent_names: None,
        })
    }

    pub fn with_agent_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.rewards.len() {
            return Err(Error::InvalidModel("agent_names length != number of agents".into()));
        }
        self.agent_names = Some(names);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_agents(&self) -> usize {
        self.rewards.len()
    }

    /// Number of state-action pairs.
    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn criterion(&self) -> &Criterion {
        &self.criterion
    }

    pub fn agent_names(&self) -> Option<&[String]> {
        self.agent_names.as_deref()
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    #[inline]
    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transitions[self.pair(s, a) * self.num_states + next]
    }

    /// Distribution over next states for the pair `(s, a)`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = self.pair(s, a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    /// Flattened `[s][a]` reward table of agent `i`.
    pub fn reward(&self, i: usize) -> &[f64] {
        &self.rewards[i]
    }

    pub fn rewards(&self) -> &[Vec<f64>] {
        &self.rewards
    }

    /// Same dynamics with a different set of reward tables.
    pub fn with_rewards(&self, rewards: Vec<Vec<f64>>) -> Result<Self> {
        let names = self.agent_names.clone().filter(|n| n.len() == rewards.len());
        let mut m = Momdp::new(
            self.num_states,
            self.num_actions,
            self.transitions.clone(),
            rewards,
            self.criterion.clone(),
        )?;
        m.agent_names = names;
        Ok(m)
    }

    /// Keeps only the listed agents, in the listed order.
    pub fn select_agents(&self, agents: &[usize]) -> Result<Self> {
        let rewards = agents.iter().map(|&i| self.rewards[i].clone()).collect();
        let mut m = self.with_rewards(rewards)?;
        m.agent_names = self
            .agent_names
            .as_ref()
            .map(|names| agents.iter().map(|&i| names[i].clone()).collect());
        Ok(m)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// A point of the occupancy polytope: visitation frequencies of `(s, a)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    pub num_states: usize,
    pub num_actions: usize,
    pub values: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(num_states: usize, num_actions: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), num_states * num_actions);
        OccupancyMeasure {
            num_states,
            num_actions,
            values,
        }
    }

    /// Occupancy of `(s, a)`, with tolerated LP slack clamped to zero.
    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a].max(0.0)
    }

    /// Total occupancy of state `s`.
    pub fn state_mass(&self, s: usize) -> f64 {
        (0..self.num_actions).map(|a| self.get(s, a)).sum()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// A stationary stochastic policy `π(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub num_states: usize,
    pub num_actions: usize,
    pub probs: Vec<f64>,
}

impl Policy {
    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != num_states * num_actions {
            return Err(Error::InvalidModel("policy table has the wrong shape".into()));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > tol::DEGENERATE {
                return Err(Error::InvalidModel(format!("policy row {s} is not a distribution")));
            }
        }
        Ok(Policy {
            num_states,
            num_actions,
            probs,
        })
    }

    /// Deterministic policy choosing `actions[s]` in state `s`.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * num_actions + a] = 1.0;
        }
        Policy {
            num_states: actions.len(),
            num_actions,
            probs,
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }
}

/// Recovers `π(a|s) = d(s,a) / Σ_a' d(s,a')`, uniform on unreachable states.
pub fn occupancy_to_policy(d: &OccupancyMeasure) -> Policy {
    let na = d.num_actions;
    let mut probs = Vec::with_capacity(d.values.len());
    for s in 0..d.num_states {
        let mass = d.state_mass(s);
        if mass > tol::OCCUPANCY_DENOMINATOR {
            probs.extend((0..na).map(|a| d.get(s, a) / mass));
        } else {
            probs.extend(std::iter::repeat_n(1.0 / na as f64, na));
        }
    }
    Policy {
        num_states: d.num_states,
        num_actions: na,
        probs,
    }
}

/// State-to-state transition matrix of the Markov chain induced by `p`.
fn induced_chain(p: &Policy, m: &Momdp) -> DMatrix<f64> {
    let ns = m.num_states();
    DMatrix::from_fn(ns, ns, |s, next| {
        (0..m.num_actions())
            .map(|a| p.prob(s, a) * m.transition(s, a, next))
            .sum()
    })
}

/// Computes the occupancy measure of policy `p`.
///
/// Discounted: solves `ρ = (1-γ) d_init + γ P_πᵀ ρ`. Average: the long-run
/// state distribution of the chain started from the uniform distribution,
/// obtained exactly from its recurrent-class decomposition.
pub fn policy_to_occupancy(p: &Policy, m: &Momdp) -> Result<OccupancyMeasure> {
    if p.num_states != m.num_states() || p.num_actions != m.num_actions() {
        return Err(Error::InvalidModel("policy shape does not match the MOMDP".into()));
    }
    let chain = induced_chain(p, m);
    let ns = m.num_states();
    let rho = match m.criterion() {
        Criterion::Discounted { gamma, d_init } => {
            let lhs = DMatrix::identity(ns, ns) - chain.transpose() * *gamma;
            let rhs = DVector::from_iterator(ns, d_init.iter().map(|x| x * (1.0 - gamma)));
            lhs.lu().solve(&rhs).ok_or(Error::SingularChain)?
        }
        Criterion::Average => uniform_start_stationary(&chain)?,
    };
    let values = (0..ns)
        .flat_map(|s| {
            let r = rho[s].max(0.0);
            (0..m.num_actions()).map(move |a| r * p.prob(s, a))
        })
        .collect();
    Ok(OccupancyMeasure::new(ns, m.num_actions(), values))
}

/// Cesàro-limit state distribution of `chain` started uniformly.
fn uniform_start_stationary(chain: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = chain.nrows();
    // reach[s][t]: t reachable from s (reflexive).
    let mut reach = vec![vec![false; n]; n];
    for (s, row) in reach.iter_mut().enumerate() {
        let mut stack = vec![s];
        row[s] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if chain[(u, v)] > 0.0 && !row[v] {
                    row[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    let recurrent: Vec<bool> = (0..n)
        .map(|s| (0..n).all(|t| !reach[s][t] || reach[t][s]))
        .collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut class_of = vec![usize::MAX; n];
    for s in 0..n {
        if recurrent[s] && class_of[s] == usize::MAX {
            let members: Vec<usize> = (0..n).filter(|&t| reach[s][t]).collect();
            for &t in &members {
                class_of[t] = classes.len();
            }
            classes.push(members);
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&s| !recurrent[s]).collect();

    // Absorption probabilities of transient states into each class.
    let absorption = if transient.is_empty() {
        DMatrix::zeros(0, classes.len())
    } else {
        let k = transient.len();
        let lhs = DMatrix::from_fn(k, k, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - chain[(transient[i], transient[j])]
        });
        let rhs = DMatrix::from_fn(k, classes.len(), |i, c| {
            classes[c].iter().map(|&t| chain[(transient[i], t)]).sum()
        });
        lhs.lu().solve(&rhs).ok_or(Error::SingularChain)?
    };

    let mut rho = DVector::zeros(n);
    for (c, members) in classes.iter().enumerate() {
        let weight = (members.len() as f64
            + (0..transient.len()).map(|i| absorption[(i, c)]).sum::<f64>())
            / n as f64;
        let k = members.len();
        // μ (I - P_CC) = 0 with the last equation replaced by Σ μ = 1.
        let mut lhs = DMatrix::from_fn(k, k, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            delta - chain[(members[j], members[i])]
        });
        let mut rhs = DVector::zeros(k);
        for j in 0..k {
            lhs[(k - 1, j)] = 1.0;
        }
        rhs[k - 1] = 1.0;
        let mu = lhs.lu().solve(&rhs).ok_or(Error::SingularChain)?;
        for (i, &s) in members.iter().enumerate() {
            rho[s] += weight * mu[i];
        }
    }
    Ok(rho)
}

/// Expected return `⟨d, r⟩`.
pub fn expected_return(d: &OccupancyMeasure, reward: &[f64]) -> f64 {
    dot(&d.values, reward)
}

/// Plain inner product.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalized rewards are snapped to this grid (2^-30) so that positive
/// affine transforms of the input produce bitwise-identical tables.
const NORMALIZATION_GRID: f64 = 1.0 / (1u64 << 30) as f64;

/// A MOMDP whose kept agents have returns spanning exactly `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMomdp {
    /// MOMDP restricted to the kept agents, with normalized rewards.
    pub momdp: Momdp,
    /// Original indices of the kept agents.
    pub kept: Vec<usize>,
    /// Original indices of agents indifferent between all policies.
    pub dropped: Vec<usize>,
    /// `min_π J_i` of each kept agent before normalization.
    pub min_return: Vec<f64>,
    /// `max_π J_i` of each kept agent before normalization.
    pub max_return: Vec<f64>,
}

impl NormalizedMomdp {
    /// Raw (unnormalized) reward tables of the kept agents.
    pub fn raw_rewards<'a>(&self, original: &'a Momdp) -> Vec<&'a [f64]> {
        self.kept.iter().map(|&i| original.reward(i)).collect()
    }

    /// Maps a raw return of kept agent `k` to the normalized scale.
    pub fn normalize_return(&self, k: usize, raw: f64) -> f64 {
        (raw - self.min_return[k]) / (self.max_return[k] - self.min_return[k])
    }
}

/// Rescales every agent so that `min_π J_i = 0` and `max_π J_i = 1`, dropping
/// agents whose return range is at most `1e-9`.
pub fn normalize_rewards(m: &Momdp, poly: &OccupancyPolytope) -> Result<NormalizedMomdp> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut min_return = Vec::new();
    let mut max_return = Vec::new();
    let mut tables = Vec::new();
    for i in 0..m.num_agents() {
        let r = m.reward(i);
        let lo = extreme_return(poly, r, lp::Sense::Minimize)?;
        let hi = extreme_return(poly, r, lp::Sense::Maximize)?;
        if hi - lo <= tol::DEGENERATE {
            dropped.push(i);
            continue;
        }
        let range = hi - lo;
        tables.push(
            r.iter()
                .map(|&x| ((x - lo) / range / NORMALIZATION_GRID).round() * NORMALIZATION_GRID)
                .collect(),
        );
        kept.push(i);
        min_return.push(lo);
        max_return.push(hi);
    }
    if kept.is_empty() {
        return Err(Error::AllAgentsIndifferent);
    }
    let mut momdp = m.with_rewards(tables)?;
    if let Some(names) = m.agent_names() {
        momdp = momdp.with_agent_names(kept.iter().map(|&i| names[i].clone()).collect())?;
    }
    Ok(NormalizedMomdp {
        momdp,
        kept,
        dropped,
        min_return,
        max_return,
    })
}

/// `min_d ⟨d, r⟩` or `max_d ⟨d, r⟩`, evaluated at the optimal vertex.
fn extreme_return(poly: &OccupancyPolytope, r: &[f64], sense: lp::Sense) -> Result<f64> {
    let sol = lp::solve_lp(poly, &[], &LinearObjective::new(r.to_vec(), sense))?;
    match (sol.status, sol.point) {
        (SolveStatus::Optimal, Some(d)) => Ok(dot(&d.values, r)),
        (SolveStatus::IterationLimit, _) => Err(Error::IterationLimit),
        _ => Err(Error::InfeasibleModel),
    }
}
