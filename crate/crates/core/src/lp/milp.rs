//! Branch-and-bound for indicator-style binary programs.
//!
//! Each binary `a_k` is tied to one row over the occupancy coordinates by the
//! linear activation constraint `coeffs_k · d ≥ threshold_k · a_k - 1e-9`.
//! With `a_k = 0` the row reads `coeffs_k · d ≥ -1e-9`, which the base
//! polytope must imply (true for normalized rewards), so no big-M constant is
//! needed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{
    bump_solves, read_solution, solve_lp, Cmp, LinearObjective, LpOutcome, Model, Sense, Solution,
    solve_options, SolveStatus,
};
use crate::error::{Error, Result};
use crate::momdp::dot;
use crate::polytope::{Halfspace, OccupancyPolytope};

const INTEGRALITY: f64 = 1e-6;
const BOUND_SLACK: f64 = 1e-9;
/// Allowed shortfall of an active indicator row.
pub const ACTIVATION_SLACK: f64 = 1e-9;

/// Binary `a` with activation `a = 1 ⇒ coeffs · d ≥ threshold` and objective
/// weight `weight`.
#[derive(Debug, Clone, PartialEq)]
pub struct Indicator {
    pub coeffs: Vec<f64>,
    pub threshold: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MilpConfig {
    pub max_binaries: usize,
    pub node_budget: usize,
}

impl Default for MilpConfig {
    fn default() -> Self {
        MilpConfig {
            max_binaries: 4096,
            node_budget: 1_000_000,
        }
    }
}

/// Maximize `Σ weight_k a_k + d_objective · d` over the polytope.
#[derive(Debug, Clone)]
pub struct MilpProgram<'a> {
    pub base: &'a OccupancyPolytope,
    pub extra_rows: Vec<Halfspace>,
    pub indicators: Vec<Indicator>,
    /// Pairs `(p, q)` enforcing `a_p ≥ a_q`.
    pub implications: Vec<(usize, usize)>,
    pub d_objective: Option<Vec<f64>>,
    pub config: MilpConfig,
}

impl<'a> MilpProgram<'a> {
    pub fn new(base: &'a OccupancyPolytope, indicators: Vec<Indicator>) -> Self {
        MilpProgram {
            base,
            extra_rows: Vec::new(),
            indicators,
            implications: Vec::new(),
            d_objective: None,
            config: MilpConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.base.num_vars();
        if self.indicators.len() > self.config.max_binaries {
            return Err(Error::SizeLimit {
                what: "binaries",
                size: self.indicators.len(),
                limit: self.config.max_binaries,
            });
        }
        if self.indicators.iter().any(|ind| ind.coeffs.len() != n)
            || self.d_objective.as_ref().is_some_and(|o| o.len() != n)
        {
            return Err(Error::InvalidModel("MILP row length != |S|·|A|".into()));
        }
        let k = self.indicators.len();
        if self.implications.iter().any(|&(p, q)| p >= k || q >= k) {
            return Err(Error::InvalidModel("implication references unknown binary".into()));
        }
        Ok(())
    }

    fn relaxation(&self) -> (Model, Vec<usize>) {
        let mut model = Model::over(self.base, Sense::Maximize);
        for row in &self.extra_rows {
            model.add_halfspace(row);
        }
        if let Some(obj) = &self.d_objective {
            model.set_d_objective(obj);
        }
        let binaries: Vec<usize> = self
            .indicators
            .iter()
            .map(|ind| model.add_var(ind.weight, (0.0, 1.0)))
            .collect();
        for (ind, &b) in self.indicators.iter().zip(&binaries) {
            model.add_at_least(&ind.coeffs, &[(b, -ind.threshold)], -ACTIVATION_SLACK);
        }
        for &(p, q) in &self.implications {
            model.add_row(vec![(binaries[p], 1.0), (binaries[q], -1.0)], Cmp::Ge, 0.0);
        }
        (model, binaries)
    }

    /// Objective of the assignment `bits` at occupancy `d`.
    fn score(&self, bits: &[bool], d: &[f64]) -> f64 {
        let binary: f64 = self
            .indicators
            .iter()
            .zip(bits)
            .filter(|(_, &on)| on)
            .map(|(ind, _)| ind.weight)
            .sum();
        binary + self.d_objective.as_ref().map_or(0.0, |o| dot(o, d))
    }

    /// Turns on every indicator whose row already holds at `d`, then repairs
    /// implications by switching off dependents.
    fn round_at(&self, d: &[f64]) -> Vec<bool> {
        let mut bits: Vec<bool> = self
            .indicators
            .iter()
            .map(|ind| ind.weight >= 0.0 && dot(&ind.coeffs, d) >= ind.threshold - ACTIVATION_SLACK)
            .collect();
        loop {
            let mut changed = false;
            for &(p, q) in &self.implications {
                if !bits[p] && bits[q] {
                    bits[q] = false;
                    changed = true;
                }
            }
            if !changed {
                return bits;
            }
        }
    }
}

struct Node {
    bound: f64,
    id: usize,
    fixings: Vec<(usize, bool)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap on bound; earlier nodes first among ties.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

struct Incumbent {
    value: f64,
    d: Vec<f64>,
    bits: Vec<bool>,
}

struct Search<'p, 'a> {
    program: &'p MilpProgram<'a>,
    model: Model,
    vars: Vec<microlp::Variable>,
    binaries: Vec<usize>,
    incumbent: Option<Incumbent>,
    nodes: usize,
    next_id: usize,
}

impl Search<'_, '_> {
    fn offer(&mut self, bits: Vec<bool>, d: &[f64]) {
        let value = self.program.score(&bits, d);
        if self.incumbent.as_ref().is_none_or(|inc| value > inc.value + BOUND_SLACK) {
            self.incumbent = Some(Incumbent {
                value,
                d: d.to_vec(),
                bits,
            });
        }
    }

    fn prunable(&self, bound: f64) -> bool {
        self.incumbent
            .as_ref()
            .is_some_and(|inc| bound <= inc.value + BOUND_SLACK)
    }

    fn count_node(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.program.config.node_budget {
            return Err(Error::MilpBudgetExhausted {
                nodes: self.program.config.node_budget,
            });
        }
        Ok(())
    }

    fn most_fractional(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &b) in self.binaries.iter().enumerate() {
            let frac = x[b].min(1.0 - x[b]);
            if frac > INTEGRALITY && best.is_none_or(|(_, f)| frac > f + 1e-12) {
                best = Some((k, frac));
            }
        }
        best.map(|(k, _)| k)
    }

    /// Solves the relaxation with `fixings` applied from scratch.
    fn solve_fresh(&self, fixings: &[(usize, bool)]) -> Result<Option<Relaxed>> {
        let mut model = self.model.clone();
        for &(k, on) in fixings {
            let v = if on { 1.0 } else { 0.0 };
            model.bounds[self.binaries[k]] = (v, v);
        }
        let (problem, _) = model.build();
        bump_solves();
        self.relaxed(problem.solve_with(solve_options()))
    }

    /// Warm-started child: fixes binary `k` on top of the parent's basis.
    fn solve_child(&self, parent: &microlp::Solution, k: usize, on: bool) -> Result<Option<Relaxed>> {
        bump_solves();
        let var = self.vars[self.binaries[k]];
        self.relaxed(parent.clone().fix_var(var, if on { 1.0 } else { 0.0 }))
    }

    fn relaxed(
        &self,
        result: std::result::Result<microlp::SolveOutcome, microlp::Error>,
    ) -> Result<Option<Relaxed>> {
        let sol = match result {
            Ok(outcome) => outcome.into_solution().map_err(|_| Error::IterationLimit)?,
            Err(microlp::Error::Infeasible) => return Ok(None),
            Err(e) => return Err(Error::Solver(e.to_string())),
        };
        match read_solution(&sol, &self.vars, &self.model) {
            LpOutcome::Optimal { x, objective } => Ok(Some((sol, x, objective))),
            _ => Ok(None),
        }
    }

    /// Depth-first dive from a solved node, pushing unexplored siblings.
    fn dive(
        &mut self,
        mut sol: microlp::Solution,
        mut x: Vec<f64>,
        mut bound: f64,
        mut fixings: Vec<(usize, bool)>,
        heap: &mut BinaryHeap<Node>,
    ) -> Result<()> {
        loop {
            let d = &x[..self.model.num_d];
            let rounded = self.program.round_at(d);
            let d = d.to_vec();
            self.offer(rounded, &d);
            if self.prunable(bound) {
                return Ok(());
            }
            let Some(k) = self.most_fractional(&x) else {
                let bits = self.binaries.iter().map(|&b| x[b] > 0.5).collect();
                self.offer(bits, &d);
                return Ok(());
            };
            let mut children = Vec::with_capacity(2);
            for on in [true, false] {
                self.count_node()?;
                if let Some((child, cx, cb)) = self.solve_child(&sol, k, on)? {
                    if !self.prunable(cb) {
                        children.push((on, child, cx, cb));
                    }
                }
            }
            // Continue with the better child (up-branch on ties); queue the other.
            children.sort_by(|a, b| b.3.total_cmp(&a.3));
            let mut it = children.into_iter();
            let Some((on, child, cx, cb)) = it.next() else {
                return Ok(());
            };
            if let Some((other_on, _, _, other_bound)) = it.next() {
                let mut other = fixings.clone();
                other.push((k, other_on));
                self.next_id += 1;
                heap.push(Node {
                    bound: other_bound,
                    id: self.next_id,
                    fixings: other,
                });
            }
            fixings.push((k, on));
            sol = child;
            x = cx;
            bound = cb;
        }
    }
}

type Relaxed = (microlp::Solution, Vec<f64>, f64);

/// Globally optimal solution by best-bound branch-and-bound with
/// depth-first dives. Deterministic for identical inputs.
pub fn milp_solve(p: &MilpProgram) -> Result<Solution> {
    p.validate()?;
    let (model, binaries) = p.relaxation();
    let (_, vars) = model.build();
    let mut search = Search {
        program: p,
        model,
        vars,
        binaries,
        incumbent: None,
        nodes: 0,
        next_id: 0,
    };
    let mut heap = BinaryHeap::new();
    search.count_node()?;
    if let Some((sol, x, bound)) = search.solve_fresh(&[])? {
        search.dive(sol, x, bound, Vec::new(), &mut heap)?;
    }
    while let Some(node) = heap.pop() {
        if search.prunable(node.bound) {
            continue;
        }
        search.count_node()?;
        if let Some((sol, x, bound)) = search.solve_fresh(&node.fixings)? {
            if !search.prunable(bound) {
                search.dive(sol, x, bound, node.fixings, &mut heap)?;
            }
        }
    }
    Ok(match search.incumbent {
        Some(inc) => Solution {
            status: SolveStatus::Optimal,
            objective_value: inc.value,
            point: Some(p.base.measure(inc.d)),
            binary_assignment: Some(inc.bits),
        },
        None => Solution {
            status: SolveStatus::Infeasible,
            point: None,
            objective_value: f64::NAN,
            binary_assignment: None,
        },
    })
}

/// Exhaustive oracle: solves one LP per binary assignment that respects the
/// implications. Limited to 20 binaries.
pub fn enumerate_binaries(p: &MilpProgram) -> Result<Solution> {
    p.validate()?;
    let k = p.indicators.len();
    if k > 20 {
        return Err(Error::SizeLimit {
            what: "binaries",
            size: k,
            limit: 20,
        });
    }
    let n = p.base.num_vars();
    let objective = LinearObjective::new(p.d_objective.clone().unwrap_or_else(|| vec![0.0; n]), Sense::Maximize);
    let mut best: Option<Solution> = None;
    for mask in 0u32..(1u32 << k) {
        let bits: Vec<bool> = (0..k).map(|j| mask >> j & 1 == 1).collect();
        if p.implications.iter().any(|&(a, b)| !bits[a] && bits[b]) {
            continue;
        }
        let mut rows = p.extra_rows.clone();
        for (ind, _) in p.indicators.iter().zip(&bits).filter(|(_, &on)| on) {
            rows.push(Halfspace::at_least(&ind.coeffs, ind.threshold - ACTIVATION_SLACK));
        }
        let sol = solve_lp(p.base, &rows, &objective)?;
        if let Some(d) = sol.point.filter(|_| sol.status == SolveStatus::Optimal) {
            let value = p.score(&bits, &d.values);
            if best.as_ref().is_none_or(|b| value > b.objective_value + BOUND_SLACK) {
                best = Some(Solution {
                    status: SolveStatus::Optimal,
                    objective_value: value,
                    point: Some(d),
                    binary_assignment: Some(bits),
                });
            }
        }
    }
    Ok(best.unwrap_or(Solution {
        status: SolveStatus::Infeasible,
        point: None,
        objective_value: f64::NAN,
        binary_assignment: None,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{self, Graph};
    use crate::polytope::build_polytope;

    #[test]
    fn all_binaries_forced_on() {
        let m = instances::gen_simplex_instance(3).unwrap();
        let poly = build_polytope(&m).unwrap();
        // Every agent can reach 0.3 simultaneously.
        let inds = (0..3)
            .map(|i| Indicator { coeffs: m.reward(i).to_vec(), threshold: 0.3, weight: 1.0 })
            .collect();
        let sol = milp_solve(&MilpProgram::new(&poly, inds)).unwrap();
        assert!((sol.objective_value - 3.0).abs() < 1e-12);
        assert_eq!(sol.binary_assignment.unwrap(), vec![true; 3]);
        assert!(poly.contains(sol.point.as_ref().unwrap()));
    }

    #[test]
    fn plurality_on_path_graph_matches_enumeration() {
        let g = Graph::new(3, vec![(0, 1), (1, 2)]).unwrap();
        let m = instances::gen_from_mis(&g).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = crate::momdp::normalize_rewards(&m, &poly).unwrap();
        let inds: Vec<Indicator> = (0..3)
            .map(|i| Indicator {
                coeffs: norm.momdp.reward(i).to_vec(),
                threshold: 1.0 - 1e-6,
                weight: 1.0,
            })
            .collect();
        let prog = MilpProgram::new(&poly, inds);
        let bb = milp_solve(&prog).unwrap();
        let ex = enumerate_binaries(&prog).unwrap();
        assert_eq!(bb.objective_value, 2.0);
        assert_eq!(ex.objective_value, 2.0);
        assert_eq!(bb.binary_assignment.unwrap(), vec![true, false, true]);
    }

    #[test]
    fn implications_are_respected() {
        let m = instances::gen_simplex_instance(2).unwrap();
        let poly = build_polytope(&m).unwrap();
        // a_1 is worth more but requires a_0, and both cannot hold.
        let inds = vec![
            Indicator { coeffs: m.reward(0).to_vec(), threshold: 0.8, weight: 1.0 },
            Indicator { coeffs: m.reward(1).to_vec(), threshold: 0.8, weight: 5.0 },
        ];
        let mut prog = MilpProgram::new(&poly, inds);
        prog.implications.push((0, 1));
        let sol = milp_solve(&prog).unwrap();
        assert_eq!(sol.objective_value, 1.0);
        assert_eq!(sol.binary_assignment.unwrap(), vec![true, false]);
        assert_eq!(enumerate_binaries(&prog).unwrap().objective_value, 1.0);
    }

    #[test]
    fn node_budget_is_surfaced() {
        let g = Graph::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let m = instances::gen_from_mis(&g).unwrap();
        let poly = build_polytope(&m).unwrap();
        let norm = crate::momdp::normalize_rewards(&m, &poly).unwrap();
        let inds = (0..4)
            .map(|i| Indicator { coeffs: norm.momdp.reward(i).to_vec(), threshold: 1.0 - 1e-6, weight: 1.0 })
            .collect();
        let mut prog = MilpProgram::new(&poly, inds);
        prog.config.node_budget = 0;
        assert!(matches!(milp_solve(&prog), Err(Error::MilpBudgetExhausted { nodes: 0 })));
        prog.config.max_binaries = 2;
        assert!(matches!(milp_solve(&prog), Err(Error::SizeLimit { .. })));
    }
}
