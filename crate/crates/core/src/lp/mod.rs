//! Linear programming over the occupancy polytope.
//!
//! The simplex solves themselves are delegated to `microlp`; this layer owns
//! the model construction, the statuses reported to callers, and the
//! higher-level programs built from LPs (branch-and-bound, leximin, Pareto
//! completion).

mod milp;
mod welfare;

use std::cell::Cell;
use std::fmt::Write as _;
use std::time::Duration;

use microlp::{ComparisonOp, OptimizationDirection, Problem, SolveOptions, Variable};
use serde::{Deserialize, Serialize};

pub use milp::{enumerate_binaries, milp_solve, Indicator, MilpConfig, MilpProgram, ACTIVATION_SLACK};
pub use welfare::{leximin, pareto_complete, welfare_gain};

use crate::error::{Error, Result};
use crate::momdp::{dot, OccupancyMeasure};
use crate::polytope::{Halfspace, OccupancyPolytope};

/// Wall-clock cap for a single LP solve; hitting it reports `IterationLimit`.
pub const LP_TIME_LIMIT: Duration = Duration::from_secs(120);

thread_local! {
    static SOLVES: Cell<usize> = const { Cell::new(0) };
}

/// Number of LP solves performed on the current thread so far.
pub fn lp_solve_count() -> usize {
    SOLVES.with(Cell::get)
}

pub(crate) fn solve_options() -> SolveOptions {
    let mut options = SolveOptions::default();
    options.time_limit = Some(LP_TIME_LIMIT);
    options
}

fn bump_solves() {
    SOLVES.with(|c| c.set(c.get() + 1));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Maximize,
    Minimize,
}

/// Linear objective over the `(s, a)` coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObjective {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
}

impl LinearObjective {
    pub fn new(coeffs: Vec<f64>, sense: Sense) -> Self {
        LinearObjective { coeffs, sense }
    }

    pub fn maximize(coeffs: &[f64]) -> Self {
        Self::new(coeffs.to_vec(), Sense::Maximize)
    }

    pub fn minimize(coeffs: &[f64]) -> Self {
        Self::new(coeffs.to_vec(), Sense::Minimize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

/// Result of an LP or MILP solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// Optimal occupancy measure; `None` unless `status` is `Optimal`.
    pub point: Option<OccupancyMeasure>,
    pub objective_value: f64,
    /// Indicator values for MILP solves.
    pub binary_assignment: Option<Vec<bool>>,
}

impl Solution {
    fn without_point(status: SolveStatus) -> Self {
        Solution {
            status,
            point: None,
            objective_value: f64::NAN,
            binary_assignment: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Maximizes or minimizes `obj` over `poly ∩ extra_rows`.
pub fn solve_lp(
    poly: &OccupancyPolytope,
    extra_rows: &[Halfspace],
    obj: &LinearObjective,
) -> Result<Solution> {
    if obj.coeffs.len() != poly.num_vars() {
        return Err(Error::InvalidModel("objective length != |S|·|A|".into()));
    }
    let mut model = Model::over(poly, obj.sense);
    for row in extra_rows {
        model.add_halfspace(row);
    }
    model.set_d_objective(&obj.coeffs);
    Ok(match model.solve()? {
        LpOutcome::Optimal { x, .. } => {
            let values = x[..poly.num_vars()].to_vec();
            Solution {
                status: SolveStatus::Optimal,
                objective_value: dot(&values, &obj.coeffs),
                point: Some(poly.measure(values)),
                binary_assignment: None,
            }
        }
        LpOutcome::Infeasible => Solution::without_point(SolveStatus::Infeasible),
        LpOutcome::Limit => Solution::without_point(SolveStatus::IterationLimit),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub(crate) struct Row {
    pub terms: Vec<(usize, f64)>,
    pub cmp: Cmp,
    pub rhs: f64,
}

pub(crate) enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Limit,
}

/// LP over the polytope coordinates plus auxiliary columns appended after them.
#[derive(Debug, Clone)]
pub(crate) struct Model {
    pub sense: Sense,
    pub num_d: usize,
    pub obj: Vec<f64>,
    pub bounds: Vec<(f64, f64)>,
    pub rows: Vec<Row>,
}

impl Model {
    pub fn over(poly: &OccupancyPolytope, sense: Sense) -> Self {
        let n = poly.num_vars();
        let mut model = Model {
            sense,
            num_d: n,
            obj: vec![0.0; n],
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
            rows: Vec::new(),
        };
        for h in poly.ineq() {
            model.add_halfspace(h);
        }
        for e in poly.eq() {
            model.add_row(sparse(&e.coeffs), Cmp::Eq, e.value);
        }
        model
    }

    pub fn add_var(&mut self, obj: f64, bounds: (f64, f64)) -> usize {
        self.obj.push(obj);
        self.bounds.push(bounds);
        self.obj.len() - 1
    }

    pub fn add_row(&mut self, terms: Vec<(usize, f64)>, cmp: Cmp, rhs: f64) {
        self.rows.push(Row { terms, cmp, rhs });
    }

    /// Adds `h`, turning single-variable rows into bounds.
    pub fn add_halfspace(&mut self, h: &Halfspace) {
        let terms = sparse(&h.coeffs);
        if let [(j, c)] = terms[..] {
            let limit = h.bound / c + 0.0;
            let (lo, hi) = &mut self.bounds[j];
            if c > 0.0 {
                *hi = hi.min(limit);
            } else {
                *lo = lo.max(limit);
            }
        } else {
            self.add_row(terms, Cmp::Le, h.bound);
        }
    }

    /// `coeffs · d + Σ extra ≥ value`.
    pub fn add_at_least(&mut self, coeffs: &[f64], extra: &[(usize, f64)], value: f64) {
        let mut terms = sparse(coeffs);
        terms.extend_from_slice(extra);
        self.add_row(terms, Cmp::Ge, value);
    }

    pub fn set_d_objective(&mut self, coeffs: &[f64]) {
        self.obj[..self.num_d].copy_from_slice(coeffs);
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        dot(&self.obj, x)
    }

    pub fn build(&self) -> (Problem, Vec<Variable>) {
        let direction = match self.sense {
            Sense::Maximize => OptimizationDirection::Maximize,
            Sense::Minimize => OptimizationDirection::Minimize,
        };
        let mut problem = Problem::new(direction);
        let vars: Vec<Variable> = self
            .obj
            .iter()
            .zip(&self.bounds)
            .map(|(&c, &b)| problem.add_var(c, b))
            .collect();
        for row in &self.rows {
            let expr: Vec<(Variable, f64)> = row.terms.iter().map(|&(j, c)| (vars[j], c)).collect();
            let op = match row.cmp {
                Cmp::Le => ComparisonOp::Le,
                Cmp::Ge => ComparisonOp::Ge,
                Cmp::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(expr, op, row.rhs);
        }
        (problem, vars)
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        if self.bounds.iter().any(|&(lo, hi)| lo > hi) {
            return Ok(LpOutcome::Infeasible);
        }
        let (problem, vars) = self.build();
        bump_solves();
        outcome_of(problem.solve_with(solve_options()), &vars, self)
    }

    /// Plain-text dump in CPLEX LP format for external cross-checks.
    pub fn to_lp_format(&self) -> String {
        let mut out = String::from("\\ polyagg LP dump\n");
        out.push_str(match self.sense {
            Sense::Maximize => "Maximize\n obj:",
            Sense::Minimize => "Minimize\n obj:",
        });
        write_terms(&mut out, self.obj.iter().copied().enumerate().filter(|t| t.1 != 0.0));
        out.push_str("\nSubject To\n");
        for (k, row) in self.rows.iter().enumerate() {
            let _ = write!(out, " c{k}:");
            write_terms(&mut out, row.terms.iter().copied());
            let op = match row.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            };
            let _ = writeln!(out, " {op} {:e}", row.rhs);
        }
        out.push_str("Bounds\n");
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            let fmt = |v: f64| {
                if v == f64::INFINITY {
                    "+inf".to_string()
                } else if v == f64::NEG_INFINITY {
                    "-inf".to_string()
                } else {
                    format!("{v:e}")
                }
            };
            let _ = writeln!(out, " {} <= x{j} <= {}", fmt(lo), fmt(hi));
        }
        out.push_str("End\n");
        out
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (usize, f64)>) {
    let mut empty = true;
    for (j, c) in terms {
        let sign = if c < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {:e} x{j}", c.abs());
        empty = false;
    }
    if empty {
        out.push_str(" 0 x0");
    }
}

pub(crate) fn outcome_of(
    result: std::result::Result<microlp::SolveOutcome, microlp::Error>,
    vars: &[Variable],
    model: &Model,
) -> Result<LpOutcome> {
    match result {
        Ok(outcome) => match outcome.into_solution() {
            Ok(sol) => Ok(read_solution(&sol, vars, model)),
            Err(_) => Ok(LpOutcome::Limit),
        },
        Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
        Err(microlp::Error::Unbounded) => Err(Error::Solver("unbounded LP over a polytope".into())),
        Err(e) => Err(Error::Solver(e.to_string())),
    }
}

pub(crate) fn read_solution(sol: &microlp::Solution, vars: &[Variable], model: &Model) -> LpOutcome {
    let x: Vec<f64> = vars.iter().map(|&v| sol.var_value_raw(v)).collect();
    let objective = model.objective_at(&x);
    LpOutcome::Optimal { x, objective }
}

/// Writes the LP `max/min obj` over `poly ∩ extra_rows` in CPLEX LP format.
pub fn dump_lp(poly: &OccupancyPolytope, extra_rows: &[Halfspace], obj: &LinearObjective) -> String {
    let mut model = Model::over(poly, obj.sense);
    for row in extra_rows {
        model.add_halfspace(row);
    }
    model.set_d_objective(&obj.coeffs);
    model.to_lp_format()
}

pub(crate) fn sparse(coeffs: &[f64]) -> Vec<(usize, f64)> {
    coeffs
        .iter()
        .enumerate()
        .filter(|(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect()
}

/// Sum of reward tables, the utilitarian objective.
pub(crate) fn welfare_objective(rewards: &[&[f64]], n: usize) -> Vec<f64> {
    let mut total = vec![0.0; n];
    for r in rewards {
        for (t, x) in total.iter_mut().zip(r.iter()) {
            *t += x;
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;
    use crate::polytope::build_polytope;

    #[test]
    fn total_mass_is_one() {
        let m = instances::warehouse_fixture();
        let poly = build_polytope(&m).unwrap();
        let sol = solve_lp(&poly, &[], &LinearObjective::maximize(&vec![1.0; poly.num_vars()])).unwrap();
        assert!(sol.is_optimal());
        assert!((sol.objective_value - 1.0).abs() < 1e-9);
        assert!(poly.contains(sol.point.as_ref().unwrap()));
    }

    #[test]
    fn simplex_vertex_and_infeasible_row() {
        let m = instances::gen_simplex_instance(3).unwrap();
        let poly = build_polytope(&m).unwrap();
        let sol = solve_lp(&poly, &[], &LinearObjective::maximize(m.reward(0))).unwrap();
        assert!((sol.objective_value - 1.0).abs() < 1e-12);
        let d = sol.point.unwrap();
        assert!((d.values[0] - 1.0).abs() < 1e-12 && d.values[1].abs() < 1e-12);

        let row = Halfspace::at_least(m.reward(0), 2.0);
        let sol = solve_lp(&poly, &[row], &LinearObjective::maximize(m.reward(0))).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
        assert!(sol.point.is_none());
    }

    #[test]
    fn solves_are_deterministic() {
        let m = instances::warehouse_fixture();
        let poly = build_polytope(&m).unwrap();
        let obj = LinearObjective::maximize(m.reward(1));
        let a = solve_lp(&poly, &[], &obj).unwrap();
        let b = solve_lp(&poly, &[], &obj).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lp_dump_lists_every_row() {
        let m = instances::gen_simplex_instance(2).unwrap();
        let poly = build_polytope(&m).unwrap();
        let text = dump_lp(&poly, &[], &LinearObjective::maximize(m.reward(0)));
        assert!(text.starts_with("\\ polyagg LP dump\nMaximize"));
        assert!(text.contains("Subject To"));
        assert!(text.contains("0e0 <= x1 <= +inf"));
        assert!(text.trim_end().ends_with("End"));
    }
}
