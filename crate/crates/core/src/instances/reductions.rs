//! Fully connected MOMDPs encoding maximum independent set and MAX-2SAT,
//! with exhaustive solvers used as oracles.

use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fully_connected;
use crate::error::{Error, Result};
use crate::momdp::{Criterion, Momdp};

/// Largest instance the brute-force oracles accept.
pub const BRUTE_FORCE_LIMIT: usize = 20;

/// Simple undirected graph on vertices `0..num_vertices`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Graph {
    num_vertices: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    pub fn new(num_vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for &(u, v) in &edges {
            if u >= num_vertices || v >= num_vertices {
                return Err(Error::InvalidModel(format!("edge ({u}, {v}) out of range")));
            }
            if u == v {
                return Err(Error::InvalidModel(format!("self-loop at vertex {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::InvalidModel(format!("duplicate edge ({u}, {v})")));
            }
        }
        Ok(Graph { num_vertices, edges })
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Graph { num_vertices: n, edges }
    }

    /// Whether `set` (bitmask over vertices) is independent.
    pub fn is_independent(&self, set: u64) -> bool {
        self.edges.iter().all(|&(u, v)| set >> u & 1 == 0 || set >> v & 1 == 0)
    }

    /// Parses `p edge V E` followed by `e u v` lines (1-based vertices);
    /// lines starting with `c` are comments.
    pub fn parse_dimacs(text: &str) -> Result<Self> {
        let mut vertices = None;
        let mut edges = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('c')) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["p", "edge", v, _] => vertices = Some(parse_num(v)?),
                ["e", u, v] => edges.push((parse_num(u)?, parse_num(v)?)),
                _ => return Err(Error::Parse(format!("unexpected graph line `{line}`"))),
            }
        }
        let n = vertices.ok_or_else(|| Error::Parse("missing `p edge` line".into()))?;
        let edges = edges
            .into_iter()
            .map(|(u, v)| match (u.checked_sub(1), v.checked_sub(1)) {
                (Some(u), Some(v)) => Ok((u, v)),
                _ => Err(Error::Parse("vertices are 1-based".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Graph::new(n, edges)
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p edge {} {}\n", self.num_vertices, self.edges.len());
        for &(u, v) in &self.edges {
            let _ = writeln!(out, "e {} {}", u + 1, v + 1);
        }
        out
    }
}

fn parse_num(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse(format!("expected a nonnegative integer, got `{s}`")))
}

/// Literal: variable index (0-based) and polarity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Literal {
    pub var: usize,
    pub positive: bool,
}

impl Literal {
    pub fn pos(var: usize) -> Self {
        Literal { var, positive: true }
    }

    pub fn neg(var: usize) -> Self {
        Literal { var, positive: false }
    }

    pub fn negated(self) -> Self {
        Literal { positive: !self.positive, ..self }
    }

    pub fn holds(self, assignment: u64) -> bool {
        (assignment >> self.var & 1 == 1) == self.positive
    }
}

/// 2-CNF formula over variables `0..num_vars`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<[Literal; 2]>,
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<[Literal; 2]>) -> Result<Self> {
        if num_vars == 0 {
            return Err(Error::InvalidModel("formula needs at least one variable".into()));
        }
        if clauses.iter().flatten().any(|l| l.var >= num_vars) {
            return Err(Error::InvalidModel("literal refers to an unknown variable".into()));
        }
        Ok(CnfFormula { num_vars, clauses })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[[Literal; 2]] {
        &self.clauses
    }

    pub fn satisfied(&self, assignment: u64) -> usize {
        self.clauses
            .iter()
            .filter(|c| c[0].holds(assignment) || c[1].holds(assignment))
            .count()
    }

    /// Parses `p cnf V C` followed by clause lines `l1 l2 0` with signed
    /// 1-based literals; `c` lines are comments.
    pub fn parse_dimacs(text: &str) -> Result<Self> {
        let mut vars = None;
        let mut clauses = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('c')) {
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["p", "cnf", v, _] => vars = Some(parse_num(v)?),
                [a, b, "0"] => clauses.push([parse_literal(a)?, parse_literal(b)?]),
                _ => return Err(Error::Parse(format!("expected a 2-literal clause, got `{line}`"))),
            }
        }
        let n = vars.ok_or_else(|| Error::Parse("missing `p cnf` line".into()))?;
        CnfFormula::new(n, clauses)
    }

    pub fn to_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.num_vars, self.clauses.len());
        let lit = |l: Literal| {
            let v = l.var as i64 + 1;
            if l.positive {
                v
            } else {
                -v
            }
        };
        for c in &self.clauses {
            let _ = writeln!(out, "{} {} 0", lit(c[0]), lit(c[1]));
        }
        out
    }
}

fn parse_literal(s: &str) -> Result<Literal> {
    let v: i64 = s.parse().map_err(|_| Error::Parse(format!("bad literal `{s}`")))?;
    if v == 0 {
        return Err(Error::Parse("literal 0 inside a clause".into()));
    }
    let var = (v.unsigned_abs() - 1) as usize;
    Ok(Literal { var, positive: v > 0 })
}

/// One state per edge, two actions (the edge's endpoints) and one agent per
/// vertex rewarded for choosing itself.
pub fn gen_from_mis(g: &Graph) -> Result<Momdp> {
    if g.edges.is_empty() {
        return Err(Error::InvalidModel("graph has no edges".into()));
    }
    let ns = g.edges.len();
    let rewards = (0..g.num_vertices)
        .map(|i| {
            g.edges
                .iter()
                .flat_map(|&(u, v)| [f64::from(u8::from(u == i)), f64::from(u8::from(v == i))])
                .collect()
        })
        .collect();
    fully_connected(ns, 2, rewards, Criterion::Average)
}

/// State-action pair whose selection makes literal `l` true (action 0 sets
/// the variable true, action 1 false).
pub fn literal_pair(l: Literal) -> (usize, usize) {
    (l.var, if l.positive { 0 } else { 1 })
}

/// One state per variable with actions `True = 0` and `False = 1`; three
/// agents per clause rewarded for the literal patterns `(c1, c2)`,
/// `(c1, ¬c2)` and `(¬c1, c2)`.
pub fn gen_from_max2sat(f: &CnfFormula) -> Result<Momdp> {
    if f.clauses.is_empty() {
        return Err(Error::InvalidModel("formula has no clauses".into()));
    }
    let ns = f.num_vars;
    let mut rewards = Vec::with_capacity(3 * f.clauses.len());
    for &[c1, c2] in &f.clauses {
        for (x, y) in [(c1, c2), (c1, c2.negated()), (c1.negated(), c2)] {
            let mut table = vec![0.0; ns * 2];
            for l in [x, y] {
                let (s, a) = literal_pair(l);
                table[s * 2 + a] += 1.0;
            }
            rewards.push(table);
        }
    }
    fully_connected(ns, 2, rewards, Criterion::Average)
}

fn check_limit(what: &'static str, size: usize) -> Result<()> {
    if size > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeLimit {
            what,
            size,
            limit: BRUTE_FORCE_LIMIT,
        });
    }
    Ok(())
}

/// Size of a maximum independent set by enumerating all vertex subsets.
pub fn brute_force_mis(g: &Graph) -> Result<usize> {
    check_limit("vertices", g.num_vertices)?;
    Ok((0u64..1 << g.num_vertices)
        .filter(|&set| g.is_independent(set))
        .map(|set| set.count_ones() as usize)
        .max()
        .unwrap_or(0))
}

/// Maximum number of simultaneously satisfiable clauses.
pub fn brute_force_max2sat(f: &CnfFormula) -> Result<usize> {
    check_limit("variables", f.num_vars)?;
    Ok((0u64..1 << f.num_vars).map(|a| f.satisfied(a)).max().unwrap_or(0))
}

/// Random graph with at least one edge; each pair is an edge with
/// probability `density`.
pub fn random_graph(num_vertices: usize, density: f64, seed: u64) -> Result<Graph> {
    if num_vertices < 2 {
        return Err(Error::InvalidModel("need at least two vertices".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (0..num_vertices)
        .flat_map(|u| (u + 1..num_vertices).map(move |v| (u, v)))
        .collect();
    edges.retain(|_| rng.random_bool(density));
    if edges.is_empty() {
        let u = rng.random_range(0..num_vertices - 1);
        let v = rng.random_range(u + 1..num_vertices);
        edges.push((u, v));
    }
    Graph::new(num_vertices, edges)
}

/// Random 2-CNF whose clauses use two distinct variables with random signs.
pub fn random_cnf(num_vars: usize, num_clauses: usize, seed: u64) -> Result<CnfFormula> {
    if num_vars < 2 || num_clauses == 0 {
        return Err(Error::InvalidModel("need two variables and one clause".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars: Vec<usize> = (0..num_vars).collect();
    let clauses = (0..num_clauses)
        .map(|_| {
            let mut pick: Vec<usize> = vars.choose_multiple(&mut rng, 2).copied().collect();
            pick.shuffle(&mut rng);
            [
                Literal { var: pick[0], positive: rng.random_bool(0.5) },
                Literal { var: pick[1], positive: rng.random_bool(0.5) },
            ]
        })
        .collect();
    CnfFormula::new(num_vars, clauses)
}
