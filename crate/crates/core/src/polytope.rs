//! H-representation of the state-action occupancy polytope.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::{self, LinearObjective, Sense, SolveStatus};
use crate::momdp::{dot, Criterion, Momdp, OccupancyMeasure};
use crate::tol;
use crate::volume::HullChart;

/// The halfspace `coeffs · x ≤ bound`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub coeffs: Vec<f64>,
    pub bound: f64,
}

impl Halfspace {
    pub fn new(coeffs: Vec<f64>, bound: f64) -> Self {
        Halfspace { coeffs, bound }
    }

    /// `coeffs · x ≥ value`, stored as `-coeffs · x ≤ -value`.
    pub fn at_least(coeffs: &[f64], value: f64) -> Self {
        Halfspace {
            coeffs: coeffs.iter().map(|c| -c).collect(),
            bound: -value,
        }
    }

    /// `coeffs · x ≤ value`.
    pub fn at_most(coeffs: &[f64], value: f64) -> Self {
        Halfspace::new(coeffs.to_vec(), value)
    }

    /// `bound - coeffs · x`; nonnegative inside.
    #[inline]
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.bound - dot(&self.coeffs, x)
    }

    #[inline]
    pub fn contains(&self, x: &[f64], tolerance: f64) -> bool {
        self.slack(x) >= -tolerance
    }
}

/// The equality `coeffs · x = value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equality {
    pub coeffs: Vec<f64>,
    pub value: f64,
}

/// Polytope `{x : ineq rows hold, eq rows hold}` over flattened `(s, a)`
/// coordinates.
///
/// Generic test polytopes (boxes, simplices) use the shape `(1, dim)`.
#[derive(Debug, Clone)]
pub struct OccupancyPolytope {
    num_states: usize,
    num_actions: usize,
    ineq: Vec<Halfspace>,
    eq: Vec<Equality>,
    chart: Option<HullChart>,
}

impl OccupancyPolytope {
    /// Builds a polytope from explicit rows and certifies it is nonempty.
    pub fn from_rows(
        num_states: usize,
        num_actions: usize,
        ineq: Vec<Halfspace>,
        eq: Vec<Equality>,
    ) -> Result<Self> {
        let n = num_states * num_actions;
        if ineq.iter().any(|h| h.coeffs.len() != n) || eq.iter().any(|e| e.coeffs.len() != n) {
            return Err(Error::InvalidModel("polytope row length mismatch".into()));
        }
        let poly = OccupancyPolytope {
            num_states,
            num_actions,
            ineq,
            eq,
            chart: None,
        };
        let probe = lp::solve_lp(&poly, &[], &LinearObjective::new(vec![0.0; n], Sense::Maximize))?;
        match probe.status {
            SolveStatus::Optimal => Ok(poly),
            SolveStatus::IterationLimit => Err(Error::IterationLimit),
            SolveStatus::Infeasible => Err(Error::InfeasibleModel),
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    /// Ambient dimension `|S|·|A|`.
    pub fn num_vars(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn ineq(&self) -> &[Halfspace] {
        &self.ineq
    }

    pub fn eq(&self) -> &[Equality] {
        &self.eq
    }

    /// Cached affine-hull parametrization, if one was attached.
    pub fn chart(&self) -> Option<&HullChart> {
        self.chart.as_ref()
    }

    pub fn with_chart(mut self, chart: HullChart) -> Self {
        self.chart = Some(chart);
        self
    }

    /// Whether `x` satisfies every row within `tolerance`.
    pub fn contains_point(&self, x: &[f64], tolerance: f64) -> bool {
        x.len() == self.num_vars()
            && self.ineq.iter().all(|h| h.contains(x, tolerance))
            && self
                .eq
                .iter()
                .all(|e| (dot(&e.coeffs, x) - e.value).abs() <= tolerance)
    }

    /// Membership within the shared constraint slack of `1e-7`.
    pub fn contains(&self, d: &OccupancyMeasure) -> bool {
        self.contains_point(&d.values, tol::CONSTRAINT)
    }

    pub fn measure(&self, values: Vec<f64>) -> OccupancyMeasure {
        OccupancyMeasure::new(self.num_states, self.num_actions, values)
    }
}

/// Builds the occupancy polytope of `m` for its reward criterion.
pub fn build_polytope(m: &Momdp) -> Result<OccupancyPolytope> {
    let (ns, na) = (m.num_states(), m.num_actions());
    let n = ns * na;
    let ineq = (0..n)
        .map(|j| {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = -1.0;
            Halfspace::new(coeffs, 0.0)
        })
        .collect();
    let mut eq = Vec::with_capacity(ns + 1);
    let (discount, init): (f64, Option<&[f64]>) = match m.criterion() {
        Criterion::Average => (1.0, None),
        Criterion::Discounted { gamma, d_init } => (*gamma, Some(d_init)),
    };
    for s in 0..ns {
        // Σ_a d(s,a) - γ Σ_{s',a'} P(s',a',s) d(s',a') = (1-γ) d_init(s)
        let mut coeffs = vec![0.0; n];
        for a in 0..na {
            coeffs[m.pair(s, a)] += 1.0;
        }
        for prev in 0..ns {
            for a in 0..na {
                coeffs[m.pair(prev, a)] -= discount * m.transition(prev, a, s);
            }
        }
        let value = init.map_or(0.0, |d| (1.0 - discount) * d[s]);
        eq.push(Equality { coeffs, value });
    }
    eq.push(Equality {
        coeffs: vec![1.0; n],
        value: 1.0,
    });
    OccupancyPolytope::from_rows(ns, na, ineq, eq)
}
