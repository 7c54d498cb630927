//! Policy aggregation for multi-objective Markov decision processes.
//!
//! Every stochastic policy of an MDP corresponds to a point of the state-action
//! occupancy polytope, and each agent's expected return is a linear functional
//! over that polytope. This crate treats the polytope as a continuous space of
//! alternatives and aggregates the agents' (volumetric) preferences with
//! social-choice rules:
//!
//! * [`rules::veto_core`]: sequential proportional veto core,
//! * [`rules::max_quantile`]: maximum quantile fairness,
//! * [`rules::alpha_approval`]: α-approval (plurality for α = 1),
//! * [`rules::borda_milp`] / [`rules::borda_concave`]: Borda count,
//! * [`rules::utilitarian`] / [`rules::egalitarian`]: welfare baselines.
//!
//! The supporting layers are the MDP data model ([`momdp`], [`polytope`]), a
//! linear / mixed-integer programming layer ([`lp`]), a Monte Carlo volume
//! oracle built on hit-and-run sampling ([`volume`]), instance generators with
//! brute-force oracles ([`instances`]) and the experiment harness ([`harness`]).

pub mod error;
pub mod harness;
pub mod instances;
pub mod lp;
pub mod momdp;
pub mod polytope;
pub mod rules;
pub mod volume;

pub use error::{Error, Result};
pub use momdp::{Criterion, Momdp, NormalizedMomdp, OccupancyMeasure, Policy};
pub use polytope::{build_polytope, Equality, Halfspace, OccupancyPolytope};

/// Numerical tolerances shared across modules.
pub mod tol {
    /// Allowed violation of a polytope row by an accepted point.
    pub const CONSTRAINT: f64 = 1e-7;
    /// Below this range an agent is treated as indifferent; also the
    /// stochasticity tolerance for transition rows and policies.
    pub const DEGENERATE: f64 = 1e-9;
    /// State occupancy below this value is treated as unreachable.
    pub const OCCUPANCY_DENOMINATOR: f64 = 1e-12;
}
