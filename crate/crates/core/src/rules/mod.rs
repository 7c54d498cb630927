//! Aggregation rules. Each rule returns a Pareto-completed [`RuleResult`].
//!
//! Rules work on the normalized MOMDP: every kept agent's return ranges over
//! exactly `[0, 1]`, and the per-agent return cdfs are estimated from one
//! shared sample cloud.

mod approval;
mod baseline;
mod borda;
mod quantile;
mod veto;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use approval::{alpha_approval, PLURALITY_SLACK};
pub use baseline::{egalitarian, utilitarian};
pub use borda::{borda_concave, borda_milp, borda_score, CONCAVE_KNOTS};
pub use quantile::{max_quantile, quantile_feasible};
pub use veto::veto_core;

use crate::lp::lp_solve_count;
use crate::momdp::{dot, occupancy_to_policy, NormalizedMomdp, OccupancyMeasure, Policy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VetoCertificate {
    pub epsilon: f64,
    /// `1/n - ε/(n+1)`.
    pub delta: f64,
    /// Agent positions (into the kept agents) in veto order.
    pub order: Vec<usize>,
    /// `v_i*` per kept agent.
    pub thresholds: Vec<f64>,
    /// Fraction of the whole polytope each agent cut away.
    pub measured_cuts: Vec<f64>,
    pub cut_std_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileCertificate {
    pub epsilon: f64,
    pub q_star: f64,
    /// `F_i^{-1}(q_star)` per kept agent.
    pub thresholds: Vec<f64>,
    /// Smallest grid level found infeasible, if any.
    pub infeasible_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalCertificate {
    pub alpha: f64,
    /// Original indices of kept agents that approve.
    pub approving_agents: Vec<usize>,
    /// Original indices of indifferent agents; they approve every policy.
    pub indifferent_agents: Vec<usize>,
    pub thresholds: Vec<f64>,
    /// Approvals including indifferent agents.
    pub score: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BordaCertificate {
    pub epsilon: f64,
    /// `a_{i,k}` for `k = 1..=1/ε`, per kept agent.
    pub level_indicators: Vec<Vec<bool>>,
    /// `Σ_{i,k} a_{i,k} (F_i(kε) - F_i((k-1)ε))`.
    pub rounded_score: f64,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcaveCertificate {
    /// Estimated mode of each agent's return density.
    pub modes: Vec<f64>,
    /// Optimal value of the piecewise-linear surrogate.
    pub surrogate_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Certificate {
    None,
    Veto(VetoCertificate),
    Quantile(QuantileCertificate),
    Approval(ApprovalCertificate),
    Borda(BordaCertificate),
    Concave(ConcaveCertificate),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub lp_solves: usize,
    pub samples_used: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleResult {
    pub rule: String,
    pub occupancy: OccupancyMeasure,
    pub policy: Policy,
    /// Original indices of the kept agents, aligned with `returns`.
    pub agents: Vec<usize>,
    /// Normalized return of each kept agent.
    pub returns: Vec<f64>,
    pub certificate: Certificate,
    pub diagnostics: Diagnostics,
}

impl RuleResult {
    /// Drops the wall-clock time so reruns compare equal.
    pub fn without_timing(mut self) -> Self {
        self.diagnostics.wall_time_ms = None;
        self
    }
}

/// Bookkeeping shared by the rules: LP count and wall time since creation.
pub(crate) struct Tracker {
    start: Instant,
    solves: usize,
}

impl Tracker {
    pub fn start() -> Self {
        Tracker {
            start: Instant::now(),
            solves: lp_solve_count(),
        }
    }

    pub fn finish(
        self,
        rule: &str,
        norm: &NormalizedMomdp,
        occupancy: OccupancyMeasure,
        certificate: Certificate,
        samples_used: usize,
    ) -> RuleResult {
        let returns = norm.momdp.rewards().iter().map(|r| dot(r, &occupancy.values)).collect();
        RuleResult {
            rule: rule.to_string(),
            policy: occupancy_to_policy(&occupancy),
            occupancy,
            agents: norm.kept.clone(),
            returns,
            certificate,
            diagnostics: Diagnostics {
                lp_solves: lp_solve_count() - self.solves,
                samples_used,
                wall_time_ms: Some(self.start.elapsed().as_secs_f64() * 1e3),
            },
        }
    }
}

/// Normalized reward tables as slices.
pub(crate) fn reward_slices(norm: &NormalizedMomdp) -> Vec<&[f64]> {
    norm.momdp.rewards().iter().map(Vec::as_slice).collect()
}

/// Number of grid levels `1/ε`, requiring it to be (close to) an integer.
pub(crate) fn grid_levels(epsilon: f64) -> crate::Result<usize> {
    let k = (1.0 / epsilon).round();
    if !(epsilon > 0.0 && epsilon <= 1.0) || ((1.0 / epsilon) - k).abs() > 1e-6 {
        return Err(crate::Error::InvalidModel(format!("1/ε must be a positive integer, got ε = {epsilon}")));
    }
    Ok(k as usize)
}

/// Checks one cdf per kept agent.
pub(crate) fn check_cdfs(norm: &NormalizedMomdp, cdfs: &[crate::volume::ReturnCdf]) -> crate::Result<()> {
    if cdfs.len() != norm.kept.len() {
        return Err(crate::Error::InvalidModel(format!(
            "{} cdfs for {} agents",
            cdfs.len(),
            norm.kept.len()
        )));
    }
    Ok(())
}
