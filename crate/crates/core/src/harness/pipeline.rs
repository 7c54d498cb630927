use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lp::MilpConfig;
use crate::momdp::{normalize_rewards, Momdp, NormalizedMomdp};
use crate::polytope::{build_polytope, OccupancyPolytope};
use crate::rules::{self, RuleResult};
use crate::volume::{affine_hull, estimate_cdf, sample_with, CdfMethod, Execution, HullChart, ReturnCdf, SampleCloud, WalkParams};

/// Default number of polytope samples per instance.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Registered rule names, in CLI order.
pub const RULE_NAMES: [&str; 8] = [
    "veto-core",
    "max-quantile",
    "approval",
    "plurality",
    "borda-milp",
    "borda-concave",
    "utilitarian",
    "egalitarian",
];

fn default_veto_epsilon() -> f64 {
    0.01
}

fn default_quantile_epsilon() -> f64 {
    0.01
}

fn default_borda_epsilon() -> f64 {
    0.05
}

fn default_alpha() -> f64 {
    0.9
}

/// A rule together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RuleSpec {
    VetoCore {
        #[serde(default = "default_veto_epsilon")]
        epsilon: f64,
        /// Veto order as positions into the kept agents.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        order: Option<Vec<usize>>,
    },
    MaxQuantile {
        #[serde(default = "default_quantile_epsilon")]
        epsilon: f64,
    },
    Approval {
        #[serde(default = "default_alpha")]
        alpha: f64,
    },
    Plurality,
    BordaMilp {
        #[serde(default = "default_borda_epsilon")]
        epsilon: f64,
    },
    BordaConcave,
    Utilitarian,
    Egalitarian,
}

impl RuleSpec {
    /// Builds a spec from a registered name; unset parameters take defaults.
    pub fn from_name(name: &str, alpha: Option<f64>, epsilon: Option<f64>) -> Result<Self> {
        Ok(match name {
            "veto-core" => RuleSpec::VetoCore {
                epsilon: epsilon.unwrap_or_else(default_veto_epsilon),
                order: None,
            },
            "max-quantile" => RuleSpec::MaxQuantile {
                epsilon: epsilon.unwrap_or_else(default_quantile_epsilon),
            },
            "approval" => RuleSpec::Approval {
                alpha: alpha.unwrap_or_else(default_alpha),
            },
            "plurality" => RuleSpec::Plurality,
            "borda-milp" => RuleSpec::BordaMilp {
                epsilon: epsilon.unwrap_or_else(default_borda_epsilon),
            },
            "borda-concave" => RuleSpec::BordaConcave,
            "utilitarian" => RuleSpec::Utilitarian,
            "egalitarian" => RuleSpec::Egalitarian,
            other => {
                return Err(Error::InvalidModel(format!(
                    "unknown rule {other:?}; expected one of {}",
                    RULE_NAMES.join(", ")
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            RuleSpec::VetoCore { .. } => "veto-core",
            RuleSpec::MaxQuantile { .. } => "max-quantile",
            RuleSpec::Approval { .. } => "approval",
            RuleSpec::Plurality => "plurality",
            RuleSpec::BordaMilp { .. } => "borda-milp",
            RuleSpec::BordaConcave => "borda-concave",
            RuleSpec::Utilitarian => "utilitarian",
            RuleSpec::Egalitarian => "egalitarian",
        }
    }

    /// Short label including the parameter, e.g. `approval(0.9)`.
    pub fn label(&self) -> String {
        match self {
            RuleSpec::VetoCore { epsilon, .. }
            | RuleSpec::MaxQuantile { epsilon }
            | RuleSpec::BordaMilp { epsilon } => format!("{}({epsilon})", self.name()),
            RuleSpec::Approval { alpha } => format!("approval({alpha})"),
            _ => self.name().to_string(),
        }
    }

    /// Whether the rule reads the sample cloud or the cdfs.
    pub fn needs_samples(&self) -> bool {
        !matches!(self, RuleSpec::Plurality | RuleSpec::Utilitarian | RuleSpec::Egalitarian)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub samples: usize,
    pub seed: u64,
    /// Overrides the dimension-based default.
    pub burn_in: Option<usize>,
    pub cdf_method: CdfMethod,
    #[serde(skip, default = "parallel")]
    pub execution: Execution,
}

fn parallel() -> Execution {
    Execution::Parallel
}

impl SampleOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        SampleOptions {
            samples,
            seed,
            burn_in: None,
            cdf_method: CdfMethod::Empirical,
            execution: Execution::Parallel,
        }
    }
}

/// Everything the rules share for one instance: the normalized MOMDP, its
/// polytope and affine hull, one sample cloud and the per-agent return cdfs.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub momdp: Momdp,
    pub norm: NormalizedMomdp,
    pub poly: OccupancyPolytope,
    pub chart: HullChart,
    pub cloud: Option<SampleCloud>,
    pub cdfs: Vec<ReturnCdf>,
}

impl Prepared {
    /// Normalizes, builds the polytope and, when `sampling` is given, draws
    /// the shared cloud and estimates the cdfs on `[0, 1]`.
    pub fn new(momdp: Momdp, sampling: Option<&SampleOptions>) -> Result<Self> {
        let poly = build_polytope(&momdp)?;
        let norm = normalize_rewards(&momdp, &poly)?;
        let chart = affine_hull(&poly)?;
        let mut prepared = Prepared {
            momdp,
            norm,
            poly,
            chart,
            cloud: None,
            cdfs: Vec::new(),
        };
        if let Some(opts) = sampling {
            let mut params = WalkParams::for_dim(prepared.chart.dim(), opts.samples);
            if let Some(b) = opts.burn_in {
                params.burn_in = b;
            }
            let cloud = sample_with(&prepared.poly, &prepared.chart, params, opts.seed, opts.execution)?;
            prepared.attach_cloud(cloud, opts.cdf_method)?;
        }
        Ok(prepared)
    }

    /// Uses a precomputed cloud (e.g. read from CSV) for the cdfs.
    pub fn attach_cloud(&mut self, cloud: SampleCloud, method: CdfMethod) -> Result<()> {
        if cloud.num_states != self.poly.num_states() || cloud.num_actions != self.poly.num_actions() {
            return Err(Error::InvalidModel("sample cloud does not match the MOMDP".into()));
        }
        self.cdfs = (0..self.norm.kept.len())
            .map(|k| estimate_cdf(&cloud, k, self.norm.momdp.reward(k), (0.0, 1.0), method))
            .collect();
        self.cloud = Some(cloud);
        Ok(())
    }

    fn cloud(&self) -> Result<&SampleCloud> {
        self.cloud
            .as_ref()
            .ok_or_else(|| Error::InvalidModel("rule needs a sample cloud".into()))
    }

    /// Runs one rule. The baselines optimize the raw rewards.
    pub fn run(&self, rule: &RuleSpec, milp: MilpConfig) -> Result<RuleResult> {
        let (norm, poly) = (&self.norm, &self.poly);
        if rule.needs_samples() {
            self.cloud()?;
        }
        match rule {
            RuleSpec::VetoCore { epsilon, order } => {
                rules::veto_core(norm, poly, self.cloud()?, *epsilon, order.as_deref())
            }
            RuleSpec::MaxQuantile { epsilon } => rules::max_quantile(norm, poly, &self.cdfs, *epsilon),
            RuleSpec::Approval { alpha } => rules::alpha_approval(norm, poly, &self.cdfs, *alpha, milp),
            RuleSpec::Plurality => rules::alpha_approval(norm, poly, &[], 1.0, milp),
            RuleSpec::BordaMilp { epsilon } => rules::borda_milp(norm, poly, &self.cdfs, *epsilon, milp),
            RuleSpec::BordaConcave => rules::borda_concave(norm, poly, &self.cdfs),
            RuleSpec::Utilitarian => rules::utilitarian(norm, poly, &norm.raw_rewards(&self.momdp)),
            RuleSpec::Egalitarian => rules::egalitarian(norm, poly, &norm.raw_rewards(&self.momdp)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances;

    #[test]
    fn names_round_trip() {
        for name in RULE_NAMES {
            let spec = RuleSpec::from_name(name, None, None).unwrap();
            assert_eq!(spec.name(), name);
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(serde_json::from_str::<RuleSpec>(&json).unwrap(), spec);
        }
        assert!(RuleSpec::from_name("condorcet", None, None).is_err());
        assert!(serde_json::from_str::<RuleSpec>(r#"{"rule":"condorcet"}"#).is_err());
    }

    #[test]
    fn sampling_rules_need_a_cloud() {
        let p = Prepared::new(instances::gen_simplex_instance(2).unwrap(), None).unwrap();
        assert!(p.run(&RuleSpec::Utilitarian, MilpConfig::default()).is_ok());
        assert!(p.run(&RuleSpec::BordaConcave, MilpConfig::default()).is_err());
    }
}
