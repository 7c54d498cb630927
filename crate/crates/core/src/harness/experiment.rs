use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{gini, nash_welfare, normalized_returns};
use super::pipeline::{Prepared, RuleSpec, SampleOptions, DEFAULT_SAMPLES};
use crate::error::{Error, Result};
use crate::instances::{self, ListMode, WarehouseParams};
use crate::lp::MilpConfig;
use crate::momdp::{dot, Momdp};
use crate::rules::RuleResult;
use crate::volume::CdfMethod;

/// Where each experiment instance comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSource {
    /// A fixed MOMDP JSON file; only the sampling seed varies.
    File { path: PathBuf },
    Warehouse {
        m: usize,
        n: usize,
        #[serde(default = "random_subset")]
        lists: ListMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_vars: Option<usize>,
    },
    Simplex { l: usize },
    Random { states: usize, actions: usize, agents: usize },
}

fn random_subset() -> ListMode {
    ListMode::RandomSubset
}

impl InstanceSource {
    pub fn generate(&self, seed: u64) -> Result<Momdp> {
        match self {
            InstanceSource::File { path } => Momdp::read_json(path),
            InstanceSource::Warehouse { m, n, lists, max_vars } => {
                let mut params = WarehouseParams::sample(*m, *n, *lists, seed)?;
                if let Some(cap) = max_vars {
                    params.max_vars = *cap;
                }
                instances::gen_warehouse(&params)
            }
            InstanceSource::Simplex { l } => instances::gen_simplex_instance(*l),
            InstanceSource::Random { states, actions, agents } => {
                instances::random_momdp(*states, *actions, *agents, seed)
            }
        }
    }
}

fn one() -> usize {
    1
}

fn default_samples() -> usize {
    DEFAULT_SAMPLES
}

fn empirical() -> CdfMethod {
    CdfMethod::Empirical
}

/// An experiment: `instances` seeded instances, `seed, seed + 1, …`, each run
/// through every rule on one shared sample cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub instance: InstanceSource,
    pub rules: Vec<RuleSpec>,
    pub seed: u64,
    #[serde(default = "one")]
    pub instances: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default = "empirical")]
    pub cdf_method: CdfMethod,
    #[serde(default)]
    pub milp: MilpConfig,
    /// Directory for `metrics.csv` and `results.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Wall-clock times make reruns differ, so they are off by default.
    #[serde(default)]
    pub record_timings: bool,
    /// Compute Gini and Nash welfare on raw instead of normalized returns.
    #[serde(default)]
    pub raw_metrics: bool,
}

impl ExperimentSpec {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(&fs::read_to_string(path)?)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rules.is_empty() {
            return Err(Error::InvalidModel("experiment lists no rules".into()));
        }
        if self.instances == 0 || self.samples == 0 {
            return Err(Error::InvalidModel("instances and samples must be positive".into()));
        }
        Ok(())
    }
}

/// One rule on one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub rule: String,
    pub returns: Vec<f64>,
    /// `None` when total welfare is zero or the rule failed.
    pub gini: Option<f64>,
    pub nash: Option<f64>,
    pub runtime_ms: Option<f64>,
    pub error: Option<String>,
}

/// Mean and standard error of the mean over the successful runs of a rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub rule: String,
    pub runs: usize,
    pub failures: usize,
    pub gini_mean: Option<f64>,
    pub gini_sem: Option<f64>,
    pub nash_mean: Option<f64>,
    pub nash_sem: Option<f64>,
    /// Per-agent mean returns; empty if agent counts differ across runs.
    pub returns_mean: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub rule: String,
    pub result: Option<RuleResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub rows: Vec<MetricsRow>,
    pub aggregates: Vec<AggregateRow>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn aggregate(&self, rule: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.rule == rule)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Writes `metrics.csv` and `results.json` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        fs::write(dir.join("results.json"), serde_json::to_string_pretty(self)? + "\n")?;
        write_metrics_csv(dir.join("metrics.csv"), &self.rows, &self.aggregates)
    }
}

/// Columns of `metrics.csv`, in order. Per-run rows have `row = run`; the
/// aggregate block has `row = mean` with the seed column empty.
pub const CSV_COLUMNS: [&str; 12] = [
    "row",
    "seed",
    "rule",
    "runs",
    "failures",
    "gini",
    "gini_sem",
    "nash",
    "nash_sem",
    "runtime_ms",
    "returns",
    "error",
];

#[derive(Serialize)]
struct CsvRecord<'a> {
    row: &'static str,
    seed: Option<u64>,
    rule: &'a str,
    runs: Option<usize>,
    failures: Option<usize>,
    gini: Option<f64>,
    gini_sem: Option<f64>,
    nash: Option<f64>,
    nash_sem: Option<f64>,
    runtime_ms: Option<f64>,
    returns: String,
    error: Option<&'a str>,
}

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

fn write_metrics_csv(path: PathBuf, rows: &[MetricsRow], aggregates: &[AggregateRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(CsvRecord {
            row: "run",
            seed: Some(r.seed),
            rule: &r.rule,
            runs: None,
            failures: None,
            gini: r.gini,
            gini_sem: None,
            nash: r.nash,
            nash_sem: None,
            runtime_ms: r.runtime_ms,
            returns: join(&r.returns),
            error: r.error.as_deref(),
        })?;
    }
    for a in aggregates {
        w.serialize(CsvRecord {
            row: "mean",
            seed: None,
            rule: &a.rule,
            runs: Some(a.runs),
            failures: Some(a.failures),
            gini: a.gini_mean,
            gini_sem: a.gini_sem,
            nash: a.nash_mean,
            nash_sem: a.nash_sem,
            runtime_ms: None,
            returns: join(&a.returns_mean),
            error: None,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and standard error of the mean (zero for a single value).
pub fn mean_sem(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

fn metrics_row(spec: &ExperimentSpec, prepared: &Prepared, seed: u64, label: String, result: &RuleResult) -> MetricsRow {
    let returns = if spec.raw_metrics {
        prepared
            .norm
            .raw_rewards(&prepared.momdp)
            .iter()
            .map(|r| dot(r, &result.occupancy.values))
            .collect()
    } else {
        normalized_returns(&prepared.norm, &prepared.momdp, &result.occupancy)
    };
    MetricsRow {
        seed,
        rule: label,
        gini: gini(&returns).ok(),
        nash: Some(nash_welfare(&returns)),
        runtime_ms: result.diagnostics.wall_time_ms,
        error: None,
        returns,
    }
}

fn failed_row(seed: u64, label: String, e: &Error) -> MetricsRow {
    MetricsRow {
        seed,
        rule: label,
        returns: Vec::new(),
        gini: None,
        nash: None,
        runtime_ms: None,
        error: Some(e.to_string()),
    }
}

fn aggregate(label: &str, rows: &[MetricsRow]) -> AggregateRow {
    let ok: Vec<&MetricsRow> = rows.iter().filter(|r| r.rule == label && r.error.is_none()).collect();
    let failures = rows.iter().filter(|r| r.rule == label && r.error.is_some()).count();
    let gini: Vec<f64> = ok.iter().filter_map(|r| r.gini).collect();
    let nash: Vec<f64> = ok.iter().filter_map(|r| r.nash).collect();
    let returns_mean = match ok.first() {
        Some(first) if ok.iter().all(|r| r.returns.len() == first.returns.len()) => (0..first.returns.len())
            .map(|k| ok.iter().map(|r| r.returns[k]).sum::<f64>() / ok.len() as f64)
            .collect(),
        _ => Vec::new(),
    };
    let g = mean_sem(&gini);
    let n = mean_sem(&nash);
    AggregateRow {
        rule: label.to_string(),
        runs: ok.len(),
        failures,
        gini_mean: g.map(|x| x.0),
        gini_sem: g.map(|x| x.1),
        nash_mean: n.map(|x| x.0),
        nash_sem: n.map(|x| x.1),
        returns_mean,
    }
}

/// Runs every rule on every instance. Failures are recorded per run and do
/// not stop the experiment. Files are written when `output_dir` is set.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let labels: Vec<String> = spec.rules.iter().map(RuleSpec::label).collect();
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let needs_samples = spec.rules.iter().any(RuleSpec::needs_samples);
    for k in 0..spec.instances {
        let seed = spec.seed.wrapping_add(k as u64);
        let sampling = SampleOptions {
            burn_in: spec.burn_in,
            cdf_method: spec.cdf_method,
            ..SampleOptions::new(spec.samples, seed)
        };
        let prepared = spec
            .instance
            .generate(seed)
            .and_then(|m| Prepared::new(m, needs_samples.then_some(&sampling)));
        let prepared = match prepared {
            Ok(p) => p,
            Err(e) => {
                log::warn!("instance {seed} failed: {e}");
                for label in &labels {
                    rows.push(failed_row(seed, label.clone(), &e));
                    runs.push(RunRecord { seed, rule: label.clone(), result: None });
                }
                continue;
            }
        };
        for (rule, label) in spec.rules.iter().zip(&labels) {
            match prepared.run(rule, spec.milp) {
                Ok(result) => {
                    let result = if spec.record_timings { result } else { result.without_timing() };
                    rows.push(metrics_row(spec, &prepared, seed, label.clone(), &result));
                    runs.push(RunRecord { seed, rule: label.clone(), result: Some(result) });
                }
                Err(e) => {
                    log::warn!("{label} on instance {seed} failed: {e}");
                    rows.push(failed_row(seed, label.clone(), &e));
                    runs.push(RunRecord { seed, rule: label.clone(), result: None });
                }
            }
        }
    }
    let mut distinct: Vec<&String> = Vec::new();
    for l in &labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    let aggregates = distinct.iter().map(|l| aggregate(l, &rows)).collect();
    // The output location is not part of the experiment; leaving it out
    // keeps reports written to different directories identical.
    let report = ExperimentReport {
        spec: ExperimentSpec {
            output_dir: None,
            ..spec.clone()
        },
        rows,
        aggregates,
        runs,
    };
    if let Some(dir) = &spec.output_dir {
        report.write(dir)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_sem_values() {
        assert_eq!(mean_sem(&[]), None);
        assert_eq!(mean_sem(&[2.0]), Some((2.0, 0.0)));
        let (m, s) = mean_sem(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m, 2.0);
        assert!((s - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = r#"{"instance": {"kind": "simplex", "l": 2}, "rules": [{"rule": "utilitarian"}]}"#;
        assert!(serde_json::from_str::<ExperimentSpec>(text).is_err());
        let text = r#"{"instance": {"kind": "simplex", "l": 2}, "rules": [{"rule": "utilitarian"}], "seed": 3}"#;
        let spec: ExperimentSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.instances, 1);
        assert_eq!(spec.samples, DEFAULT_SAMPLES);
    }

    #[test]
    fn failures_are_recorded() {
        let spec = ExperimentSpec {
            instance: InstanceSource::Simplex { l: 1 },
            rules: vec![RuleSpec::Utilitarian],
            seed: 0,
            instances: 2,
            samples: 10,
            burn_in: None,
            cdf_method: CdfMethod::Empirical,
            milp: MilpConfig::default(),
            output_dir: None,
            record_timings: false,
            raw_metrics: false,
        };
        let report = run_experiment(&spec).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows.iter().all(|r| r.error.is_some()));
        assert_eq!(report.aggregates[0].failures, 2);
        assert_eq!(report.aggregates[0].gini_mean, None);
    }
}
