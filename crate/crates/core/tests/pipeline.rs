use std::fs;

use polyagg::harness::{run_experiment, ExperimentReport, ExperimentSpec, InstanceSource, RuleSpec, CSV_COLUMNS};
use polyagg::lp::MilpConfig;
use polyagg::rules::Certificate;
use polyagg::volume::CdfMethod;

fn spec(instance: InstanceSource, rules: Vec<RuleSpec>, instances: usize, samples: usize) -> ExperimentSpec {
    ExperimentSpec {
        instance,
        rules,
        seed: 11,
        instances,
        samples,
        burn_in: None,
        cdf_method: CdfMethod::Empirical,
        milp: MilpConfig::default(),
        output_dir: None,
        record_timings: false,
        raw_metrics: false,
    }
}

#[test]
fn single_agent_utilitarian_reaches_its_optimum() {
    let s = spec(
        InstanceSource::Random { states: 2, actions: 2, agents: 1 },
        vec![RuleSpec::Utilitarian],
        1,
        100,
    );
    let report = run_experiment(&s).unwrap();
    assert_eq!(report.rows.len(), 1);
    let row = &report.rows[0];
    assert_eq!(row.returns.len(), 1);
    assert!((row.returns[0] - 1.0).abs() < 1e-7);
    assert_eq!(row.gini, Some(0.0));
}

#[test]
fn simplex_max_quantile_matches_the_closed_form() {
    // On the 2-simplex the best common quantile is 1 - (2/3)^2 = 5/9.
    let s = spec(
        InstanceSource::Simplex { l: 3 },
        vec![RuleSpec::MaxQuantile { epsilon: 0.01 }],
        1,
        100_000,
    );
    let report = run_experiment(&s).unwrap();
    let Some(Certificate::Quantile(c)) = report.runs[0].result.as_ref().map(|r| &r.certificate) else {
        panic!("max-quantile returns a quantile certificate");
    };
    assert!((c.q_star - 5.0 / 9.0).abs() < 0.02, "q* = {}", c.q_star);
}

#[test]
fn reruns_are_byte_identical_and_reload() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for dir in &dirs {
        let mut s = spec(
            InstanceSource::Random { states: 2, actions: 2, agents: 3 },
            vec![
                RuleSpec::MaxQuantile { epsilon: 0.01 },
                RuleSpec::Approval { alpha: 0.9 },
                RuleSpec::Egalitarian,
            ],
            2,
            5_000,
        );
        s.output_dir = Some(dir.path().to_path_buf());
        reports.push(run_experiment(&s).unwrap());
    }
    for file in ["results.json", "metrics.csv"] {
        let a = fs::read(dirs[0].path().join(file)).unwrap();
        let b = fs::read(dirs[1].path().join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between reruns");
    }
    let reloaded = ExperimentReport::read_json(dirs[0].path().join("results.json")).unwrap();
    assert_eq!(reloaded, reports[0]);
    for (a, b) in reloaded.rows.iter().zip(&reports[0].rows) {
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.returns), bits(&b.returns));
    }
}

#[test]
fn metrics_csv_has_the_documented_columns() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = spec(InstanceSource::Simplex { l: 2 }, vec![RuleSpec::Utilitarian, RuleSpec::Egalitarian], 3, 10);
    s.output_dir = Some(dir.path().to_path_buf());
    run_experiment(&s).unwrap();
    let mut reader = csv::Reader::from_path(dir.path().join("metrics.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, CSV_COLUMNS);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    // Three seeds per rule, then one aggregate row per rule.
    assert_eq!(rows.len(), 3 * 2 + 2);
    assert!(rows[..6].iter().all(|r| &r[0] == "run"));
    assert!(rows[6..].iter().all(|r| &r[0] == "mean" && r[1].is_empty()));
}
