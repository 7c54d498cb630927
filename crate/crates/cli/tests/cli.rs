use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn polyagg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyagg")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_writes_a_loadable_momdp() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("w.json");
    let out = polyagg(&["gen", "warehouse", "--m", "2", "--n", "3", "--seed", "4", "--out", path(&file)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = polyagg::Momdp::read_json(&file).unwrap();
    assert_eq!((m.num_states(), m.num_actions(), m.num_agents()), (9, 3, 3));

    let out = polyagg(&["gen", "simplex", "--l", "3"]);
    assert!(out.status.success());
    let m = polyagg::Momdp::from_json_str(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(m.num_actions(), 3);
}

#[test]
fn aggregate_writes_a_result() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("s.json");
    assert!(polyagg(&["gen", "simplex", "--l", "2", "--out", path(&file)]).status.success());
    let out_dir = dir.path().join("run");
    let out = polyagg(&[
        "aggregate", "--momdp", path(&file), "--rule", "max-quantile", "--seed", "1", "--samples", "5000", "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("result.json")).unwrap();
    let result: polyagg::rules::RuleResult = serde_json::from_str(&text).unwrap();
    assert_eq!(result.rule, "max-quantile");
    assert!(result.diagnostics.wall_time_ms.is_none());
    assert!(String::from_utf8(out.stdout).unwrap().contains("gini"));
}

#[test]
fn experiment_writes_csv_and_json() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    fs::write(
        &spec,
        r#"{"instance": {"kind": "simplex", "l": 2}, "rules": [{"rule": "utilitarian"}, {"rule": "egalitarian"}], "seed": 5, "instances": 2}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("exp");
    let out = polyagg(&["experiment", "--spec", path(&spec), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("metrics.csv").exists());
    assert!(out_dir.join("results.json").exists());
    assert!(String::from_utf8(out.stdout).unwrap().contains("egalitarian"));
}

#[test]
fn bad_input_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.json");
    fs::write(&file, "{\"states\": 1}").unwrap();
    let out_dir = dir.path().join("o");
    let out = polyagg(&["aggregate", "--momdp", path(&file), "--rule", "utilitarian", "--seed", "0", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));

    let good = dir.path().join("s.json");
    assert!(polyagg(&["gen", "simplex", "--l", "2", "--out", path(&good)]).status.success());
    let out = polyagg(&["aggregate", "--momdp", path(&good), "--rule", "condorcet", "--seed", "0", "--out", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
    let out = polyagg(&[
        "aggregate", "--momdp", path(&good), "--rule", "borda-milp", "--epsilon", "0", "--seed", "0", "--samples", "100",
        "--out", path(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn size_limit_exits_with_3() {
    let out = polyagg(&["gen", "warehouse", "--m", "3", "--n", "2", "--seed", "0", "--max-vars", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("too large"));
}
