use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use memostrange::cli_io::{read_field_dump, read_series_csv};
use serde_json::Value;

const PARAMS: &str = r#""params": {"n": 3, "C0": 1.0, "lambda": 1.0, "alpha": 1.0, "beta": 1.0}"#;

fn run(args: &[&str], config: &str, dir: &Path) -> Output {
    run_env(args, config, dir, None)
}

fn run_env(args: &[&str], config: &str, dir: &Path, threads: Option<&str>) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memostrange"));
    cmd.args(args).arg("--config").arg(&path).arg("--out").arg(dir.join("out"));
    cmd.env_remove("MEMOSTRANGE_THREADS");
    if let Some(t) = threads {
        cmd.env("MEMOSTRANGE_THREADS", t);
    }
    cmd.output().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_series_fields_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{{PARAMS}, "grid": {{"cells_per_axis": 8}}, "dt": 0.05, "T": 0.2, "output_stride": 2,
            "dump_fields": true,
            "sources": {{"f": {{"kind": "constant", "value": 1.0}}, "g": {{"kind": "constant", "value": 0.0}}}},
            "probes": [{{"kind": "point", "field": "u", "at": [0.5, 0.5, 0.5]}},
                       {{"kind": "norm", "field": "v", "reduce": "max"}}]}}"#
    );
    let out = run(&["solve"], &config, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("out");
    let text = fs::read_to_string(od.join("series.csv")).unwrap();
    assert!(text.starts_with("t,u_p0,v_max\n"), "{text}");
    let series = read_series_csv::<f64>(od.join("series.csv")).unwrap();
    assert_eq!(series.times.len(), 3);
    assert!(series.rows.iter().skip(1).all(|r| r[0] > 0.0 && r[1] > 0.0));
    let gp = fs::read_to_string(od.join("series.gp")).unwrap();
    assert!(gp.contains("set terminal svg") && gp.contains("series.svg"));
    assert!(gp.contains("using 1:2") && gp.contains("using 1:3"));
    let dump = fs::read_to_string(od.join("field_4.csv")).unwrap();
    assert!(dump.starts_with("# dims=7x7x7 h=1.25e-1 t=2e-1\n"), "{}", dump.lines().next().unwrap());
    let field = read_field_dump::<f64>(od.join("field_0.csv")).unwrap();
    assert_eq!(field.values.len(), 343);
    assert_eq!(field.dims, vec![7, 7, 7]);
    assert_eq!(json(od.join("summary.json"))["steps"], 4);
}

#[test]
fn unknown_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = r#"{"params": {"n": 3, "C0": 1.0, "lamda": 1.0, "alpha": 1.0, "beta": 1.0}}"#;
    let out = run(&["solve"], config, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key: lamda"));
}

#[test]
fn negative_dt_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["solve"], &format!(r#"{{{PARAMS}, "dt": -0.1}}"#), dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dt must be positive"));
}

#[test]
fn bad_arguments_and_thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_memostrange")).arg("solve").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_memostrange")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["solve"], "{not json", dir.path());
    assert_eq!(out.status.code(), Some(2));
    let cell = format!(r#"{{{PARAMS}}}"#);
    let out = run_env(&["cell"], &cell, dir.path(), Some("zero"));
    assert_eq!(out.status.code(), Some(2));
    let out = run_env(&["cell"], &cell, dir.path(), Some("1"));
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn cell_and_sweep_reports() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["cell"], &format!(r#"{{{PARAMS}}}"#), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("out");
    assert!(fs::read_to_string(od.join("cell.csv")).unwrap().starts_with("r,w_num,w_exact\n"));
    assert_eq!(json(od.join("cell.json"))["pass"], true);

    let out = run(&["cell-sweep"], &format!(r#"{{{PARAMS}}}"#), dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = json(od.join("cell_sweep.json"));
    let r = &report["reports"][0];
    assert_eq!(r["resolutions"].as_array().unwrap().len(), 4);
    assert!((r["fitted_order"].as_f64().unwrap() - 2.0).abs() < 0.1);
    assert_eq!(report["pass"], true);
    let csv = fs::read_to_string(od.join("cell_sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn kernel_report_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["kernel"], &format!(r#"{{{PARAMS}}}"#), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("out");
    let report = json(od.join("kernel_report.json"));
    assert_eq!(report["reports"].as_array().unwrap().len(), 6);
    for r in report["reports"].as_array().unwrap() {
        for key in ["resolutions", "errors", "fitted_order", "pass"] {
            assert!(r.get(key).is_some(), "{key}");
        }
    }
    assert!(fs::read_to_string(od.join("kernel.csv")).unwrap().starts_with("t,v_ode,v_conv,abs_diff\n"));
}

#[test]
fn compare_on_a_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{{PARAMS}, "grid": {{"cells_per_axis": 6}}, "dt": 0.05, "T": 0.5, "seed": 11,
            "study": {{"trials": 3}}}}"#
    );
    let out = run(&["compare"], &config, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let od = dir.path().join("out");
    let summary = json(od.join("compare.json"));
    assert_eq!(summary["pass"], true);
    assert!(summary["max_u"].as_f64().unwrap() <= 1e-10);
    let csv = fs::read_to_string(od.join("compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(csv.lines().nth(1).unwrap().starts_with("11,"));
}

#[test]
fn mms_exit_code_tracks_pass_flag() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(r#"{{{PARAMS}, "grid": {{"cells_per_axis": 4}}, "dt": 0.0625, "T": 0.5}}"#);
    let out = run(&["mms"], &config, dir.path());
    let report = json(dir.path().join("out").join("mms.json"));
    let pass = report["pass"].as_bool().unwrap();
    assert_eq!(out.status.code(), Some(if pass { 0 } else { 1 }));
    assert_eq!(report["reports"].as_array().unwrap().len(), 2);
}
