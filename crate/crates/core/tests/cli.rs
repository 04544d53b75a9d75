use std::fs;
use std::process::{Command, Output};

use znn::harness::{self, load};

fn znn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_znn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn list_names_everything() {
    let o = znn(&["list"]);
    assert!(o.status.success());
    let s = stdout(&o);
    for name in [
        "example1",
        "example2",
        "example_opt",
        "scalar",
        "tvpinv",
        "ifd5",
        "bwd3",
    ] {
        assert!(s.contains(name), "missing {name}");
    }
}

#[test]
fn stability_prints_roots() {
    let o = znn(&["stability", "--formula", "ifd5"]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("0.3069"));
    assert!(s.contains("0-stable: yes"));
}

#[test]
fn invalid_configs_exit_2() {
    for args in [
        &["run", "--problem", "nowhere"][..],
        &["run", "--problem", "example1", "--formula", "ifd9"],
        &["run", "--problem", "example1", "--tau", "7"],
        &[
            "run",
            "--problem",
            "example1",
            "--h",
            "0.1",
            "--lambda",
            "1",
        ],
        &["run", "--problem", "example1", "--solver", "tvinv"],
        &["run", "--problem", "example1", "--derivative", "sideways"],
        &["stability", "--formula", "bwd3"],
        &["sweep", "--problem", "example1", "--taus", "0.1"],
    ] {
        assert_eq!(znn(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numerical_failure_exits_3() {
    let o = znn(&[
        "run",
        "--problem",
        "example2",
        "--formula",
        "ifd5",
        "--init",
        "random",
        "--seed",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn run_writes_round_trippable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("out/trace");
    let o = znn(&[
        "run",
        "--problem",
        "example2",
        "--formula",
        "ifd5",
        "--entries",
        "--emit",
        "csv,svg",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(csv.starts_with("k,t,residual,entry_1_1,entry_1_2,entry_2_1,entry_2_2,oracle_1_1"));
    let svg = fs::read_to_string(dir.path().join("out/trace.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(dir.path().join("out/trace_entries.svg").exists());

    let loaded = load(&prefix).unwrap();
    assert_eq!(loaded.rows.len(), 300);
    let again = harness::run(&loaded.config).unwrap();
    assert_eq!(again.rows, loaded.rows);
    assert_eq!(again.columns, loaded.columns);
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "problem = example1\nformula = ifd4_a\ntau = 0.05\nh = 0.2\n",
    )
    .unwrap();
    let prefix = dir.path().join("t");
    let o = znn(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--tau",
        "0.1",
        "--lambda",
        "1",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let loaded = load(&prefix).unwrap();
    assert_eq!(loaded.config.formula, "ifd4_a");
    assert_eq!(loaded.config.tau, 0.1);
    assert_eq!(loaded.config.gain, harness::Gain::Lambda(1.0));
    assert_eq!(loaded.rows.len(), 300);
}

#[test]
fn sweep_reports_orders() {
    let o = znn(&[
        "sweep",
        "--problem",
        "example1",
        "--formula",
        "ifd4_a",
        "--taus",
        "0.1,0.05",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("aggregate p-hat"));
}
