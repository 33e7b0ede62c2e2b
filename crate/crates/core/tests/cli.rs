mod common;

use common::{survey_positions, survey_prior};
use grf_excursion::calibration::synthetic_dataset;
use grf_excursion::config::RunConfig;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[grid]
nx = 7
ny = 7

[graph]
pitch = 0.125

[survey]
stages = 3
replicates = 2
start_node = 9
strategy = "myopic"
strategies = ["static_east", "naive", "myopic"]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grf-excursion"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_config(dir: &Path) -> String {
    let file = dir.join("small.toml");
    std::fs::write(&file, SMALL).unwrap();
    file.display().to_string()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn pointwise_table_reproduces_reference() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["pointwise-table", "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("24/24"), "{stdout}");
    let table = read(tmp.path(), "pointwise_table.csv");
    assert_eq!(table.lines().count(), 25);
    assert!(table.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn plan_step_agrees_with_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out_dir = tmp.path().join("sim");
    let out = run(&["simulate", "--config", &cfg, "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let trajectory = read(&out_dir, "trajectory.csv");
    let nodes: Vec<&str> = trajectory.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(nodes.len(), 4);
    assert_eq!(nodes[0], "9");

    for stage in 0..3 {
        let snap = out_dir.join(format!("snapshots/stage_{stage:03}.json"));
        let out = run(&["plan-step", "--config", &cfg, path(&snap)]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let table = String::from_utf8_lossy(&out.stdout);
        let chosen: Vec<&str> = table
            .lines()
            .skip(1)
            .filter(|l| l.ends_with(",true"))
            .map(|l| l.split(',').next().unwrap())
            .collect();
        assert_eq!(chosen, vec![nodes[stage + 1]], "stage {stage}:\n{table}");
    }
}

#[test]
fn runs_are_reproducible_from_seed_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    for dir in [&a, &b] {
        let out = run(&["simulate", "--config", &cfg, "--seed", "99", "--out", path(dir)]);
        assert!(out.status.success());
    }
    let manifest = a.join("manifest.toml");
    let out = run(&["simulate", "--config", path(&manifest), "--out", path(&c)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["trajectory.csv", "ep_fields.csv", "truth.csv"] {
        assert_eq!(read(&a, name), read(&b, name), "{name}");
        assert_eq!(read(&a, name), read(&c, name), "{name}");
    }
    let d = tmp.path().join("d");
    assert!(run(&["simulate", "--config", &cfg, "--seed", "100", "--out", path(&d)]).status.success());
    assert_ne!(read(&a, "truth.csv"), read(&d, "truth.csv"));
}

#[test]
fn replicate_writes_jsonl() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = run(&["replicate", "--config", &cfg, "--format", "jsonl", "--out", path(tmp.path())]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read(tmp.path(), "replicate_metrics.jsonl");
    // Two replicates, three strategies, four stages each.
    assert_eq!(rows.lines().count(), 24);
    for line in rows.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["ibv"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(read(tmp.path(), "seeds.jsonl").lines().count(), 2);
}

#[test]
fn calibrate_emits_a_loadable_model() {
    let tmp = tempfile::tempdir().unwrap();
    let data = synthetic_dataset(&survey_prior(), &survey_positions(400, 5), &[0.05, 0.2], 5).unwrap();
    let csv = tmp.path().join("survey.csv");
    data.write_csv(std::fs::File::create(&csv).unwrap()).unwrap();
    let out_dir = tmp.path().join("fit");
    let out = run(&["calibrate", path(&csv), "--out", path(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("nugget"));

    let fragment = out_dir.join("fitted_model.toml");
    let cfg = RunConfig::load(&fragment).unwrap();
    assert!((cfg.model.sigma[1] - 2.4).abs() < 0.6);
    for name in ["variogram.csv", "chi2.csv", "diagnostics.json", "manifest.toml"] {
        assert!(out_dir.join(name).exists(), "{name}");
    }
    let out = run(&["pointwise-table", "--config", path(&fragment), "--out", path(&tmp.path().join("pw"))]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn malformed_csv_reports_line_and_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("bad.csv");
    std::fs::write(
        &csv,
        "t,x,y,depth,temperature,salinity\n0,0.1,0.1,0.5,5.0,24.0\n1,0.2,oops,0.5,5.1,24.1\n",
    )
    .unwrap();
    let out = run(&["calibrate", path(&csv), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn bad_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[survey]\nbogus = 1\n").unwrap();
    let out = run(&["simulate", "--config", path(&cfg), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    let missing = run(&["simulate", "--config", path(&tmp.path().join("nope.toml"))]);
    assert_eq!(missing.status.code(), Some(2));
}
