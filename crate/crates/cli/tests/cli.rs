use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use choiceleak::RunConfig;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_choiceleak"))
}

fn run(args: &[&str]) -> Output {
    bin().env("CHOICELEAK_THREADS", "2").args(args).output().expect("spawn choiceleak")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic configuration so sweeps stay quick.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("small.json");
    fs::write(
        &path,
        r#"{
  "seed": 7,
  "dataset": {"synthetic": {"n_pool": 400, "n_outside": 200, "dim": 4, "shift": 1.5}},
  "window": {"size": 200, "interval": 20}
}"#,
    )
    .unwrap();
    path
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn simulate_writes_outputs_and_echoes_ratio() {
    let t = tempfile::tempdir().unwrap();
    ok(&["simulate", "--out", s(t.path())]);
    for f in ["dataset.bin", "dataset.csv", "groundtruth.csv", "manifest.json"] {
        assert!(t.path().join(f).is_file(), "missing {f}");
    }
    let m = manifest(t.path());
    assert_eq!(m["simulate"]["config"]["ratio"], 0.4);
    assert_eq!(m["simulate"]["config"]["seed"], 0);
}

#[test]
fn included_fraction_matches_ratio() {
    let t = tempfile::tempdir().unwrap();
    ok(&["simulate", "--out", s(t.path()), "--ratio", "0.4"]);
    let gt = fs::read_to_string(t.path().join("groundtruth.csv")).unwrap();
    let mut lines = gt.lines();
    assert_eq!(lines.next(), Some("id,tag"));
    let (mut inc, mut exc) = (0usize, 0usize);
    for line in lines {
        match line.split(',').nth(1).unwrap() {
            "included" => inc += 1,
            "excluded" => exc += 1,
            _ => {}
        }
    }
    assert_eq!(inc + exc, 2000);
    assert_eq!(inc as f64 / (inc + exc) as f64, 0.4);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        ok(&["simulate", "--out", s(dir), "--seed", "11"]);
        ok(&["attack", "--out", s(dir), "--seed", "11", "--mode", "black"]);
        ok(&["eval", "--out", s(dir), "--seed", "11", "--mode", "black"]);
    }
    for f in [
        "dataset.bin",
        "dataset.csv",
        "groundtruth.csv",
        "scores.csv",
        "scores.json",
        "ledger.csv",
        "plan.json",
        "report_tm.json",
        "report_sp.json",
        "roc_tm.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
}

#[test]
fn black_box_runs_with_default_k() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["attack", "--config", s(&cfg), "--out", s(&out), "--mode", "black"]);
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    assert!(ledger.starts_with("id,t,n,dbar\n"));
    assert_eq!(ledger.lines().count(), 601);
    let m = manifest(&out);
    assert_eq!(m["attack"]["config"]["attack"]["k_clusters"], 5);
}

#[test]
fn side_ledger_matches_oracle_on_fixture() {
    let t = tempfile::tempdir().unwrap();
    let scores = [0.5, 0.1, 0.9, 0.3, 0.7, 0.2, 0.8, 0.4];
    let mut csv = String::from("id,feat_0,score\n");
    for (i, v) in scores.iter().enumerate() {
        csv.push_str(&format!("{i},{i}.0,{v}\n"));
    }
    let data = t.path().join("fixture.csv");
    fs::write(&data, csv).unwrap();
    let cfg = t.path().join("cfg.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"dataset": {{"file": {{"path": "{}", "n_pool": 8}}}},
  "window": {{"size": 4, "interval": 2, "shuffle": false}},
  "ratio": 0.5}}"#,
            s(&data)
        ),
    )
    .unwrap();
    let out = t.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["attack", "--config", s(&cfg), "--out", s(&out), "--mode", "side"]);

    // Oracle: windows over ids 0..8 in order, stride 2, size 4; each window
    // keeps the two lowest scores.
    let mut t_expected = [0u32; 8];
    for i in 0..4 {
        let mut w: Vec<usize> = (0..4).map(|j| (i * 2 + j) % 8).collect();
        w.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
        for &id in &w[..2] {
            t_expected[id] += 1;
        }
    }
    let ledger = fs::read_to_string(out.join("ledger.csv")).unwrap();
    let mut lines = ledger.lines();
    assert_eq!(lines.next(), Some("id,t,n"));
    for (id, line) in lines.enumerate() {
        assert_eq!(line, format!("{id},{},2", t_expected[id]));
    }
}

#[test]
fn unknown_mode_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    let out = run(&["attack", "--out", s(t.path()), "--mode", "telepathy"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("telepathy"));
}

#[test]
fn eval_writes_both_reports_with_one_tpr_column() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["attack", "--config", s(&cfg), "--out", s(&out)]);
    let table = ok(&["eval", "--config", s(&cfg), "--out", s(&out), "--fpr", "0.05"]);
    for stem in ["tm", "sp"] {
        let r: Value =
            serde_json::from_str(&fs::read_to_string(out.join(format!("report_{stem}.json"))).unwrap())
                .unwrap();
        assert_eq!(r["tpr_at"].as_object().unwrap().len(), 1);
        let auc = r["auc"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&auc));
        assert!(out.join(format!("roc_{stem}.csv")).is_file());
    }
    let header = table.lines().next().unwrap();
    assert_eq!(header.matches("TPR@").count(), 1);
    assert_eq!(table.lines().count(), 3);
    assert_eq!(ok(&["report", "--out", s(&out)]), table);
}

#[test]
fn missing_ground_truth_exits_two_with_path() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    ok(&["attack", "--config", s(&cfg), "--out", s(&out)]);
    fs::remove_file(out.join("groundtruth.csv")).unwrap();
    let res = run(&["eval", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("groundtruth.csv"));
}

#[test]
fn sweep_ratio_has_one_row_per_value_and_surface() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    let csv = ok(&[
        "sweep", "--config", s(&cfg), "--out", s(&out), "--axis", "ratio", "--values",
        "0.2,0.4,0.6,0.8",
    ]);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("value,surface,auc,tpr@0.05"));
    assert_eq!(lines.count(), 8);
    assert_eq!(fs::read_to_string(out.join("sweep_ratio.csv")).unwrap(), csv);
}

#[test]
fn sweep_k_clusters_range() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    let csv = ok(&[
        "sweep", "--config", s(&cfg), "--out", s(&out), "--mode", "black", "--axis",
        "k_clusters", "--values", "2..10",
    ]);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.iter().filter(|r| r.contains(",TM,")).count(), 9);
    assert_eq!(rows.iter().filter(|r| r.contains(",SP,")).count(), 9);
}

#[test]
fn k_clusters_sweep_needs_black_mode() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let res = run(&[
        "sweep", "--config", s(&cfg), "--out", s(t.path()), "--mode", "side", "--axis",
        "k_clusters", "--values", "2,3",
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn manifest_config_round_trips() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out), "--seed", "3"]);
    let m = manifest(&out);
    let text = serde_json::to_string(&m["simulate"]["config"]).unwrap();
    let parsed = RunConfig::from_json(&text).unwrap();
    assert_eq!(parsed.seed, 3);
    assert!(parsed.window.shuffle_seed.is_some());
    // Feeding the recorded config back reproduces the same run.
    let replay = t.path().join("replay.json");
    fs::write(&replay, parsed.to_json().unwrap()).unwrap();
    let out2 = t.path().join("o2");
    ok(&["simulate", "--config", s(&replay), "--out", s(&out2)]);
    assert_eq!(
        fs::read(out.join("groundtruth.csv")).unwrap(),
        fs::read(out2.join("groundtruth.csv")).unwrap()
    );
    assert_eq!(parsed, parsed.resolved());
}

#[test]
fn flags_override_config() {
    let t = tempfile::tempdir().unwrap();
    let cfg = small_config(t.path());
    let out = t.path().join("o");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out), "--ratio", "0.25"]);
    let m = manifest(&out);
    assert_eq!(m["simulate"]["config"]["ratio"], 0.25);
    assert_eq!(m["simulate"]["config"]["seed"], 7);
    assert_eq!(m["simulate"]["counts"]["included"], 100);
}
