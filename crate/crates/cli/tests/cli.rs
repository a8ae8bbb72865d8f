use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BASE: &str = "\
schema = 1
name = t
dataset = synthetic
synthetic_classes = 4
synthetic_dim = 6
synthetic_per_class = 20
n_clients = 4
rounds = 3
d1 = 4
d2 = 16
global_hidden = 8
local_hidden = 10;6
";

fn fedmrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmrl"))
        .args(args)
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("exp.cfg");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> String {
    let out = fedmrl(args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn summary(dir: &Path, stem: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.summary.json"))).unwrap())
        .unwrap()
}

#[test]
fn standalone_reports_zero_communication() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), BASE);
    let out = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "standalone",
        "--out",
        out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(out.join("t.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "round,avg_acc,mean_loss,uplink,downlink,flops,client_0,client_1,client_2,client_3"
    );
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!((cols[3], cols[4]), ("0", "0"));
    }
}

#[test]
fn d1_sweep_names_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), BASE);
    let out = dir.path().join("out");
    let stdout = run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep",
        "d1=4,8,16",
        "--out",
        out.to_str().unwrap(),
    ]);
    for d1 in [4, 8, 16] {
        assert!(out.join(format!("t_d1-{d1}.csv")).exists());
        assert_eq!(summary(&out, &format!("t_d1-{d1}"))["d1"], d1);
    }
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn ablation_pair_shares_partition() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), BASE);
    let out = dir.path().join("out");
    run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "fedmrl,no-mrl",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    let a = summary(&out, "t_mode-fedmrl");
    let b = summary(&out, "t_mode-no-mrl");
    assert_eq!(a["partition_hash"], b["partition_hash"]);
    assert_eq!(a["seed"], 9);
    assert_eq!(a["rounds"], b["rounds"]);
    assert_ne!(a["total_flops"], b["total_flops"]);
}

#[test]
fn schema_violations_exit_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &format!("{BASE}momentum = 0.9\n"));
    let out = fedmrl(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("momentum") && err.contains("line 13"), "{err}");

    let cfg = write_cfg(dir.path(), &BASE.replace("name = t\n", ""));
    let out = fedmrl(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("name"));

    let out = fedmrl(&[
        "run",
        "--config",
        dir.path().join("missing.cfg").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_dataset_from_generator() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("blobs.csv");
    run_ok(&[
        "gen-synthetic",
        "--classes",
        "3",
        "--dim",
        "5",
        "--per-class",
        "20",
        "--out",
        data.to_str().unwrap(),
    ]);
    let text = BASE.replace(
        "dataset = synthetic",
        "dataset = csv\ndata_path = blobs.csv\nstandardize = true",
    );
    let cfg = write_cfg(dir.path(), &text);
    let stdout = run_ok(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep",
        "classes_per_client=1,2",
    ]);
    assert!(stdout.contains("t_classes_per_client-1"));
    assert!(dir.path().join("out/t_classes_per_client-2.csv").exists());
}
