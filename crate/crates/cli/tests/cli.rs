use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn graphbal() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_graphbal"));
    cmd.env_remove("GRAPHBAL_OUT_DIR").env("RUST_LOG", "warn");
    cmd
}

fn triangle() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/triangle")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &[&str] = &[
    "-s", "epochs=2", "-s", "warmup_epochs=1", "-s", "hidden=[4]", "-s", "projection_dim=4", "-s", "steps=2",
    "-s", "lambda=0.5", "-s", "imbalance.majority_train_count=6", "-s", "imbalance.minority_classes=[2]",
];

fn write_sbm(dir: &Path) {
    let o = graphbal()
        .args(["gen-sbm", "--sizes", "20,20,6", "--p-intra", "0.3", "--p-inter", "0.02", "--dim", "4", "--seed", "3"])
        .arg("--out")
        .arg(dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("46 nodes"));
}

#[test]
fn stats_on_the_triangle() {
    let o = graphbal().arg("stats").arg(triangle()).output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("H_edge\t0.3333"), "{text}");
    assert!(text.contains("H_node\t0.3333"), "{text}");
    assert!(text.contains("class 0\t2") && text.contains("class 1\t1"), "{text}");
}

#[test]
fn missing_dataset_exits_with_ingest_code() {
    let o = graphbal().args(["stats", "/nonexistent/graphbal"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("features.csv"));
}

#[test]
fn bad_config_exits_with_config_code() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_sbm(&data);
    let o = graphbal()
        .arg("run")
        .arg("--dataset")
        .arg(&data)
        .args(["-s", "lambda=0"])
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));

    let o = graphbal().args(["run", "-s", "lamda=0.5"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn run_writes_into_the_env_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_sbm(&data);
    let out = tmp.path().join("from-env");
    let o = graphbal()
        .env("GRAPHBAL_OUT_DIR", &out)
        .arg("run")
        .arg("--dataset")
        .arg(&data)
        .args(["--repeat", "2"])
        .args(TINY)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["results.json", "metrics.csv", "epochs_seed0.csv", "epochs_seed1.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn ablate_then_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    write_sbm(&data);
    let out = tmp.path().join("ablate");
    let o = graphbal()
        .arg("ablate")
        .arg("--dataset")
        .arg(&data)
        .args(TINY)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = graphbal().arg("plot").arg(&out).args(["--metric", "acc"]).output().unwrap();
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# ablation\tacc_mean\tacc_std");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(names, ["full", "no-ufm", "no-ase", "no-mse"]);
}

#[test]
fn config_file_with_relative_dataset() {
    let tmp = tempfile::tempdir().unwrap();
    write_sbm(&tmp.path().join("data"));
    let cfg = tmp.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "dataset = \"data\"\noutput_dir = \"unused\"\n[train]\nepochs = 2\nwarmup_epochs = 1\nhidden = [4]\nprojection_dim = 4\nsteps = 2\nlambda = 0.5\n[imbalance]\nminority_classes = [2]\nmajority_train_count = 6\n",
    )
    .unwrap();
    let out = tmp.path().join("out");
    let o = graphbal().arg("run").arg(&cfg).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("results.json").exists());
    assert!(!tmp.path().join("unused").exists());
}
