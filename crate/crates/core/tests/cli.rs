use std::path::{Path, PathBuf};
use std::process::Command;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn fairgraph(out: &Path, args: &[&str]) -> String {
    let output = Command::new(env!("CARGO_BIN_EXE_fairgraph"))
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "fairgraph {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

#[test]
fn pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let data = repo().join("data/german_credit.csv");
    let schema = repo().join("data/german_credit.schema.toml");

    let stdout = fairgraph(
        out,
        &["ingest", "--data", data.to_str().unwrap(), "--schema", schema.to_str().unwrap()],
    );
    assert!(stdout.contains("1000 nodes"), "{stdout}");

    let nodes = out.join("graph.nodes.csv");
    let edges = out.join("graph.edges.csv");
    let stdout = fairgraph(
        out,
        &[
            "--seed",
            "4",
            "prepare",
            "--nodes",
            nodes.to_str().unwrap(),
            "--edges",
            edges.to_str().unwrap(),
            "--method",
            "stratified",
        ],
    );
    assert!(stdout.contains("groups 310 / 310, bad 109 / 109, good 201 / 201"), "{stdout}");
    assert!(out.join("stratified-s4.provenance.json").exists());

    fairgraph(
        out,
        &[
            "--seed",
            "4",
            "train",
            "--nodes",
            out.join("stratified-s4.nodes.csv").to_str().unwrap(),
            "--edges",
            out.join("stratified-s4.edges.csv").to_str().unwrap(),
        ],
    );
    let predictions = out.join("stratified-s4.predictions.csv");
    let text = std::fs::read_to_string(&predictions).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 621);

    let stdout = fairgraph(out, &["evaluate", "--predictions", predictions.to_str().unwrap()]);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines[0], "metric,male,female,delta");
    assert!(lines[1].starts_with("statistical_parity,"));
    assert!(out.join("stratified-s4.report.json").exists());
}

#[test]
fn run_experiment_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let config = repo().join("configs/experiment.toml");
    let dir_config = dir.path().join("small.toml");
    let text = std::fs::read_to_string(&config)
        .unwrap()
        .replace("../data/", &format!("{}/", repo().join("data").display()))
        .replace("epochs = 200", "epochs = 20");
    std::fs::write(&dir_config, text).unwrap();
    let cfg = dir_config.to_str().unwrap();

    let stdout = fairgraph(out, &["--config", cfg, "--repeats", "1", "run-experiment"]);
    assert!(stdout.contains("group sizes"), "{stdout}");
    assert!(stdout.contains("fairest by statistical_parity"), "{stdout}");
    assert!(out.join("bundle.json").exists());

    let records = fairgraph(out, &["report", "--format", "records"]);
    assert!(records.starts_with("# config_hash: "), "{records}");
    assert!(records.contains("\nmethod,metric,group,mean,std,defined,undefined\n"), "{records}");
    let table = fairgraph(out, &["report", "--format", "table"]);
    assert!(table.contains("690 / 310"), "{table}");
    let plot = fairgraph(out, &["report", "--format", "plot-data"]);
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 1 + 7 * 4);
}

#[test]
fn rejects_unknown_method() {
    let output = Command::new(env!("CARGO_BIN_EXE_fairgraph"))
        .args(["prepare", "--nodes", "x", "--edges", "y", "--method", "oversample"])
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("oversample"));
}
