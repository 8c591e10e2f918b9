use std::path::Path;
use std::process::{Command, Output};

fn msketch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msketch")).args(args).output().expect("spawn msketch")
}

fn ok(args: &[&str]) -> String {
    let out = msketch(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Vec<serde_json::Value> {
    let mut all = vec!["--format", "json"];
    all.extend_from_slice(args);
    serde_json::from_str(&ok(&all)).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn generate_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "exp.csv");
    ok(&["--seed", "3", "gen", "--dataset", "exponential", "--n", "20000", "-o", &data]);
    let rows = json(&["eval", "--input", &data, "--phi", "0.1,0.5,0.9"]);
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r["error"].as_f64().unwrap() < 0.01, "{r}");
    }
}

#[test]
fn generation_is_deterministic() {
    let a = ok(&["--seed", "5", "gen", "--dataset", "gamma", "--shape", "0.5", "--n", "100"]);
    let b = ok(&["--seed", "5", "gen", "--dataset", "gamma", "--shape", "0.5", "--n", "100"]);
    let c = ok(&["--seed", "6", "gen", "--dataset", "gamma", "--shape", "0.5", "--n", "100"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 101);
}

#[test]
fn cube_queries() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "groups.csv");
    let store = path(dir.path(), "cube");
    ok(&["gen", "--dataset", "groups", "--groups", "40", "-o", &data]);
    let ingest = json(&["ingest", "--input", &data, "--store", &store, "--dims", "group,shard"]);
    assert_eq!(ingest[0]["rows"], 40 * 4 * 50);
    assert_eq!(ingest[0]["cells"], 160);

    let all = json(&["query", "quantile", "--store", &store, "--phi", "0.5,0.99"]);
    let one = json(&["query", "quantile", "--store", &store, "--filter", "shard=1", "--phi", "0.5"]);
    assert_eq!(all.len(), 2);
    assert_eq!(one.len(), 1);
    assert!(all[0]["estimate"].as_f64().unwrap() < all[1]["estimate"].as_f64().unwrap());
    assert_eq!(all[0]["low_confidence"], false);

    let above = json(&["query", "threshold", "--store", &store, "--group-by", "group", "--threshold", "1e9"]);
    assert!(above.is_empty());
    let above = json(&["query", "threshold", "--store", &store, "--group-by", "group", "--phi", "0.5", "--threshold", "-1"]);
    assert_eq!(above.len(), 40);
}

#[test]
fn sliding_windows() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "spikes.csv");
    ok(&["gen", "--dataset", "spikes", "--panes", "1200", "-o", &data]);
    let flagged = json(&[
        "window", "--input", &data, "--pane-width", "600", "--window", "14400", "--threshold", "1500",
    ]);
    assert_eq!(flagged.len(), 12 + 23);
    assert!(flagged.iter().all(|w| w["flagged"] == true));
}

#[test]
fn csv_output_and_malformed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "mixed.csv");
    std::fs::write(&data, "value\n1\n2\nnot-a-number\n3\n4\n").unwrap();
    let store = path(dir.path(), "cube");
    let out = ok(&["--format", "csv", "--cell-size", "2", "ingest", "--input", &data, "--store", &store]);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("rows,skipped,cells,store"));
    assert!(lines.next().unwrap().starts_with("4,1,2,"));
}

#[test]
fn errors_exit_nonzero() {
    let out = msketch(&["eval", "--input", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let out = msketch(&["query", "quantile", "--store", &path(dir.path(), "missing")]);
    assert_eq!(out.status.code(), Some(1));

    let out = msketch(&["--k", "0", "gen", "--dataset", "exponential", "--n", "10"]);
    assert!(!out.status.success());
}
