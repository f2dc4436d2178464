use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn nof1(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nof1")).args(args).output().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_lists_six_balanced_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = nof1(&["design", "--protocol", path(&fixture("exercise.protocol")), "--enumerate", "--balanced", "--out", path(&out)]);
    assert!(o.status.success());
    let list = fs::read_to_string(out.join("sequences.txt")).unwrap();
    let seqs: Vec<&str> = list.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(seqs, ["A,A,B,B", "A,B,A,B", "A,B,B,A", "B,A,A,B", "B,A,B,A", "B,B,A,A"]);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "design");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn meta_on_one_participant_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("s");
    let o = nof1(&[
        "simulate", "--protocol", path(&fixture("exercise.protocol")), "--params", path(&fixture("params.json")),
        "--participants", "1", "--out", path(&sim),
    ]);
    assert!(o.status.success());
    let o = nof1(&["meta", "--data", path(&sim.join("data.csv")), "--out", path(&tmp.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["message"].as_str().unwrap().contains("need ≥ 2 individuals"));
    assert_eq!(err["exit_code"], 2);
}

#[test]
fn simulated_data_feeds_analyze() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("s");
    nof1(&[
        "simulate", "--protocol", path(&fixture("exercise.protocol")), "--params", path(&fixture("params.json")),
        "--participants", "2", "--out", path(&sim),
    ]);
    let out = tmp.path().join("a");
    let o = nof1(&["analyze", "--data", path(&sim.join("data.csv")), "--participant", "P001", "--method", "gls", "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("gls.json")).unwrap()).unwrap();
    assert_eq!(fit["names"][1], "delta");

    // two participants and no choice is an input error
    let o = nof1(&["analyze", "--data", path(&sim.join("data.csv")), "--out", path(&tmp.path().join("b"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("one_arm.csv");
    let mut csv = String::from("participant_id,block,period,within_period_index,time_index,treatment_id,value,weight\n");
    for t in 0..6 {
        csv.push_str(&format!("P1,1,{},{},{t},A,{}.5,1\n", t / 3 + 1, t % 3 + 1, t));
    }
    fs::write(&data, csv).unwrap();
    let o = nof1(&["analyze", "--data", path(&data), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn refuses_non_empty_output_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let protocol = fixture("exercise.protocol");
    let args = |extra: Option<&str>| {
        let mut a = vec!["design", "--protocol", path(&protocol), "--out", path(&out)];
        a.extend(extra);
        nof1(&a)
    };
    assert!(args(None).status.success());
    assert_eq!(args(None).status.code(), Some(2));
    assert!(args(Some("--force")).status.success());
}

#[test]
fn malformed_input_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.protocol");
    fs::write(&bad, "{ not json").unwrap();
    let o = nof1(&["design", "--protocol", path(&bad), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(nof1(&["frobnicate"]).status.code() == Some(2));
}
