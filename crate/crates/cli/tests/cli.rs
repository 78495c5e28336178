use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const YES: &str = r#"{"n_bits": 1, "k": 0, "gates": [{"kind": "ONE", "inputs": []}, {"kind": "NOT", "inputs": [0]}]}"#;
const CYCLIC: &str =
    r#"{"n_bits": 1, "k": 0, "gates": [{"kind": "ONE", "inputs": []}, {"kind": "NOT", "inputs": [1]}]}"#;

fn nsqip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsqip"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("JSON on stdout")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn lp_on_tx1_meets_the_bound() {
    let o = nsqip(&["lp", "--instance", "tx:1"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["value"], "15/16");
    assert_eq!(v["paper_bound_value"], "1295/1296");
    assert_eq!(v["bound_satisfied"], true);
    assert_eq!(v["spec"]["instance"], "tx:1");
}

#[test]
fn lp_on_a_yes_file_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "yes.json", YES);
    let out = dir.path().join("lp.json");
    let o = nsqip(&["lp", "--instance", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["value"], "1/1");
    assert_eq!(v["is_yes"], true);
    assert!(Path::new(v["strategy_file"].as_str().unwrap()).exists());
}

#[test]
fn malformed_instance_names_the_gate() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "bad.json", CYCLIC);
    let o = nsqip(&["lp", "--instance", &path]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("gate 1"));
    assert_eq!(code(&nsqip(&["lp", "--instance", "tx:x"])), 2);
}

#[test]
fn qsim_embeddings() {
    let o = nsqip(&["qsim", "--instance", "tx:1", "--strategy", "tx"]);
    assert_eq!(code(&o), 0);
    let a = json(&o)["run"]["acceptance"].as_f64().unwrap();
    assert!((a - 63.0 / 64.0).abs() < 1e-9);

    let o = nsqip(&["qsim", "--instance", "tx:1", "--strategy", "lp-optimal"]);
    let a = json(&o)["run"]["acceptance"].as_f64().unwrap();
    assert!((a - (1.0 - (1.0 / 16.0) / 4.0)).abs() < 1e-9);

    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "yes.json", YES);
    let o = nsqip(&["qsim", "--instance", &path, "--strategy", "honest"]);
    assert_eq!(code(&o), 0);
    let a = json(&o)["run"]["acceptance"].as_f64().unwrap();
    assert!((a - 1.0).abs() < 1e-9);
}

#[test]
fn qsim_input_and_cap_errors() {
    assert_eq!(code(&nsqip(&["qsim", "--instance", "tx:1", "--qubit-cap", "10"])), 3);
    assert_eq!(code(&nsqip(&["qsim", "--instance", "tx:1", "--k", "3"])), 2);
    assert_eq!(
        code(&nsqip(&["qsim", "--instance", "random:1,2", "--strategy", "tx"])),
        2
    );
    assert_eq!(
        code(&nsqip(&["qsim", "--instance", "tx:1", "--out", "/no/such/dir/x.json"])),
        2
    );
}

#[test]
fn verify_lemmas_pass_and_self_test() {
    let o = nsqip(&["verify-lemmas", "--trials", "40", "--jobs", "3"]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert_eq!(v["all_passed"], true);
    assert_eq!(v["suites"].as_array().unwrap().len(), 3);

    let o = nsqip(&["verify-lemmas", "--trials", "0"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("vacuous"));

    let o = nsqip(&["verify-lemmas", "--trials", "5", "--negate", "gentle-measurement"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("counterexample"));
    let v = json(&o);
    assert!(v["suites"][2]["counterexample"].is_string());
}

#[test]
fn report_pipeline_on_tx1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let at = |name: &str| d.join(name).display().to_string();
    assert_eq!(code(&nsqip(&["lp", "--instance", "tx:1", "--out", &at("lp.json")])), 0);
    assert_eq!(
        code(&nsqip(&[
            "qsim",
            "--instance",
            "tx:1",
            "--strategy",
            "lp-optimal",
            "--out",
            &at("qsim.json")
        ])),
        0
    );
    let o = nsqip(&[
        "seesaw",
        "--instance",
        "tx:1",
        "--strategy",
        "tx",
        "--iters",
        "2",
        "--out",
        &at("seesaw.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let first = nsqip(&["report", "--input", d.to_str().unwrap()]);
    assert_eq!(code(&first), 0);
    let csv = String::from_utf8(first.stdout.clone()).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "1");
    let exact = |s: &str| {
        let (n, d) = s.split_once('/').unwrap();
        n.parse::<f64>().unwrap() / d.parse::<f64>().unwrap()
    };
    let (lp, tx, lower) = (exact(row[1]), exact(row[2]), exact(row[3]));
    let (honest, seesaw, upper) = (
        row[4].parse::<f64>().unwrap(),
        row[5].parse::<f64>().unwrap(),
        exact(row[6]),
    );
    assert!(lower <= tx && tx <= lp);
    assert!(honest <= seesaw + 1e-12 && seesaw <= upper);
    assert!((honest - (1.0 - (1.0 - lp) / 4.0)).abs() < 1e-9);
    assert_eq!(csv.lines().nth(2).unwrap().split(',').nth(1), Some("NA"));

    let second = nsqip(&["report", "--input", d.to_str().unwrap()]);
    assert_eq!(first.stdout, second.stdout);

    let empty = tempfile::tempdir().unwrap();
    assert_eq!(code(&nsqip(&["report", "--input", empty.path().to_str().unwrap()])), 2);
}

#[test]
fn seesaw_random_restarts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "yes.json", YES);
    let run = || {
        let o = nsqip(&[
            "seesaw",
            "--instance",
            &path,
            "--restarts",
            "2",
            "--iters",
            "20",
            "--seed",
            "5",
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        o.stdout
    };
    assert_eq!(run(), run());
    assert_eq!(code(&nsqip(&["seesaw", "--instance", &path])), 2);
}
