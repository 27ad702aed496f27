use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn contextlab<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_contextlab")).args(args).output().expect("binary runs")
}

/// Whitespace-separated arguments followed by paths.
fn args(line: &str, paths: &[&Path]) -> Vec<String> {
    line.split_whitespace().map(String::from).chain(paths.iter().map(|p| p.display().to_string())).collect()
}

const NOISY_CHSH: &str = "run --experiment chsh_noise2 --noise default --set chsh_product --state x_plus_zero --trials 2000";

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn ks_plain_is_exactly_six() {
    let v = json(&contextlab(&["run", "--experiment", "ks_plain", "--state", "fig2_psi", "--seed", "7"]));
    assert_eq!(v["result"]["chi"].as_f64(), Some(6.0));
    assert_eq!(v["provenance"]["source"], "exact");
    assert_eq!(v["provenance"]["seed"], 7);
    assert!(v["provenance"]["n_trials"].is_null());
    assert!(v["correction_terms"].as_object().unwrap().is_empty());
    assert!(!v["anchor"].as_str().unwrap().is_empty());
}

#[test]
fn tables_write_csv_in_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = contextlab(&args("run --experiment tables --noise default --trials 1100 --seed 7 --out", &[dir.path()]));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = String::from_utf8(read(&dir.path().join("tables.csv"))).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "table,measurement,quantity,2,3,4,5");
    assert_eq!(lines.len(), 1 + 2 * 4 * 2);
    for line in lines.iter().filter(|l| l.contains(",value,")) {
        for cell in line.split(',').skip(3).filter(|c| !c.is_empty()) {
            let x: f64 = cell.parse().unwrap();
            assert!((0.7..=1.0).contains(&x), "{line}");
        }
    }
    let v: Value = serde_json::from_slice(&read(&dir.path().join("tables.json"))).unwrap();
    assert_eq!(v["provenance"]["source"], "monte_carlo");
    assert_eq!(v["provenance"]["n_trials"], 1100);
    assert_eq!(v["noise"]["effective_fields"][0], "dephasing_idle");
}

#[test]
fn locking_model_violates_corrected_chsh() {
    let v = json(&contextlab(&["run", "--experiment", "chsh_noise2", "--model", "locking", "--seed", "7"]));
    assert_eq!(v["result"]["chi"].as_f64(), Some(4.0));
    assert_eq!(v["result"]["verdict"], "violates");
    let ledger = v["correction_terms"].as_object().unwrap();
    assert_eq!(ledger.len(), 4);
    assert!(ledger.values().all(|t| t["value"].as_f64() == Some(0.0)));
    assert_eq!(v["system"]["kind"], "hidden_variable");
}

#[test]
fn list_names_every_recipe_with_its_formula() {
    let out = contextlab(&["list"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["ks_plain", "kcbs_epsilon", "chsh_noise2", "tables", "headlines"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id}");
    }
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len() % 2, 0);
    for pair in lines.chunks(2) {
        assert!(pair[1].trim().len() > 5, "{} has no formula", pair[0]);
    }
}

#[test]
fn identical_seeds_give_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = contextlab(&args(&format!("{NOISY_CHSH} --seed 11 --out"), &[dir.path()]));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["chsh_noise2.json", "chsh_noise2.csv"] {
        assert_eq!(read(&a.path().join(name)), read(&b.path().join(name)), "{name}");
    }
    let other = json(&contextlab(&args(&format!("{NOISY_CHSH} --seed 12"), &[])));
    let first: Value = serde_json::from_slice(&read(&a.path().join("chsh_noise2.json"))).unwrap();
    assert_ne!(first["result"]["chi"], other["result"]["chi"]);
}

#[test]
fn config_file_supplies_fields_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.json");
    std::fs::write(&path, r#"{"experiment": "ks_plain", "state": "singlet", "seed": 3, "noise": "ideal"}"#).unwrap();
    let v = json(&contextlab(&["run", "--config", path.to_str().unwrap(), "--seed", "4"]));
    assert_eq!(v["provenance"]["seed"], 4);
    assert_eq!(v["system"]["kind"], "noisy_ion");
    assert!((v["result"]["chi"].as_f64().unwrap() - 6.0).abs() < 1e-9);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad_noise = dir.path().join("noise.json");
    std::fs::write(&bad_noise, r#"{"detection_flip": 0.9}"#).unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run", "--experiment", "no_such_recipe", "--seed", "1"],
        vec!["run", "--experiment", "ks_plain"],
        vec!["run", "--experiment", "ks_plain", "--state", "nowhere", "--seed", "1"],
        vec!["run", "--experiment", "chsh_noise2", "--model", "nobody", "--seed", "1"],
        vec!["run", "--experiment", "kcbs_plain", "--state", "phi_plus", "--seed", "1"],
        vec!["run", "--experiment", "ks_plain", "--noise", bad_noise.to_str().unwrap(), "--seed", "1"],
        vec!["run", "--experiment", "chsh_universal", "--seed", "1"],
        vec!["run", "--experiment", "chsh_noise2", "--model", "locking", "--model-params", "{oops", "--seed", "1"],
        vec!["run", "--seed", "notanumber"],
    ];
    for args in cases {
        let out = contextlab(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn runtime_errors_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let out_dir = blocker.join("sub");
    let out = contextlab(&["run", "--experiment", "ks_plain", "--seed", "1", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn inspect_prints_catalog_documents() {
    let v = json(&contextlab(&["inspect", "set", "mermin_peres"]));
    assert_eq!(v["dim"], 4);
    assert_eq!(v["observables"].as_array().unwrap().len(), 9);
    let v = json(&contextlab(&["inspect", "state", "max_mixed_2q"]));
    assert_eq!(v["name"], "max_mixed_2q");
    let out = contextlab(&["inspect", "set"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("kcbs_pentagram"));
}

#[test]
fn thread_cap_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_contextlab"))
        .args(["run", "--experiment", "ks_plain", "--seed", "1"])
        .env("CONTEXTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_contextlab"))
        .args(["run", "--experiment", "ks_plain", "--seed", "1"])
        .env("CONTEXTLAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
}
