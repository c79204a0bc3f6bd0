//! End-to-end runs of the command-line binary.

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ancientflow"));
    c.env_remove("ANCIENTFLOW_OUT");
    c
}

fn run(out: &Path, args: &[&str]) -> Output {
    bin().arg("--out").arg(out).args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).expect("stderr is a JSON object")
}

#[test]
fn shrinker_writes_profile_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["shrinker", "--alpha", "0.0625", "--k", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["shrinker_profile.csv", "shrinker.json", "shrinker.svg", "eta.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let meta = read_json(&dir.path().join("shrinker.json"));
    assert!(meta["residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn shrinker_domain_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        ["shrinker", "--alpha", "0.2", "--k", "3"],
        ["shrinker", "--alpha", "0.0625", "--k", "2"],
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2));
        let err = stderr_json(&o);
        assert_eq!(err["exit_code"], 2);
        assert!(err["error"].is_string());
    }
}

#[test]
fn circle_spectrum_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["spectrum", "--alpha", "0.0625", "--shape", "circle"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut reader = csv::Reader::from_path(dir.path().join("eigenvalues.csv")).unwrap();
    let col = reader.headers().unwrap().iter().position(|h| h == "lambda").unwrap();
    let got: Vec<f64> = reader
        .records()
        .take(9)
        .map(|r| r.unwrap()[col].parse().unwrap())
        .collect();
    let alpha = 0.0625;
    let mut expected = vec![-alpha - 1.0];
    for l in 1..=4 {
        let v = alpha * (l * l - 1) as f64 - 1.0;
        expected.extend([v, v]);
    }
    for (g, e) in got.iter().zip(&expected) {
        assert!((g - e).abs() < 1e-8, "{g} vs {e}");
    }
}

#[test]
fn ancient_with_zero_coefficients_is_the_shrinker() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"alpha": 0.0625, "k_or_circle": 3, "a": [0, 0, 0, 0, 0], "N": 128}"#).unwrap();
    let o = run(dir.path(), &["ancient", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&dir.path().join("ancient.json"));
    assert!(report["sup_v"].as_f64().unwrap() < 1e-10);
    for f in ["ancient_layers.csv", "ancient_snapshots.csv", "layer_rates.json"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
}

#[test]
fn circle_entropy_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["entropy", "--shape", "circle", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let value: f64 = String::from_utf8(o.stdout).unwrap().trim().parse().unwrap();
    assert!(value.abs() < 1e-12);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"alpha": 0.0625, "k_or_circle": 3, "a": [], "colour": 1}"#).unwrap();
    let o = run(dir.path(), &["ancient", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "Config");
}

#[test]
fn outputs_are_deterministic_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--n-grid", "128", "spectrum", "--alpha", "0.0625", "--k", "3"];
    let oa = bin().arg("--out").arg(a.path()).arg("--threads").arg("1").args(args).output().unwrap();
    let ob = bin().arg("--out").arg(b.path()).arg("--threads").arg("4").args(args).output().unwrap();
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.status.code(), Some(0));
    for f in ["eigenvalues.csv", "eigenfunctions.csv", "spectrum.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn environment_overrides_out_flag() {
    let flag = tempfile::tempdir().unwrap();
    let env = tempfile::tempdir().unwrap();
    let o = bin()
        .env("ANCIENTFLOW_OUT", env.path())
        .arg("--out")
        .arg(flag.path())
        .args(["entropy", "--shape", "circle", "--alpha", "0.5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(env.path().join("entropy.json").exists());
    assert!(!flag.path().join("entropy.json").exists());
}

#[test]
fn verify_filter_and_fault_injection() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "--filter", "spectrum"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    let report = read_json(&dir.path().join("verify.json"));
    let groups: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["group"].as_str().unwrap())
        .collect();
    assert_eq!(groups.len(), 6);
    assert!(groups.iter().all(|g| *g == "spectrum"));

    let o = run(dir.path(), &["verify", "--filter", "expansion", "--inject-sign-fault"]);
    assert_eq!(o.status.code(), Some(1));
    let report = read_json(&dir.path().join("verify.json"));
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["id"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["expansion"]);
}

#[test]
fn invalid_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--n-grid", "100", "entropy", "--shape", "circle", "--alpha", "1"]);
    assert_eq!(o.status.code(), Some(2));
}
