use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

use sechyp::equilibria::EquilibriumReport;
use sechyp::expansive::{ChaosReport, ExpansivenessReport};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sechyp"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str], out: &Path) -> (i32, String) {
    let o = bin()
        .args(["run"])
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap();
    (
        o.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&o.stderr).into_owned(),
    )
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn classify_lorenz_finds_three_equilibria() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("lorenz.json");
    let (code, err) = run(
        &["classify", "--config", cfg.to_str().unwrap(), "--d-s", "1"],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let v = read_json(&dir.path().join("classify.json"));
    assert_eq!(v["pass"], true);
    let eq: Vec<EquilibriumReport> =
        serde_json::from_value(v["report"]["equilibria"].clone()).unwrap();
    assert_eq!(eq.len(), 3);
    let origin = eq
        .iter()
        .find(|e| e.position.iter().all(|c| c.abs() < 1e-9))
        .unwrap();
    assert!(origin.lorenz_like);
    assert_eq!(origin.index, 2);
    assert_eq!(eq.iter().filter(|e| e.lorenz_like).count(), 1);
}

#[test]
fn center_control_exits_with_counterexample_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("center3d.json");
    let (code, err) = run(
        &[
            "expansive",
            "--config",
            cfg.to_str().unwrap(),
            "--eps",
            "0.5",
            "--pairs",
            "8",
        ],
        dir.path(),
    );
    assert_eq!(code, 1, "{err}");
    let v = read_json(&dir.path().join("expansive.json"));
    let r: ExpansivenessReport = serde_json::from_value(v["report"].clone()).unwrap();
    assert!(!r.counterexamples.is_empty());
    assert!(r.per_delta.iter().all(|s| s.counterexamples > 0));
    for f in [
        "expansive_counterexamples.json",
        "counterexample_0_x.csv",
        "counterexample_0_y.csv",
        "counterexample.gp",
    ] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let csv = std::fs::read_to_string(dir.path().join("counterexample_0_x.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,x3\n"));
}

#[test]
fn malformed_configs_exit_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let cases = [
        "{ not json",
        r#"{"params":{"sigma":10,"rho":28,"beta":2.6}}"#,
        r#"{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6},"sedd":1}"#,
        r#"{"kind":"lorenz","params":{"sigma":10,"rho":28}}"#,
        r#"{"kind":"lorenz","params":{"sigma":10,"rho":28,"beta":2.6},"tol":1}"#,
    ];
    for text in cases {
        std::fs::write(&bad, text).unwrap();
        let (code, _) = run(&["classify", "--config", bad.to_str().unwrap()], dir.path());
        assert_eq!(code, 2, "config {text}");
    }
    let cfg = config("lorenz.json");
    let (code, _) = run(&["nonsense", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code, 2);
    let (code, _) = run(
        &[
            "expansive",
            "--config",
            cfg.to_str().unwrap(),
            "--delta-grid",
            "0.1,abc",
        ],
        dir.path(),
    );
    assert_eq!(code, 2);
    let (code, _) = run(
        &["classify", "--config", "/nonexistent/config.json"],
        dir.path(),
    );
    assert_eq!(code, 2);
    let center = config("center3d.json");
    let (code, err) = run(&["trap", "--config", center.to_str().unwrap()], dir.path());
    assert_eq!(code, 2, "{err}");
}

#[test]
fn thread_variable_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("sink.json");
    let o = bin()
        .args(["run", "chaos", "--config", cfg.to_str().unwrap(), "--out"])
        .arg(dir.path())
        .env("SECHYP_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sink_control_has_no_chaos_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("sink.json");
    let (code, err) = run(
        &["chaos", "--config", cfg.to_str().unwrap(), "--threads", "1"],
        dir.path(),
    );
    assert_eq!(code, 1, "{err}");
    let v = read_json(&dir.path().join("chaos.json"));
    let r: ChaosReport = serde_json::from_value(v["report"].clone()).unwrap();
    assert_eq!(r.witness_fraction, 0.0);
}

#[test]
fn manifest_hash_and_replay_are_consistent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("lorenz.json");
    let args = [
        "chaos",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "7",
        "--horizon",
        "30",
    ];
    let (code, err) = run(&args, a.path());
    assert_eq!(code, 0, "{err}");
    let m = read_json(&a.path().join("chaos.manifest.json"));
    let serialized = serde_json::to_string(&m["config"]).unwrap();
    let digest = hex::encode(Sha256::digest(serialized.as_bytes()));
    assert_eq!(m["config_sha256"].as_str().unwrap(), digest);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["commands"][0]["outputs"][0], "chaos.json");
    assert!(m["integration_steps"].as_u64().unwrap() > 0);
    let manifest = a.path().join("chaos.manifest.json");
    let (code, err) = run(&["chaos", "--config", manifest.to_str().unwrap()], b.path());
    assert_eq!(code, 0, "{err}");
    for f in ["chaos.json", "chaos.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs on replay");
    }
}

#[test]
fn reports_are_bitwise_reproducible_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = config("lorenz.json");
    let base = [
        "expansive",
        "--config",
        cfg.to_str().unwrap(),
        "--pairs",
        "24",
        "--delta-grid",
        "0.01,0.1",
    ];
    let (c1, e1) = run(&[&base[..], &["--threads", "1"]].concat(), a.path());
    let (c2, e2) = run(&[&base[..], &["--threads", "3"]].concat(), b.path());
    assert_eq!((c1, c2), (0, 0), "{e1}{e2}");
    let x = std::fs::read(a.path().join("expansive.json")).unwrap();
    let y = std::fs::read(b.path().join("expansive.json")).unwrap();
    assert!(x == y);
}
