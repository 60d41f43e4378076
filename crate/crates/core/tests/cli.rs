use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mfrs(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mfrs"))
        .arg("--out")
        .arg(out)
        .arg("--no-timestamp")
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn mfrs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = mfrs(out, args);
    assert!(
        o.status.success(),
        "mfrs {args:?} exited {:?}: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn synth(out: &Path, seed: &str) {
    ok(
        out,
        &["synth", "--family", "compose1", "--sigma", "0.3", "--seed", seed, "--len", "3000", "--channels", "2"],
    );
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    synth(&a, "5");
    synth(&b, "5");
    synth(&c, "6");
    let read = |d: &Path| fs::read(d.join("X.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    for f in ["Z.csv", "U.csv"] {
        assert!(a.join(f).exists());
    }
}

#[test]
fn analyze_then_rs_gen() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(out, &["synth", "--family", "compose1", "--sigma", "0", "--len", "14400"]);
    let x = out.join("X.csv");
    ok(out, &["analyze", "--input", x.to_str().unwrap(), "--dump-spectrum"]);
    let report = json(&out.join("base_patterns.json"));
    let primaries: Vec<u64> = serde_json::from_value(report["primary"].clone()).unwrap();
    assert!(!primaries.is_empty() && primaries.iter().all(|p| [18, 24, 36, 72].contains(p)), "{primaries:?}");
    assert!(out.join("spectrum.csv").exists() && out.join("period_view.csv").exists());

    let patterns = out.join("base_patterns.json");
    ok(out, &["rs-gen", "--patterns", patterns.to_str().unwrap(), "--len", "500", "--waveform", "pulse"]);
    let rows = fs::read_to_string(out.join("rs.csv")).unwrap().lines().count();
    assert_eq!(rows, 501);
    assert!(out.join("rs_manifest.json").exists());
}

#[test]
fn train_predict_eval() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    synth(out, "1");
    let x = out.join("X.csv");
    let x = x.to_str().unwrap();
    ok(
        out,
        &[
            "train", "--input", x, "--periods", "18,24,36,72", "--lookback", "48", "--horizon", "24", "--hidden",
            "16", "--epochs", "3", "--seed", "2",
        ],
    );
    for f in ["model.json", "rs_manifest.json", "train_report.json", "base_patterns.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let model = out.join("model.json");
    let rs = out.join("rs_manifest.json");
    let manifest = out.join("manifest.json");
    let o = ok(
        out,
        &[
            "eval", "--model", model.to_str().unwrap(), "--rs", rs.to_str().unwrap(), "--input", x,
            "--against-optimal", manifest.to_str().unwrap(), "--season", "72", "--plot", "window.svg",
        ],
    );
    let printed: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(printed["mse"].as_f64().unwrap().is_finite());
    assert!(fs::read_to_string(out.join("window.svg")).unwrap().contains("<svg"));
    assert!(out.join("eval.json").exists());

    // 48-row observation taken from the test split, aligned automatically
    let text = fs::read_to_string(out.join("X.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let body: Vec<&str> = lines.skip(2700).take(48).collect();
    let obs = out.join("obs.csv");
    fs::write(&obs, format!("{header}\n{}\n", body.join("\n"))).unwrap();
    ok(
        out,
        &[
            "predict", "--model", model.to_str().unwrap(), "--rs", rs.to_str().unwrap(), "--observation",
            obs.to_str().unwrap(), "--align-input", x,
        ],
    );
    let rows = fs::read_to_string(out.join("prediction.csv")).unwrap().lines().count();
    assert_eq!(rows, 25);

    ok(
        out,
        &[
            "align", "--input", x, "--observation", obs.to_str().unwrap(), "--max-period", "72",
        ],
    );
    let aligned = json(&out.join("alignment.json"));
    let xi = aligned["absolute_xi"].as_u64().unwrap();
    assert_eq!(xi % 72, 2700 % 72);
}

#[test]
fn pipeline_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let cfg = out.join("cfg.json");
    fs::write(
        &cfg,
        r#"{"version": 1,
            "data": {"synth": {"family": "compose1", "sigma": 0.0, "len": 4000, "channels": 2}},
            "seed": 3,
            "model": {"lookback": 48, "horizon": 24, "hidden": 16},
            "train": {"epochs": 4}}"#,
    )
    .unwrap();
    let o = ok(out, &["pipeline", "--config", cfg.to_str().unwrap()]);
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(summary["mse"].as_f64().unwrap().is_finite());
    assert!(summary["windows"].as_u64().unwrap() > 0);
    for f in ["X.csv", "manifest.json", "model.json", "eval.json", "pipeline_report.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(mfrs(out, &["frobnicate"]).status.code(), Some(64));
    assert_eq!(mfrs(out, &["synth", "--family", "compose9", "--sigma", "1"]).status.code(), Some(64));
    assert_eq!(mfrs(out, &["--help"]).status.code(), Some(0));
    assert_eq!(mfrs(out, &["synth", "--family", "compose1", "--sigma=-1"]).status.code(), Some(1));
    assert_eq!(mfrs(out, &["synth", "--family", "compose3", "--sigma", "1"]).status.code(), Some(1));
    let missing = out.join("nope.csv");
    assert_eq!(mfrs(out, &["analyze", "--input", missing.to_str().unwrap()]).status.code(), Some(2));
}
