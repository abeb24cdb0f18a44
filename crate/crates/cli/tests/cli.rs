use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn efgeo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_efgeo"))
        .args(args)
        .env_remove("EFGEO_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn models_list_and_show() {
    let o = efgeo(&["models", "list"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for name in efgeo::models::BUILTIN_NAMES {
        assert!(text.contains(name), "{name} missing from list");
    }
    let o = efgeo(&["models", "show", "curvilinear-remap", "--json"]);
    assert_eq!(code(&o), 0);
    let spec = efgeo::models::ModelSpec::from_json(std::str::from_utf8(&o.stdout).unwrap()).unwrap();
    assert_eq!(spec, efgeo::models::builtin("curvilinear-remap").unwrap());
    assert_eq!(code(&efgeo(&["models", "show", "nope"])), 2);
}

#[test]
fn free_ring_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = efgeo(&["run", "--builtin", "free-ring", "--stages", "solve", "--states", "5", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = efgeo::io::Table::read(&dir.path().join("solve/eigenvalues.csv")).unwrap();
    let c = t.column("energy").unwrap();
    // k = 0, ±1, ±2 with m = 1: k²/2.
    for (r, k) in [0.0, 1.0, 1.0, 2.0, 2.0].iter().enumerate() {
        assert!((t.float(r, c).unwrap() - k * k / 2.0).abs() < 1e-5, "row {r}");
    }
    let m = manifest(dir.path());
    assert_eq!(m["stages"], serde_json::json!(["solve"]));
    assert_eq!(m["passed"], Value::Bool(true));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&efgeo(&["run", "--builtin", "free-ring", "--stages", "bogus", "--out", out])), 2);
    assert_eq!(code(&efgeo(&["run", "--out", out])), 2);
    assert_eq!(code(&efgeo(&["run", "--builtin", "nope", "--out", out])), 2);
    assert_eq!(code(&efgeo(&["--fd-order", "3", "models", "list"])), 2);
    assert_eq!(code(&efgeo(&["--tolerance-profile", "lenient", "models", "list"])), 2);
    assert_eq!(code(&efgeo(&["frobnicate"])), 2);
}

#[test]
fn avoided_crossing_full_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = efgeo(&["run", "--builtin", "avoided-crossing", "--all", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let m = manifest(dir.path());
    let r = &m["metrics"]["residuals"];
    assert!(r["nuclear_relative"].as_f64().unwrap() < 1e-5);
    assert!(r["electronic_norm"].as_f64().unwrap() < 1e-4);
    assert!(m["checks"].as_array().unwrap().iter().all(|c| c["passed"] == Value::Bool(true)));
    for f in ["factorize/phi.csv", "geometry/upsilon.csv", "residuals/report.json", "dynamics/observables.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "--seed".to_string(),
            "11".into(),
            "run".into(),
            "--builtin".into(),
            "curvilinear-remap".into(),
            "--stages".into(),
            "residuals,gauge-sweep,chart-sweep".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let run = |out: &Path, threads: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_efgeo"))
            .args(args(out.to_str().unwrap()))
            .env("EFGEO_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    };
    run(a.path(), "1");
    run(b.path(), "4");
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(v == &fb[k], "{k} differs");
    }

    // The saved config reproduces the run.
    let c = tempfile::tempdir().unwrap();
    let cfg = a.path().join("config.json");
    let o = efgeo(&["run", "--config", cfg.to_str().unwrap(), "--out", c.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(files(c.path()), fa);
}

#[test]
fn negative_control_profile_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = efgeo(&[
        "--tolerance-profile",
        "negative-control",
        "run",
        "--builtin",
        "avoided-crossing",
        "--stages",
        "residuals",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL nuclear_relative"));
    assert_eq!(manifest(dir.path())["passed"], Value::Bool(false));
}

#[test]
fn file_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let model = ["--builtin", "avoided-crossing"];
    let o = efgeo(&[&["solve", "--states", "2", "--out", &p("s")][..], &model].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = efgeo(&[&["factorize", "--in", &p("s/psi.csv"), "--out", &p("f")][..], &model].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["chi.csv", "phi.csv", "a_mu.csv", "mask.csv"] {
        assert!(dir.path().join("f").join(f).exists());
    }
    let o = efgeo(
        &[
            &["geometry", "--in", &p("f/phi.csv"), "--mask", &p("f/mask.csv"), "--out", &p("g")][..],
            &model,
        ]
        .concat(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("g/g.csv").exists());
    let o = efgeo(&[&["residuals", "--psi", &p("s/psi.csv"), "--out", &p("report.json")][..], &model].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(p("report.json")).unwrap()).unwrap();
    for key in ["nuclear_norm", "electronic_norm", "phi_projection", "projected", "masked_fraction", "grid"] {
        assert!(r.get(key).is_some(), "{key}");
    }
    assert!(r["nuclear_relative"].as_f64().unwrap() < 1e-5);
    assert!(r["electronic_norm"].as_f64().unwrap() < 1e-4);

    // Three levels in the file, two in the model.
    let bad = p("bad.csv");
    std::fs::write(&bad, "node,q1,level,re,im\n0,0.0,0,1.0,0.0\n0,0.0,1,0.0,0.0\n0,0.0,2,0.0,0.0\n").unwrap();
    let o = efgeo(&[&["factorize", "--in", &bad, "--points", "1", "--out", &p("x")][..], &model].concat());
    assert_eq!(code(&o), 3);
}

#[test]
fn malformed_model_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    std::fs::write(&path, "{\n  \"name\": \"x\",\n  \"grid\": 5\n}\n").unwrap();
    let o = efgeo(&["solve", "--model", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8(o.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s).to_str().unwrap().to_string();
    let o = efgeo(&["gauge-sweep", "--builtin", "avoided-crossing", "--count", "0", "--out", &p("g0")]);
    assert_eq!(code(&o), 0);
    let m = manifest(&dir.path().join("g0"));
    assert_eq!(m["metrics"]["gauge-sweep"]["samples"], serde_json::json!([]));

    let o = efgeo(&["chart-sweep", "--builtin", "avoided-crossing", "--chart", "identity", "--out", &p("id")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = &manifest(&dir.path().join("id"))["metrics"]["chart-sweep"];
    assert!(r["max_energy_delta"].as_f64().unwrap() < 1e-12);

    let o = efgeo(&["chart-sweep", "--builtin", "curvilinear-remap", "--out", &p("cr")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = &manifest(&dir.path().join("cr"))["metrics"]["chart-sweep"];
    assert!(r["max_energy_delta"].as_f64().unwrap() < 1e-5);
}
