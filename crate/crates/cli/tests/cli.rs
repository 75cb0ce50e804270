use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_boussinesq"));
    c.env_remove("BOUSSINESQ_WORKERS");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn out_dir(o: &Output) -> PathBuf {
    let s = String::from_utf8_lossy(&o.stdout);
    PathBuf::from(s.lines().next().unwrap().split_once(": ").unwrap().1)
}

fn small_config(dir: &Path) -> String {
    let p = dir.join("small.toml");
    fs::write(&p, "[grid]\nresolution = 16\n[scheme]\ndt = 0.01\n").unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn span_emits_certificate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["span", "--Z", "(1,0),(0,1)", "--N", "8"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = out_dir(&o);
    let digest = dir.file_name().unwrap().to_string_lossy().into_owned();
    let cert: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("span.json")).unwrap()).unwrap();
    assert_eq!(cert["complete"], true);
    assert_eq!(cert["config_digest"], digest.as_str());
    assert!(fs::read_to_string(dir.join("span.log"))
        .unwrap()
        .starts_with(&format!("# config_digest: {digest}")));
}

#[test]
fn simulate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = run(
        &["simulate", "--T", "1", "--seed", "7", "--config", &cfg],
        &tmp.path().join("a"),
    );
    let b = run(
        &["simulate", "--T", "1", "--seed", "7", "--config", &cfg],
        &tmp.path().join("b"),
    );
    assert_eq!(a.status.code(), Some(0));
    let (da, db) = (out_dir(&a), out_dir(&b));
    assert_eq!(da.file_name(), db.file_name());
    for f in [
        "simulate_series.csv",
        "simulate_jumps.csv",
        "simulate_path.csv",
        "snapshots.bin",
        "simulate.json",
    ] {
        assert_eq!(fs::read(da.join(f)).unwrap(), fs::read(db.join(f)).unwrap(), "{f}");
    }
    let c = run(
        &["simulate", "--T", "1", "--seed", "8", "--config", &cfg],
        &tmp.path().join("a"),
    );
    assert_ne!(out_dir(&c).file_name(), da.file_name());
}

#[test]
fn every_output_carries_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = run(&["simulate", "--config", &cfg], tmp.path());
    let dir = out_dir(&o);
    let digest = dir.file_name().unwrap().to_string_lossy().into_owned();
    for e in fs::read_dir(&dir).unwrap() {
        let bytes = fs::read(e.unwrap().path()).unwrap();
        assert!(bytes.windows(16).any(|w| w == digest.as_bytes()));
    }
}

#[test]
fn moments_with_kappa_writes_verdict() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("m.toml");
    fs::write(&cfg, "[grid]\nresolution = 16\n[scheme]\ndt = 0.01\n[moments]\nn_traj = 100\nt_max = 2.0\n[moments.stopping]\nn_paths = 200\n").unwrap();
    let o = run(
        &["moments", "--kappa", "0.01", "--config", cfg.to_str().unwrap()],
        tmp.path(),
    );
    assert!(
        matches!(o.status.code(), Some(0 | 1)),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let dir = out_dir(&o);
    let stop: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("stopping.json")).unwrap()).unwrap();
    assert_eq!(stop["parameters"]["kappa"], 0.01);
    assert!(dir.join("moments.json").exists());
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(run(&["bogus"], tmp.path()).status.code(), Some(2));
    assert_eq!(run(&["span", "--Z", "(1,0"], tmp.path()).status.code(), Some(2));
    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "[physics]\nnu1 = -1.0\n").unwrap();
    let o = run(&["span", "--config", bad.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nu1 must be positive"));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
}
