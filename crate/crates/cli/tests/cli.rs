//! Black-box checks of the `dmc` binary: exit codes, JSON shape, and the
//! built-in verification table.

use std::process::Command;

fn dmc() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dmc"))
}

fn write_config(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn missing_config_is_a_usage_error() {
    let out = dmc().arg("solve").output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn malformed_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(&dir, "bad.toml", "[sim]\nseed = 1\nbogus_key = true\n");
    let out = dmc().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{out:?}");
}

#[test]
fn solve_reports_harmonic_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "run.toml",
        "instance = \"harmonic-ball\"\n\
         probes = [[0.2, 0.0, 0.0]]\n\n\
         [sim]\n\
         seed = 11\n\
         h = 0.002\n\
         n_paths = 5000\n",
    );
    let out = dmc().args(["solve", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["command"], "solve");
    assert_eq!(v["instance"], "harmonic-ball");
    // Config echo present for provenance.
    assert_eq!(v["config"]["sim"]["seed"], 11);
    let value = v["results"][0]["estimate"]["value"].as_f64().unwrap();
    let stderr = v["results"][0]["estimate"]["stderr"].as_f64().unwrap();
    assert!((value - 0.2).abs() <= 3.0 * stderr + 2e-3, "value {value}");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "run.toml",
        "instance = \"harmonic-ball\"\n\
         probes = [[0.2, 0.0, 0.0]]\n\n\
         [sim]\n\
         seed = 11\n\
         h = 0.005\n\
         n_paths = 500\n",
    );
    let run = |extra: &[&str]| {
        let out = dmc()
            .args(["solve", "--config"])
            .arg(&cfg)
            .args(extra)
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    let base = run(&[]);
    let reseeded = run(&["--seed", "99"]);
    assert_ne!(base, reseeded);
    let v: serde_json::Value = serde_json::from_slice(&reseeded).unwrap();
    assert_eq!(v["config"]["sim"]["seed"], 99);
}

#[test]
fn kato_classifies_instance_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "run.toml",
        "instance = \"singular-graph-drift\"\n\n\
         [sim]\n\
         seed = 1\n\n\
         [kato]\n\
         alpha = 0.6\n\
         radii = [0.512, 0.128, 0.032, 0.008, 0.002]\n\n\
         [quadrature]\n\
         sup_grid_n = 5\n\
         sphere_points = 96\n",
    );
    let out = dmc().args(["kato", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["reports"][0]["coefficient"], "mu3");
    assert_eq!(v["reports"][0]["report"]["verdict"], "kato_candidate");
}

#[test]
fn verify_table_passes_on_builtins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "run.toml",
        "[sim]\n\
         seed = 5\n\
         h = 0.002\n\
         n_paths = 20000\n\n\
         [quadrature]\n\
         sup_grid_n = 5\n\
         sphere_points = 96\n",
    );
    let out = dmc().args(["verify", "--config"]).arg(&cfg).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(
        out.status.success(),
        "verify table: {}",
        serde_json::to_string_pretty(&v["table"]).unwrap()
    );
    assert_eq!(v["all_pass"], true);
}

#[test]
fn sweep_emits_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        &dir,
        "run.toml",
        "instance = \"harmonic-ball\"\n\
         probes = [[0.2, 0.0, 0.0]]\n\n\
         [sim]\n\
         seed = 3\n\n\
         [[sweep.levels]]\n\
         h = 0.04\n\
         level = 2\n\
         n_paths = 400\n\n\
         [[sweep.levels]]\n\
         h = 0.01\n\
         level = 3\n\
         n_paths = 400\n",
    );
    let out = dmc().args(["sweep", "--config"]).arg(&cfg).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("h,level,N,value,stderr,diff\n"), "{text}");
    assert_eq!(text.lines().count(), 3);
}
