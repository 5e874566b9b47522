use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn lab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nls-lab"))
        .args(args)
        .current_dir(cwd)
        .env_remove("NLS_LAB_CONFIG")
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let golden = workspace().join("golden/constants.json");
    let p = dir.join("small.toml");
    std::fs::write(
        &p,
        format!(
            "[grid]\nn_points = 512\nr_max = 25.0\n[paths]\ngolden_constants = {:?}\noutput_dir = \"runs\"\n{extra}",
            golden.display().to_string()
        ),
    )
    .unwrap();
    p
}

fn stdout_json(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn no_arguments_prints_usage() {
    let o = lab(&[], &workspace());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let o = lab(&["bogus"], &workspace());
    assert_eq!(o.status.code(), Some(2));
    let o = lab(&["profiles", "--k", "2"], &workspace());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_config_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[grid]\nn_points = 10\n").unwrap();
    let o = lab(&["--config", p.to_str().unwrap(), "ground-state"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ground_state_json_is_parseable_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let args = ["--config", cfg.to_str().unwrap(), "--json", "ground-state"];
    let a = lab(&args, dir.path());
    let v = stdout_json(&a);
    assert_eq!(v["kind"], "ground_state");
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert!(v["code_version"].as_str().is_some());
    for key in ["q0", "mass", "grad_sq", "l4_4", "energy", "c_gn", "residual"] {
        assert!(v["data"][key].is_f64(), "{key}");
    }
    let b = lab(&args, dir.path());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn selftest_passes_on_default_config() {
    let ws = workspace();
    let cfg = ws.join("configs/default.toml");
    let o = lab(&["--config", cfg.to_str().unwrap(), "selftest"], &ws);
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(!text.contains("FAIL"));
    assert!(text.contains("e0 vs oracle"));
}

#[test]
fn selftest_fails_without_golden_constants() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.toml");
    std::fs::write(&p, "[grid]\nn_points = 512\nr_max = 25.0\n[paths]\ngolden_constants = \"none.json\"\n").unwrap();
    let o = lab(&["--config", p.to_str().unwrap(), "selftest"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn spectrum_and_profiles_write_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("o");
    let c = cfg.to_str().unwrap();
    let o = lab(&["--config", c, "--out", out.to_str().unwrap(), "--json", "spectrum"], dir.path());
    let v = stdout_json(&o);
    assert!(v["data"]["e0"].as_f64().unwrap() > 5.0);
    assert!(v["data"]["coercivity"]["g_perp"].as_f64().unwrap() > 0.0);
    assert!(out.join("eigenfunction.csv").exists());

    let o = lab(
        &["--config", c, "--out", out.to_str().unwrap(), "--json", "profiles", "--A", "-0.01", "--k", "2", "--t0", "0.5"],
        dir.path(),
    );
    let v = stdout_json(&o);
    assert_eq!(v["data"]["residual_slopes"].as_array().unwrap().len(), 2);
    assert!(out.join("z1.csv").exists() && out.join("z2.csv").exists());
}

#[test]
fn evolve_then_modulate_and_virial() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let c = cfg.to_str().unwrap();
    let o = lab(
        &["--config", c, "--json", "evolve", "--init", "profile:0.01,3,0", "--t-span", "0,-0.2", "--dt", "1e-3"],
        dir.path(),
    );
    let v = stdout_json(&o);
    assert_eq!(v["data"]["steps"], 200);
    let trace = dir.path().join("runs/evolve/trace.json");
    assert!(trace.exists());
    let series = std::fs::read_to_string(dir.path().join("runs/evolve/series.csv")).unwrap();
    assert!(series.starts_with("t,mass,energy,grad_sq,delta,pot"));

    let t = trace.to_str().unwrap();
    let o = lab(&["--config", c, "modulate", "--trace", t], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = std::fs::read_to_string(dir.path().join("runs/modulate/modulation.csv")).unwrap();
    assert!(m.starts_with("t,theta,alpha,h_h1,delta,valid"));
    assert_eq!(m.lines().count(), 22);

    let o = lab(&["--config", c, "virial", "--trace", t, "--R", "5"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let y = std::fs::read_to_string(dir.path().join("runs/virial/virial.csv")).unwrap();
    assert!(y.starts_with("t,y,y_rate,y_rate_fd_accel,minus4delta,A_R"));

    let o = lab(&["--config", c, "evolve", "--init", "weird", "--t-span", "0,1"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = lab(&["--config", c, "modulate", "--trace", "missing.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn classify_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        "[classify]\ndt_ladder = [2e-3]\nhorizon_bwd = 0.5\nhorizon_fwd = 0.5\n[[classify.cells]]\nkind = \"scaled_orbit\"\ntheta = 0.3\n",
    );
    let o = lab(&["--config", cfg.to_str().unwrap(), "classify"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("runs/manifest.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["data"]["cells"].as_array().unwrap().len(), 1);

    // empty sweep succeeds
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, "[grid]\nn_points = 512\nr_max = 25.0\n").unwrap();
    let o = lab(&["--config", empty.to_str().unwrap(), "--out", "e", "classify"], dir.path());
    assert!(o.status.success());
}

#[test]
fn config_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(&p, "[grid]\nr_max = 1.0\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_nls-lab"))
        .arg("ground-state")
        .current_dir(dir.path())
        .env("NLS_LAB_CONFIG", &p)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
