use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn levyswarm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levyswarm")).args(args).env_remove("LEVYSWARM_THREADS").output().expect("binary runs")
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn coeffs_prints_scaling_and_writes_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let o = levyswarm(&["coeffs", "--alpha", "1.3", "--residuals", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&o);
    assert!((doc["scaling"]["mu"].as_f64().unwrap() - 7.0 / 6.0).abs() < 1e-12);
    assert!(doc["laplace_residuals"].is_object());
    let m = manifest(&out);
    assert_eq!(m["command"], "coeffs");
    assert_eq!(m["config"]["model"]["alpha"], 1.3);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn config_file_is_merged_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, "seed = 7\n[model]\nalpha = 1.2\nn_robots = 10\n").unwrap();
    let out = tmp.path().join("c");
    let o = levyswarm(&["coeffs", "--config", cfg.to_str().unwrap(), "--n-robots", "12", "--out-prefix", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(&out);
    assert_eq!(m["seed"], 7);
    assert_eq!(m["config"]["model"]["alpha"], 1.2);
    assert_eq!(m["config"]["model"]["n_robots"], 12);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[model]\nunknown_key = 1\n").unwrap();
    assert_eq!(levyswarm(&["coeffs", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(levyswarm(&["coeffs", "--config", tmp.path().join("missing.toml").to_str().unwrap()]).status.code(), Some(2));
    // α outside (1, 2) is a validation error.
    assert_eq!(levyswarm(&["coeffs", "--alpha", "2.5"]).status.code(), Some(2));
    assert_eq!(levyswarm(&["pde", "--grid", "10"]).status.code(), Some(2));
}

#[test]
fn pde_writes_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("p");
    let o = levyswarm(&["pde", "--alpha", "1.5", "--grid", "40,32", "--t-end", "2", "--dt", "0.1", "--boundary", "periodic", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cov = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert!(cov.starts_with("t,instantaneous,time_averaged\n"));
    assert_eq!(cov.lines().count(), 1 + 21);
    let first = fs::read_to_string(out.join("fields/step_000000.csv")).unwrap();
    assert!(first.starts_with("x,y,u\n"));
    assert_eq!(first.lines().count(), 1 + 40 * 32);
    assert!(out.join("fields/step_000020.csv").exists());
    assert!(fs::read_to_string(out.join("observables.csv")).unwrap().starts_with("t,mass,min,max,covered_mass\n"));
    let m = manifest(&out);
    assert_eq!(m["config"]["pde"]["boundary"], "periodic");
    assert!(m["results"]["coeffs"]["c_alpha"].as_f64().unwrap() > 0.0);
}

#[test]
fn micro_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = levyswarm(&["micro", "--steps", "40", "--seed", "3", "--threads", threads, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    for f in ["trajectory.csv", "observables.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let traj = fs::read_to_string(a.join("trajectory.csv")).unwrap();
    assert!(traj.starts_with("step,id,x,y,thx,thy\n"));
    assert!(fs::read_to_string(a.join("observables.csv")).unwrap().starts_with("t,msd,polarization,covered_mass\n"));
}

#[test]
fn threads_fall_back_to_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_levyswarm")).args(["micro", "--steps", "2"]).env("LEVYSWARM_THREADS", "0x").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_levyswarm")).args(["micro", "--steps", "2"]).env("LEVYSWARM_THREADS", "2").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn hyper_requires_partial_alignment() {
    // With ζ = 1 the hyperbolic closure is degenerate.
    let tmp = tempfile::tempdir().unwrap();
    let full = tmp.path().join("full.toml");
    fs::write(&full, "[model]\nalpha = 1.7\n").unwrap();
    let o = levyswarm(&["hyper", "--config", full.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
    let cfg = tmp.path().join("h.toml");
    fs::write(&cfg, "[model]\nalpha = 1.7\nzeta = 0.5\nkappa_align = 2.0\n").unwrap();
    let out = tmp.path().join("h");
    let o = levyswarm(&["hyper", "--config", cfg.to_str().unwrap(), "--grid", "24,20", "--t-end", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = json(&o);
    assert!(s["max_unit_defect"].as_f64().unwrap() < 1e-12);
    assert!(s["max_mass_drift"].as_f64().unwrap() < 1e-10);
    let last = format!("fields/step_{:06}.csv", s["steps"].as_u64().unwrap());
    assert!(fs::read_to_string(out.join(last)).unwrap().starts_with("x,y,u,lx,ly\n"));
}

#[test]
fn coverage_study_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let o = levyswarm(&["coverage-study", "--alphas", "1.3,1.9", "--n-robots", "20", "--t-end", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("coverage.csv")).unwrap();
    assert!(table.starts_with("alpha,n_robots,t,instantaneous,time_averaged\n"));
    assert!(out.join("curves/alpha_1.3_n_20.csv").exists());
    assert!(out.join("summary.json").exists());
    assert_eq!(json(&o)["failures"].as_array().unwrap().len(), 0);
}

#[test]
fn xval_rejects_too_few_walkers() {
    assert_eq!(levyswarm(&["xval", "--n-walkers", "100"]).status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.toml");
    fs::write(&cfg, "[pde]\nnx = 20\nny = 16\nt_end = 0.2\nlinear_solver_tol = 1e-300\nlinear_solver_max_iter = 1\n").unwrap();
    let o = levyswarm(&["pde", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failed_cross_validation_exits_4_with_report() {
    // Coarse checkpoint grid keeps this quick; the closure arm misses the 0.05 bound.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("x.toml");
    fs::write(&cfg, "[xval]\nn_walkers = 10000\npde_n = 32\nhist_n = 16\ncheckpoints = [0.02]\npde_dt = 1e-3\nmicro_dt = 1e-3\n").unwrap();
    let out = tmp.path().join("x");
    let o = levyswarm(&["xval", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&o);
    assert_eq!(r["pass"], false);
    assert!(r["checkpoints"][0]["l1"].as_f64().unwrap() > 0.05);
    assert!(out.join("report.json").exists());
    assert!(fs::read_to_string(out.join("fields/step_000020.csv")).unwrap().starts_with("x,y,micro,closure,levy_walk\n"));
}
