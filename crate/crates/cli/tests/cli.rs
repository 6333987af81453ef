use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nlwave_cli::config::Command as Cmd;
use nlwave_cli::{parse_config, parse_config_with};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn model() -> Value {
    json!({"kernel": {"shape": "linear_decreasing", "h": 0.2}, "ell": 0.01, "variant": "density_averaged"})
}

fn write_config(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn nlwave(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlwave")).args(args).output().unwrap()
}

fn run(sub: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    nlwave(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(fs::read(path).unwrap()).to_vec()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimal_config_gets_defaults() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "profile-q", "model": model()}));
    let cfg = parse_config(&path).unwrap();
    assert_eq!(cfg.command, Cmd::ProfileQ);
    assert_eq!(cfg.numerics.dx, Some(0.2 / 64.0));
    let d = cfg.numerics.domain.unwrap();
    assert!(d[0] < -0.7 && d[1] > 0.3);
    assert_eq!(cfg.model.sigma, 0.0);
    let cfg = parse_config_with(&path, &["command=pde-sim".into()]).unwrap();
    assert_eq!(cfg.numerics.dt, Some(0.4 * 0.2 / 64.0));
    assert_eq!(cfg.numerics.snapshot_times, Some(vec![0.0, 0.4, 0.8]));
}

#[test]
fn validation_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "rates", "model": model()}));
    let out = tmp.path().join("out");
    let o = run("rates", &path, &out, &["--override", "model.ell=0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("ell must be positive"), "{}", stderr(&o));
    let o = run("rates", &path, &out, &["--override", "model.sigma=1.0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model.sigma"), "{}", stderr(&o));
    let o = run("pde-sim", &path, &out, &["--override", "numerics.snapshot_times=[0.4,0.2]"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("numerics.snapshot_times"));
    let o = run("profile-q", &path, &out, &["--override", "numerics.domain=[1,-1]"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run("rates", &path, &out, &["--override", "model.extra=1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("extra"));
    assert!(!out.exists());
}

#[test]
fn parse_errors_carry_position() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.json");
    fs::write(&path, "{\n  \"command\": \"rates\",\n  \"model\": {\n}").unwrap();
    let o = run("rates", &path, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn io_errors_exit_four() {
    let tmp = TempDir::new().unwrap();
    let o = run("rates", &tmp.path().join("missing.json"), &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(4));
    let path = write_config(tmp.path(), "c.json", &json!({"command": "rates", "model": model()}));
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run("profile-q", &path, &blocker.join("sub"), &[]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn numerical_failures_exit_three() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "pde-sim", "model": model()}));
    // twice the CFL limit
    let o = run("pde-sim", &path, &tmp.path().join("out"), &["--override", "numerics.dt=0.00625"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("CFL"));
}

#[test]
fn rates_record() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "rates", "model": model()}));
    let o = run("rates", &path, &tmp.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["lambda_plus", "lambda_minus", "lower_bounds", "brackets", "residuals"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!((v["lambda_plus"].as_f64().unwrap() - 34.149776721808).abs() < 1e-8);
    assert!((v["lambda_minus"].as_f64().unwrap() - 16.067817601085).abs() < 1e-8);
    assert!(v["discrete"]["lambda_plus"].as_f64().unwrap() < v["lambda_plus"].as_f64().unwrap());
    assert_eq!(read_json(&tmp.path().join("out/rates.json")), v);
}

#[test]
fn profile_q_outputs() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "profile-q", "model": model()}));
    let out = tmp.path().join("out");
    let o = run("profile-q", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("profile_q.csv")).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,Q"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (x, q) = l.split_once(',').unwrap();
            (x.parse().unwrap(), q.parse().unwrap())
        })
        .collect();
    assert!(rows.len() > 300);
    assert!(rows.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
    let meta = read_json(&out.join("profile_q.json"));
    for key in ["rho_minus", "rho_plus", "fbar", "lambda_plus", "lambda_minus", "dx", "variant", "sigma"] {
        assert!(meta.get(key).is_some(), "{key}");
    }
    assert!((meta["fbar"].as_f64().unwrap() - 0.16).abs() < 1e-10);
}

#[test]
fn short_domain_warns() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "profile-q", "model": model()}));
    let o = run("profile-q", &path, &tmp.path().join("out"), &["--override", "numerics.domain=[-0.6,0.4]"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn only_requested_formats_are_written() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "profile-p", "model": model()}));
    let out = tmp.path().join("out");
    let o = run("profile-p", &path, &out, &["--override", "output.formats=[\"csv\"]"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.join("profile_p.csv").exists());
    assert!(!out.join("profile_p.json").exists() && !out.join("config.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let cfg = json!({"command": "profile-q", "model": model(), "numerics": {"snapshot_times": [0.0, 0.1]}});
    let path = write_config(tmp.path(), "c.json", &cfg);
    let cases = [
        ("profile-q", ["profile_q.csv", "profile_q.json"]),
        ("profile-p", ["profile_p.csv", "profile_p.json"]),
        ("ftls-sim", ["ftls.csv", "ftls_summary.json"]),
        ("pde-sim", ["pde.csv", "pde_summary.json"]),
    ];
    for (sub, files) in cases {
        let (a, b) = (tmp.path().join(format!("{sub}-a")), tmp.path().join(format!("{sub}-b")));
        for dir in [&a, &b] {
            let o = run(sub, &path, dir, &[]);
            assert_eq!(o.status.code(), Some(0), "{sub}: {}", stderr(&o));
        }
        for f in files {
            assert_eq!(sha(&a.join(f)), sha(&b.join(f)), "{sub}/{f}");
        }
    }
}

#[test]
fn emitted_config_round_trips() {
    let tmp = TempDir::new().unwrap();
    for sub in ["rates", "profile-q", "profile-p", "pde-sim"] {
        let path = write_config(tmp.path(), "c.json", &json!({"command": sub, "model": model()}));
        let first = parse_config_with(&path, &[format!("output.directory={}", tmp.path().join(sub).display())]).unwrap();
        let out = tmp.path().join(sub);
        let o = run(sub, &path, &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let emitted = parse_config(&out.join("config.json")).unwrap();
        assert_eq!(emitted, first, "{sub}");
        assert_eq!(emitted.clone().resolve().unwrap(), emitted);
    }
}

#[test]
fn ftls_and_pde_outputs() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "ftls-sim", "model": model()}));
    let out = tmp.path().join("ftls");
    let o = run("ftls-sim", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("ftls.csv")).unwrap();
    assert!(text.starts_with("t,i,z,rho,phi\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 151);
    let s = read_json(&out.join("ftls_summary.json"));
    let phi: Vec<f64> = s["phi_range_series"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(phi.windows(2).all(|w| w[1] < w[0]), "{phi:?}");
    assert!(s["final_shift_estimate"].is_number());

    let out = tmp.path().join("pde");
    let o = run("pde-sim", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = read_json(&out.join("pde_summary.json"));
    assert_eq!(s["classification"], json!("converging"));
    assert_eq!(s["sup_dist_to_Q_series"].as_array().unwrap().len(), 3);
    let o = run("pde-sim", &path, &tmp.path().join("pde-inc"), &["--override", "model.kernel.shape=linear_increasing"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = read_json(&tmp.path().join("pde-inc/pde_summary.json"));
    assert_eq!(s["classification"], json!("diverging"));
}

#[test]
fn micro_macro_table() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "c.json", &json!({"command": "micro-macro", "model": model()}));
    let out = tmp.path().join("out");
    let o = run("micro-macro", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(out.join("micro_macro.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "ell,sup_error,rate_error_plus,rate_error_minus,ratio");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].ends_with(','));
    for l in &lines[2..] {
        let ratio: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ratio <= 0.75);
    }
}

fn sweep_config(runs: Value) -> Value {
    json!({"command": "sweep", "model": model(), "sweep": {"command": "profile-q", "runs": runs}})
}

#[test]
fn sweep_over_endpoints() {
    let tmp = TempDir::new().unwrap();
    let runs = json!([
        {"endpoints.rho_minus": 0.2, "endpoints.rho_plus": 0.8},
        {"endpoints.rho_minus": 0.3, "endpoints.rho_plus": 0.7},
        {"endpoints.rho_minus": 0.4, "endpoints.rho_plus": 0.6}
    ]);
    let path = write_config(tmp.path(), "s.json", &sweep_config(runs));
    let out = tmp.path().join("out");
    let o = run("sweep", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let index = read_json(&out.join("index.json"));
    assert_eq!(index["failed"], json!(0));
    let mut slopes = Vec::new();
    for k in 0..3 {
        let csv = out.join(format!("run_{k:03}/profile_q.csv"));
        let meta = read_json(&out.join(format!("run_{k:03}/profile_q.json")));
        assert_eq!(index["runs"][k]["status"], json!("ok"));
        assert!((meta["rho_plus"].as_f64().unwrap() - [0.8, 0.7, 0.6][k]).abs() < 1e-12);
        let vals: Vec<f64> = fs::read_to_string(csv).unwrap().lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
        slopes.push(vals.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max));
    }
    // closer endpoints give flatter profiles
    assert!(slopes[0] > slopes[1] && slopes[1] > slopes[2], "{slopes:?}");
}

#[test]
fn empty_sweep_succeeds() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "s.json", &sweep_config(json!([])));
    let out = tmp.path().join("out");
    let o = run("sweep", &path, &out, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let index = read_json(&out.join("index.json"));
    assert_eq!(index["runs"], json!([]));
}

#[test]
fn sweep_isolates_failures() {
    let tmp = TempDir::new().unwrap();
    let runs = json!([
        {"endpoints.rho_plus": 0.8},
        {"model.ell": -0.01},
        {"endpoints.rho_plus": 0.7}
    ]);
    let path = write_config(tmp.path(), "s.json", &sweep_config(runs));
    let out = tmp.path().join("out");
    let o = run("sweep", &path, &out, &[]);
    assert_ne!(o.status.code(), Some(0));
    assert_eq!(o.status.code(), Some(2));
    let index = read_json(&out.join("index.json"));
    assert_eq!(index["failed"], json!(1));
    assert_eq!(index["runs"][1]["status"], json!("failed"));
    assert!(index["runs"][1]["error"].as_str().unwrap().contains("ell must be positive"));
    assert!(out.join("run_000/profile_q.csv").exists());
    assert!(!out.join("run_001").exists());
    assert!(out.join("run_002/profile_q.csv").exists());
}
