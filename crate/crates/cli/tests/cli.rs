use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn nsbandit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nsbandit")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("cfg.json");
    std::fs::write(
        &p,
        r#"{"env":{"kind":"gp_two_type","tau_cm":10,"tau_id":20},
            "policies":[{"kind":"ts_exact"},{"kind":"uniform"}],
            "T":60,"S":6,"master_seed":5}"#,
    )
    .unwrap();
    p
}

#[test]
fn run_writes_estimates_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("est.csv");
    let trace = dir.path().join("trace.csv");
    let o = nsbandit(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trace-out",
        trace.to_str().unwrap(),
    ]);
    stdout(&o);
    let est = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = est.lines().collect();
    assert_eq!(lines[0], "policy,mean,stderr,n,excluded");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("ts_exact,") && lines[2].starts_with("uniform,"));
    let tr = std::fs::read_to_string(&trace).unwrap();
    assert!(tr.starts_with("t,policy,instantaneous_regret\n"));
    assert_eq!(tr.lines().count(), 1 + 2 * 60);
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("est.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["master_seed"], 5);
    assert_eq!(meta["replications"], 6);
}

#[test]
fn seed_flag_controls_the_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let c = cfg.to_str().unwrap();
    let a = stdout(&nsbandit(&["run", "--config", c, "--seed", "9"]));
    let b = stdout(&nsbandit(&["run", "--config", c, "--seed", "9"]));
    let d = stdout(&nsbandit(&["run", "--config", c, "--seed", "10"]));
    assert_eq!(a, b);
    assert_ne!(a, d);
}

#[test]
fn overrides_and_dry_run_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let text = stdout(&nsbandit(&["run", "--config", cfg.to_str().unwrap(), "--T", "40", "--S", "3", "--dry-run"]));
    let resolved: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(resolved["horizon"], 40);
    assert_eq!(resolved["replications"], 3);
    // The printed config is itself runnable.
    let again = dir.path().join("again.json");
    std::fs::write(&again, &text).unwrap();
    let est = stdout(&nsbandit(&["run", "--config", again.to_str().unwrap()]));
    assert_eq!(est.lines().count(), 3);
}

#[test]
fn json_format_emits_objects() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let text = stdout(&nsbandit(&["run", "--config", cfg.to_str().unwrap(), "--format", "json"]));
    let rows: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[1]["policy"], "uniform");
    assert_eq!(rows[1]["n"], 6);
}

#[test]
fn sweep_emits_one_block_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let text = stdout(&nsbandit(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--axis",
        "env.tau_id",
        "--values",
        "5,40",
    ]));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "env.tau_id,policy,mean,stderr,n,excluded");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("5,") && lines[4].starts_with("40,"));
}

#[test]
fn simulate_entropy_tau_eff_and_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let env = dir.path().join("env.json");
    std::fs::write(&env, r#"{"kind":"markov_switch","k":3,"delta":0.1}"#).unwrap();
    let e = env.to_str().unwrap();

    let sim = stdout(&nsbandit(&["simulate", "--env", e, "--T", "5", "--seed", "1"]));
    assert_eq!(sim.lines().next().unwrap(), "t,mu_1,mu_2,mu_3,opt");
    assert_eq!(sim.lines().count(), 6);

    let ent = stdout(&nsbandit(&["entropy", "--env", e, "--T", "20000", "--seed", "1", "--method", "closed_form"]));
    let row: Vec<&str> = ent.lines().nth(1).unwrap().split(',').collect();
    let expect = 0.9 * (1.0f64 / 0.9).ln() + 0.1 * 20f64.ln();
    assert!((row[2].parse::<f64>().unwrap() - expect).abs() < 1e-12, "{ent}");

    let tau = stdout(&nsbandit(&["tau-eff", "--env", e, "--T", "5000", "--seed", "1", "--paths", "4"]));
    let v: f64 = tau.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
    assert!((v / 10.0 - 1.0).abs() < 0.1, "{tau}");

    let b = stdout(&nsbandit(&["bounds", "--env", e, "--T", "1000", "--seed", "1", "--paths", "5"]));
    assert!(b.lines().count() > 5);
    assert!(b.contains("entropy_markov_closed_form"));
}

#[test]
fn exit_codes_distinguish_usage_and_input_errors() {
    assert_eq!(nsbandit(&["--help"]).status.code(), Some(0));
    assert_eq!(nsbandit(&["run"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"env":{"kind":"gp_two_type","tau_cm":-1,"tau_id":5},"policies":[],"T":10,"S":1,"master_seed":1}"#)
        .unwrap();
    let o = nsbandit(&["run", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    let env = dir.path().join("env.json");
    std::fs::write(&env, r#"{"kind":"markov_switch","k":3,"delta":0.1}"#).unwrap();
    let o = nsbandit(&["simulate", "--env", env.to_str().unwrap(), "--T", "5"]);
    assert_eq!(o.status.code(), Some(1), "a seed is required");
}
