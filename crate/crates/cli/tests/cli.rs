use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mdd(args: &[&str]) -> Output {
    mdd_with_env(args, &[])
}

fn mdd_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mdd"));
    cmd.args(args).env_remove("MDD_SEED");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr_json(o: &Output) -> Value {
    let text = String::from_utf8(o.stderr.clone()).unwrap();
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("stderr is not JSON ({e}): {text}"))
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn no_arguments_prints_usage() {
    let o = mdd(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(mdd(&["trap", "--radiu", "1e-7"]).status.code(), Some(2));
    assert_eq!(mdd(&["trap", "--radius", "230nm"]).status.code(), Some(2));
}

#[test]
fn trap_reports_equilibrium_separation() {
    let o = mdd(&["trap", "--radius", "230e-9", "--gradient", "1e3"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let line = text.lines().find(|l| l.starts_with("delta_x_eq")).unwrap();
    assert!(line.contains("(41.59 nm)"), "{line}");
}

#[test]
fn out_of_domain_values_exit_2_with_json() {
    let o = mdd(&["trap", "--radius=-1"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "domain");
}

#[test]
fn invalid_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"trap": {"gradient": 1e3, "gradiant": 2}}"#);
    let o = mdd(&["--config", &cfg, "trap"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr_json(&o);
    assert_eq!(err["error"], "json");
    assert!(err["message"].as_str().unwrap().contains("gradiant"));

    let cfg = write_config(dir.path(), r#"{"schema_version": 9}"#);
    let o = mdd(&["--config", &cfg, "trap"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "validation");
}

#[test]
fn config_values_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"trap": {"gradient": 1e4}}"#);
    let o = mdd(&["--config", &cfg, "trap"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("(4.16 nm)"), "{}", stdout(&o));
}

const MC: &[&str] = &[
    "dephase-mc",
    "--n-spins",
    "200",
    "--tau",
    "1",
    "--trials",
    "40",
];

#[test]
fn monte_carlo_reruns_are_bitwise_identical() {
    let run = |seed: &str, threads: &str| {
        let mut args = MC.to_vec();
        args.extend(["--seed", seed]);
        let o = mdd_with_env(&args, &[("RAYON_NUM_THREADS", threads)]);
        assert!(o.status.success());
        o.stdout
    };
    let a = run("7", "1");
    assert_eq!(a, run("7", "1"));
    assert_eq!(a, run("7", "8"));
    assert_ne!(a, run("8", "1"));
    let text = String::from_utf8(a.clone()).unwrap();
    assert!(text.starts_with("trial,raw_phase,wrapped_phase\n"));
    assert_eq!(text.lines().count(), 41);
    assert!(!text.contains('\r'));

    let env_seed = mdd_with_env(MC, &[("MDD_SEED", "7")]);
    assert_eq!(env_seed.stdout, a);
    // The flag wins over the environment.
    let mut args = MC.to_vec();
    args.extend(["--seed", "7"]);
    assert_eq!(mdd_with_env(&args, &[("MDD_SEED", "99")]).stdout, a);
}

#[test]
fn sweep_of_an_empty_bath_has_zero_variance() {
    let o = mdd(&[
        "dephase-mc",
        "--sweep",
        "--sweep-n-spins",
        "0",
        "--sweep-taus",
        "1",
        "--trials",
        "4",
        "--seed",
        "3",
    ]);
    assert!(o.status.success());
    assert_eq!(
        stdout(&o),
        "n_spins,tau,variance,std_error,n_trials\n0,1e0,0,0,4\n"
    );
}

#[test]
fn sweep_cells_match_single_runs() {
    let sweep = mdd(&[
        "dephase-mc",
        "--sweep",
        "--sweep-n-spins",
        "5,50",
        "--sweep-taus",
        "10",
        "--trials",
        "30",
        "--seed",
        "5",
        "--format",
        "json",
    ]);
    assert!(sweep.status.success());
    let cells: Value = serde_json::from_slice(&sweep.stdout).unwrap();
    for cell in cells["cells"].as_array().unwrap() {
        let n = cell["n_spins"].to_string();
        let single = mdd(&[
            "dephase-mc",
            "--n-spins",
            &n,
            "--tau",
            "10",
            "--trials",
            "30",
            "--seed",
            "5",
            "--format",
            "json",
        ]);
        let single: Value = serde_json::from_slice(&single.stdout).unwrap();
        assert_eq!(single["variance"], cell["variance"], "n = {n}");
    }
}

#[test]
fn empty_sweep_lists_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"noise": {"sweep_n_spins": []}}"#);
    let o = mdd(&["--config", &cfg, "dephase-mc", "--sweep", "--trials", "4"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "validation");
}

#[test]
fn output_files_come_with_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("phases.csv");
    let out_str = out.display().to_string();
    let mut args = MC.to_vec();
    args.extend(["--seed", "11", "--out", &out_str]);
    let o = mdd(&args);
    assert!(o.status.success());
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["seed"], 11);

    let body = fs::read(&out).unwrap();
    let manifest: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("phases.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["subcommand"], "dephase-mc");
    assert_eq!(manifest["seed"], 11);
    assert_eq!(
        manifest["output_sha256"].as_str().unwrap(),
        mdd_core::output::sha256_hex(&body)
    );
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    // A rerun reproduces the file and the configuration hash.
    let first_hash = manifest["config_sha256"].clone();
    assert!(mdd(&args).status.success());
    assert_eq!(fs::read(&out).unwrap(), body);
    let again: Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("phases.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(again["config_sha256"], first_hash);
    let names: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(names.len(), 2, "{names:?}");
}

#[test]
fn rotate_emits_both_branches() {
    let o = mdd(&["rotate", "--pulses-per-half", "3", "--theta0", "0.5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,theta_plus,theta_minus"));
    assert_eq!(lines.next(), Some("0,5e-1,5e-1"));
}

#[test]
fn simulate_and_amplify_run() {
    for cmd in ["simulate", "amplify"] {
        let o = mdd(&[cmd, "--pulses-per-half", "3"]);
        assert!(
            o.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
        assert!(stdout(&o).lines().count() > 2);
    }
}

#[test]
fn budget_ranks_sources() {
    let o = mdd(&["budget", "--markdown"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("| source | value | threshold | unit | severity | pass |"));
    let json = mdd(&["budget"]);
    let report: Value = serde_json::from_slice(&json.stdout).unwrap();
    let entries = report["entries"].as_array().unwrap();
    let severity: Vec<f64> = entries
        .iter()
        .map(|e| e["severity"].as_f64().unwrap())
        .collect();
    assert!(severity.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn budget_scenario_lists_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenario.json");
    fs::write(&path, r#"{"radius": 2.3e-7}"#).unwrap();
    let o = mdd(&["budget", "--scenario", &path.display().to_string()]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr_json(&o)["message"].as_str().unwrap().to_string();
    assert!(
        msg.contains("gradient") && msg.contains("position_uncertainty"),
        "{msg}"
    );
}

#[test]
fn casimir_and_entangle_print_json() {
    let o = mdd(&["casimir"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let b = v["b_grad_max"].as_f64().unwrap();
    assert!((b - 220.0).abs() / 220.0 < 0.02);
    let o = mdd(&["entangle"]);
    assert!(o.status.success());
    let _: Value = serde_json::from_slice(&o.stdout).unwrap();
}

#[test]
fn check_passes() {
    let o = mdd(&["check"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}
