//! End-to-end tests of the command-line surface: files, formats, exit codes.

use std::path::{Path, PathBuf};
use std::process::Command;

fn binary() -> PathBuf {
    let mut path = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    path.pop();
    path.pop();
    path.push("target");
    path.push(if cfg!(debug_assertions) { "debug" } else { "release" });
    path.push("fastdiff");
    path
}

fn temp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fastdiff-cli-{name}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(args: &[&str]) -> std::process::Output {
    Command::new(binary())
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn spectrum_scenario_writes_artifacts() {
    let dir = temp_dir("spectrum");
    let cfg = write_config(&dir, "spec.cfg", "params.N=3\nparams.s=0.5\ndisc.L=8\n");
    let out = dir.join("out");
    let result = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"gap\":"));
    assert!(summary.contains("\"nu\":[-1.0000000000000000e0,0.0000000000000000e0,"));
    let tsv = std::fs::read_to_string(out.join("verdicts.tsv")).unwrap();
    assert!(tsv.starts_with("check\texpected\tobserved\ttolerance\tpass\n"));
    assert!(tsv.contains("gap_formula"));
    assert!(out.join("run.log").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn evolve_stationary_run_all_pass() {
    let dir = temp_dir("evolve");
    let cfg = write_config(
        &dir,
        "evolve.cfg",
        "params.N=3\nparams.s=0.5\ndisc.L=16\ndisc.n=40\nflow.dt=0.005\nflow.tau_end=0.5\n\
         flow.output_every=20\ninit.kind=bubble\ninit.lambda=1.0\n",
    );
    let out = dir.join("out");
    let result = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with(
        "tau,J_gap,hs_dist,lambda_star,relerr_sup,residual_weighted,dissipation_residual,sigma_0,sigma_2,sigma_3,sigma_4\n"
    ));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fit_round_trips_a_stored_trajectory() {
    // run a short perturbed trajectory, then re-fit the stored CSV and
    // compare against the summary produced by the run itself
    let dir = temp_dir("fit");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "params.N=3\nparams.s=0.5\ndisc.L=24\ndisc.n=64\nflow.dt=0.004\nflow.tau_end=4.0\n\
         flow.output_every=50\ninit.kind=bubble-mode\ninit.epsilon=0.001\ninit.mode_l=2\n\
         fit.window_lo=1.0\nfit.window_hi=3.8\n",
    );
    let out = dir.join("out");
    let result = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    let slope_in_summary = extract_number(&summary, "\"fit_hs_dist\":{\"slope\":");

    let fit_cfg = write_config(
        &dir,
        "fit.cfg",
        &format!(
            "params.N=3\nparams.s=0.5\nfit.input={}\nfit.column=hs_dist\n\
             fit.window_lo=1.0\nfit.window_hi=3.8\n",
            out.join("trajectory.csv").display()
        ),
    );
    let out2 = dir.join("out-fit");
    let result2 = run(&["fit", "--config", fit_cfg.to_str().unwrap(), "--out", out2.to_str().unwrap(), "--quiet"]);
    assert!(result2.status.success());
    let summary2 = std::fs::read_to_string(out2.join("summary.json")).unwrap();
    let slope_refit = extract_number(&summary2, "\"fit\":{\"slope\":");
    assert!(
        (slope_in_summary - slope_refit).abs() < 1e-12,
        "{slope_in_summary} vs {slope_refit}"
    );
    std::fs::remove_dir_all(&dir).ok();
}

fn extract_number(json: &str, key: &str) -> f64 {
    let start = json.find(key).unwrap_or_else(|| panic!("missing {key}")) + key.len();
    let rest = &json[start..];
    let end = rest.find([',', '}']).unwrap();
    rest[..end].parse().unwrap()
}

#[test]
fn determinism_across_processes() {
    let dir = temp_dir("determinism");
    let cfg = write_config(
        &dir,
        "run.cfg",
        "params.N=3\nparams.s=0.5\ndisc.L=16\ndisc.n=40\nflow.dt=0.005\nflow.tau_end=0.5\n\
         flow.output_every=25\ninit.kind=random\ninit.epsilon=0.2\ninit.seed=777\n",
    );
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    for out in [&out_a, &out_b] {
        let result = run(&["evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
        assert!(result.status.success());
    }
    let csv_a = std::fs::read(out_a.join("trajectory.csv")).unwrap();
    let csv_b = std::fs::read(out_b.join("trajectory.csv")).unwrap();
    assert_eq!(csv_a, csv_b, "CSV must be byte-identical");
    let json_a = std::fs::read(out_a.join("summary.json")).unwrap();
    let json_b = std::fs::read(out_b.join("summary.json")).unwrap();
    assert_eq!(json_a, json_b, "JSON must be byte-identical");

    // a different seed changes the data
    let result = run(&[
        "evolve",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.join("c").to_str().unwrap(),
        "--seed",
        "778",
        "--quiet",
    ]);
    assert!(result.status.success());
    let csv_c = std::fs::read(dir.join("c").join("trajectory.csv")).unwrap();
    assert_ne!(csv_a, csv_c);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn exit_codes() {
    let dir = temp_dir("exits");
    // unknown scenario: parse error
    let r = run(&["frobnicate"]);
    assert_eq!(r.status.code(), Some(2));
    // malformed config: parse error
    let bad = write_config(&dir, "bad.cfg", "params.N 3\n");
    let r = run(&["spectrum", "--config", bad.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(2));
    // invalid parameters: validation error
    let invalid = write_config(&dir, "invalid.cfg", "params.N=1\nparams.s=0.75\n");
    let r = run(&["spectrum", "--config", invalid.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3));
    // unstable explicit step: solver-side failure
    let stiff = write_config(
        &dir,
        "stiff.cfg",
        "params.N=3\nparams.s=0.5\ndisc.L=16\ndisc.n=40\nflow.dt=0.5\nflow.tau_end=1.0\n",
    );
    let out = dir.join("out-stiff");
    let r = run(&["evolve", "--config", stiff.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn domain_scenarios_run() {
    let dir = temp_dir("domain");
    let cfg = write_config(
        &dir,
        "dom.cfg",
        "params.N=1\nparams.s=0.75\nparams.regime=bounded\nparams.p=2.0\n\
         disc.M=64\ndisc.K=32\nflow.dt=0.005\nflow.tau_end=5.5\nflow.output_every=20\n\
         flow.stepper=imex\ninit.kind=bubble-mode\ninit.epsilon=0.001\ndomain.kind=sfl\n",
    );
    let out = dir.join("out");
    let r = run(&["domain-evolve", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("tau,H_norm,relerr_sup,J_gap\n"));

    let out_ghp = dir.join("out-ghp");
    let r = run(&["ghp", "--config", cfg.to_str().unwrap(), "--out", out_ghp.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let summary = std::fs::read_to_string(out_ghp.join("summary.json")).unwrap();
    assert!(summary.contains("\"mu_ledger\":[3.0000000000000000e0]"));
    assert!(summary.contains("\"bc_max_ratio\""));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn project_and_report_scenarios() {
    let dir = temp_dir("project");
    // project: a dilated bubble projects back to its own scale
    let proj_cfg = write_config(
        &dir,
        "proj.cfg",
        "params.N=3\nparams.s=0.5\ndisc.L=24\ndisc.n=64\ninit.kind=bubble\ninit.lambda=1.3\n",
    );
    let out = dir.join("out-proj");
    let r = run(&["project", "--config", proj_cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    let lambda = extract_number(&summary, "\"lambda_star\":");
    assert!((lambda - 1.3).abs() < 1e-6, "{lambda}");

    // report: re-fit the standard columns of a stored sphere trajectory
    let run_cfg = write_config(
        &dir,
        "run.cfg",
        "params.N=3\nparams.s=0.5\ndisc.L=24\ndisc.n=64\nflow.dt=0.004\nflow.tau_end=6.0\n\
         flow.output_every=25\ninit.kind=bubble-mode\ninit.epsilon=0.001\ninit.mode_l=2\n\
         fit.window_lo=1.5\nfit.window_hi=5.5\n",
    );
    let out_run = dir.join("out-run");
    let r = run(&["evolve", "--config", run_cfg.to_str().unwrap(), "--out", out_run.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success());
    let report_cfg = write_config(
        &dir,
        "report.cfg",
        &format!(
            "params.N=3\nparams.s=0.5\nfit.input={}\nfit.window_lo=1.5\nfit.window_hi=5.5\n",
            out_run.join("trajectory.csv").display()
        ),
    );
    let out_rep = dir.join("out-report");
    let r = run(&["report", "--config", report_cfg.to_str().unwrap(), "--out", out_rep.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let summary = std::fs::read_to_string(out_rep.join("summary.json")).unwrap();
    let slope = extract_number(&summary, "\"fit_hs_dist\":{\"slope\":");
    assert!((slope - 0.5).abs() < 0.05, "{slope}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn domain_spectrum_scenario() {
    let dir = temp_dir("dspec");
    let cfg = write_config(
        &dir,
        "d.cfg",
        "params.N=1\nparams.s=0.75\nparams.regime=bounded\nparams.p=2.0\n\
         disc.M=64\ndisc.K=32\ndomain.kind=sfl\ndomain.eigen_count=6\n",
    );
    let out = dir.join("out");
    let r = run(&["domain-spectrum", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let summary = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"morse_index\":1"));
    assert!(summary.contains("\"degenerate\":false"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn batch_mode_runs_parallel_scenarios() {
    let dir = temp_dir("batch");
    let spec_cfg = write_config(&dir, "s.cfg", "params.N=3\nparams.s=0.5\ndisc.L=8\n");
    let lin_cfg = write_config(
        &dir,
        "l.cfg",
        "params.N=3\nparams.s=0.5\nflow.dt=0.05\nflow.tau_end=2.0\nflow.output_every=1\ninit.mode_l=2\ninit.epsilon=1.0\n",
    );
    let list = write_config(
        &dir,
        "batch.list",
        &format!("spectrum {}\nevolve-linear {}\n", spec_cfg.display(), lin_cfg.display()),
    );
    let out = dir.join("batch-out");
    let r = Command::new(binary())
        .args(["batch", "--config", list.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"])
        .env("FASTDIFF_THREADS", "2")
        .output()
        .unwrap();
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    assert!(out.join("spectrum-0").join("summary.json").exists());
    assert!(out.join("evolve-linear-1").join("summary.json").exists());
    std::fs::remove_dir_all(&dir).ok();
}
