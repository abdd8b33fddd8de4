//! Command-line runner: one subcommand per scenario.
//!
//! ```text
//! fastdiff <scenario> [--config PATH] [--out DIR] [--seed U64] [--quiet]
//! fastdiff batch --config LIST_FILE [--out DIR] [--quiet]
//! ```
//!
//! Exit codes: 0 all enabled assertions pass, 2 config parse error,
//! 3 validation error, 4 solver or I/O failure, 5 assertion failure.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use fastdiff::error::Error;
use fastdiff::report::verdicts_tsv;
use fastdiff::scenario::{run_scenario, Config, RunOutput, Scenario};

const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_SOLVER: u8 = 4;
const EXIT_ASSERTION: u8 = 5;

struct Args {
    scenario: String,
    config: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    quiet: bool,
}

fn usage() -> String {
    let scenarios = "spectrum evolve evolve-linear project domain-spectrum domain-evolve ghp fit report batch";
    format!(
        "usage: fastdiff <scenario> [--config PATH] [--out DIR] [--seed U64] [--quiet]\n\
         scenarios: {scenarios}\n"
    )
}

fn parse_args(argv: &[String]) -> Result<Args, String> {
    if argv.is_empty() {
        return Err(usage());
    }
    let mut args = Args {
        scenario: argv[0].clone(),
        config: None,
        out: None,
        seed: None,
        quiet: false,
    };
    let mut i = 1;
    while i < argv.len() {
        match argv[i].as_str() {
            "--config" => {
                i += 1;
                args.config = Some(PathBuf::from(argv.get(i).ok_or("--config needs a path")?));
            }
            "--out" => {
                i += 1;
                args.out = Some(PathBuf::from(argv.get(i).ok_or("--out needs a directory")?));
            }
            "--seed" => {
                i += 1;
                let raw = argv.get(i).ok_or("--seed needs a value")?;
                args.seed = Some(raw.parse().map_err(|e| format!("bad seed '{raw}': {e}"))?);
            }
            "--quiet" => args.quiet = true,
            other => return Err(format!("unknown argument '{other}'\n{}", usage())),
        }
        i += 1;
    }
    Ok(args)
}

fn classify(err: &Error) -> u8 {
    match err {
        Error::Input(_) => EXIT_PARSE,
        Error::Params(_) | Error::Domain(_) | Error::Mismatch(_) => EXIT_VALIDATION,
        Error::Projection(_) | Error::Solver(_) => EXIT_SOLVER,
    }
}

fn write_outputs(
    out_dir: &Path,
    scenario: Scenario,
    output: &RunOutput,
    wall_ms: f64,
    quiet: bool,
) -> std::io::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    if let Some(csv) = &output.trajectory_csv {
        std::fs::write(out_dir.join("trajectory.csv"), csv)?;
    }
    std::fs::write(out_dir.join("summary.json"), &output.summary_json)?;
    std::fs::write(out_dir.join("verdicts.tsv"), verdicts_tsv(&output.verdicts))?;
    // wall time lives outside the deterministic artifacts
    let mut log = std::fs::File::create(out_dir.join("run.log"))?;
    writeln!(log, "scenario={} wall_time_ms={wall_ms:.3}", scenario.name())?;
    if !quiet {
        println!("wrote {}", out_dir.display());
        for v in &output.verdicts {
            println!(
                "  {}: {} (expected {}, observed {})",
                v.check,
                if v.pass { "pass" } else { "FAIL" },
                v.expected,
                v.observed
            );
        }
    }
    Ok(())
}

fn run_single(args: &Args) -> Result<u8, (u8, String)> {
    let scenario = Scenario::parse(&args.scenario).map_err(|e| (EXIT_PARSE, e.to_string()))?;
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| (EXIT_PARSE, format!("cannot read {}: {e}", path.display())))?;
            Config::parse_str(&text).map_err(|e| (EXIT_PARSE, e.to_string()))?
        }
        None => Config::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    // validate parameters early so validation failures exit with code 3
    cfg.params().map_err(|e| (EXIT_VALIDATION, e.to_string()))?;

    let start = Instant::now();
    let output = run_scenario(scenario, &cfg).map_err(|e| (classify(&e), e.to_string()))?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("out-{}", scenario.name())));
    write_outputs(&out_dir, scenario, &output, wall_ms, args.quiet)
        .map_err(|e| (EXIT_SOLVER, format!("cannot write outputs: {e}")))?;

    Ok(if output.all_pass() { 0 } else { EXIT_ASSERTION })
}

/// Batch mode: the config file lists `scenario path/to/config` pairs, one per
/// line. Independent lines run in parallel, bounded by `FASTDIFF_THREADS`.
fn run_batch(args: &Args) -> Result<u8, (u8, String)> {
    let list_path = args
        .config
        .as_ref()
        .ok_or((EXIT_PARSE, "batch mode needs --config LIST_FILE".to_string()))?;
    let text = std::fs::read_to_string(list_path)
        .map_err(|e| (EXIT_PARSE, format!("cannot read {}: {e}", list_path.display())))?;
    let mut jobs = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let scenario = parts
            .next()
            .ok_or((EXIT_PARSE, format!("line {}: empty", ln + 1)))?
            .to_string();
        let config = parts.next().map(PathBuf::from);
        jobs.push((scenario, config));
    }
    let threads: usize = std::env::var("FASTDIFF_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(2);
    let base_out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out-batch"));
    let quiet = args.quiet;

    let mut worst: u8 = 0;
    for chunk in jobs.chunks(threads) {
        let handles: Vec<_> = chunk
            .iter()
            .cloned()
            .enumerate()
            .map(|(k, (scenario, config))| {
                let out = base_out.join(format!("{scenario}-{k}"));
                std::thread::spawn(move || {
                    let sub = Args {
                        scenario,
                        config,
                        out: Some(out),
                        seed: None,
                        quiet,
                    };
                    run_single(&sub)
                })
            })
            .collect();
        for handle in handles {
            match handle.join() {
                Ok(Ok(code)) => worst = worst.max(code),
                Ok(Err((code, msg))) => {
                    eprintln!("fastdiff: {msg}");
                    worst = worst.max(code);
                }
                Err(_) => worst = worst.max(EXIT_SOLVER),
            }
        }
    }
    Ok(worst)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let args = match parse_args(&argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("fastdiff: {msg}");
            return ExitCode::from(EXIT_PARSE);
        }
    };
    let result = if args.scenario == "batch" { run_batch(&args) } else { run_single(&args) };
    match result {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("fastdiff: {msg}");
            ExitCode::from(code)
        }
    }
}
