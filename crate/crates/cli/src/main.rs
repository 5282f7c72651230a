use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use ddf_core::sim::{monte_carlo, MonteCarloOptions, MonteCarloSummary, ScenarioConfig};
use ddf_core::text::fmt_f64;
use ddf_core::verify;
use ddf_core::Error;
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "ddf", version, about = "Heterogeneous decentralized fusion simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo batch of a scenario and write metric CSVs.
    Run {
        config: PathBuf,
        /// Number of Monte Carlo runs (defaults to the config's mc_runs).
        #[arg(long)]
        mc: Option<u32>,
        /// RNG seed (defaults to the config's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Disable conservative filtering.
        #[arg(long)]
        no_conservative: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (defaults to the number of hardware threads).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Run the built-in acceptance checks and print one line per criterion.
    Verify {
        /// Run only the named suite.
        #[arg(long)]
        suite: Option<String>,
        #[arg(long)]
        parallel: Option<usize>,
    },
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            mc,
            seed,
            no_conservative,
            out,
            parallel,
        } => cmd_run(&config, mc, seed, no_conservative, &out, parallel),
        Command::Verify { suite, parallel } => cmd_verify(suite.as_deref(), parallel),
    }
}

fn cmd_run(
    config: &Path,
    mc: Option<u32>,
    seed: Option<u64>,
    no_conservative: bool,
    out: &Path,
    parallel: Option<usize>,
) -> ExitCode {
    let mut cfg = match ScenarioConfig::load(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = mc {
        cfg.mc_runs = n;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if no_conservative {
        cfg.conservative_filtering = false;
    }
    if let Err(e) = cfg.validate() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let effective = cfg.to_toml();
    let hash = hex::encode(Sha256::digest(effective.as_bytes()));
    let started = unix_seconds();
    let mut opts = MonteCarloOptions::from_config(&cfg);
    opts.parallelism = parallel;
    let summary = match monte_carlo(&cfg, opts) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let finished = unix_seconds();

    if let Err(e) = write_outputs(out, &cfg, &effective, &hash, &summary, started, finished) {
        eprintln!("error: writing outputs to {}: {e}", out.display());
        return ExitCode::from(EXIT_FAILURE);
    }
    print_summary(&cfg, &summary);

    let aborts: Vec<(u32, &Error)> = summary.aborts().collect();
    if aborts.is_empty() {
        ExitCode::SUCCESS
    } else {
        for (run, e) in &aborts {
            eprintln!("run {run} aborted: {e}");
        }
        ExitCode::from(EXIT_ABORT)
    }
}

fn unix_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn csv(
    hash: &str,
    column: &str,
    summary: &MonteCarloSummary,
    value: impl Fn(&ddf_core::sim::StepRecord) -> f64,
) -> String {
    let mut s = String::new();
    writeln!(s, "# config_sha256={hash}").unwrap();
    writeln!(s, "run,step,robot,{column}").unwrap();
    for run in &summary.runs {
        for rec in &run.steps {
            writeln!(s, "{},{},{},{}", run.run, rec.step, rec.robot, fmt_f64(value(rec))).unwrap();
        }
    }
    s
}

fn write_outputs(
    out: &Path,
    cfg: &ScenarioConfig,
    effective: &str,
    hash: &str,
    summary: &MonteCarloSummary,
    started: u64,
    finished: u64,
) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    let files = [
        ("nees.csv", csv(hash, "nees", summary, |r| r.nees)),
        ("mineig.csv", csv(hash, "mineig", summary, |r| r.min_eig)),
        ("lambda.csv", csv(hash, "lambda_min", summary, |r| r.lambda)),
    ];
    for (name, body) in &files {
        fs::write(out.join(name), body)?;
    }
    fs::write(out.join("config.toml"), effective)?;

    let mut manifest = toml::Table::new();
    manifest.insert("config_sha256".into(), hash.into());
    manifest.insert("code_version".into(), env!("CARGO_PKG_VERSION").into());
    manifest.insert("scenario".into(), cfg.name.clone().into());
    manifest.insert("seed".into(), (cfg.seed as i64).into());
    manifest.insert("mc_runs".into(), i64::from(cfg.mc_runs).into());
    manifest.insert("conservative_filtering".into(), cfg.conservative_filtering.into());
    manifest.insert("started_unix".into(), (started as i64).into());
    manifest.insert("finished_unix".into(), (finished as i64).into());
    manifest.insert(
        "negative_information_events".into(),
        (summary.negative_information_events() as i64).into(),
    );
    let outputs: Vec<toml::Value> = files
        .iter()
        .map(|(n, _)| n.to_string())
        .chain(["config.toml".to_string()])
        .map(toml::Value::from)
        .collect();
    manifest.insert("outputs".into(), outputs.into());
    fs::write(out.join("manifest.toml"), toml::to_string(&manifest).unwrap())?;
    Ok(())
}

fn print_summary(cfg: &ScenarioConfig, summary: &MonteCarloSummary) {
    println!(
        "{}: {} runs, {} steps, conservative filtering {}",
        cfg.name,
        summary.runs.len(),
        cfg.horizon_steps,
        if cfg.conservative_filtering { "on" } else { "off" }
    );
    for (robot, s) in &summary.robots {
        let (lo, hi) = s.nees_bounds;
        let inside = s.mean_nees.iter().filter(|n| **n >= lo && **n <= hi).count();
        let floor = s.min_eig_floor.iter().copied().fold(f64::INFINITY, f64::min);
        println!(
            "robot {robot}: dof {}, mean NEES inside [{lo:.3}, {hi:.3}] at {inside}/{} steps, \
             min eig(Σ - Σ_cent) {floor:.3e}, final λ_min {:.6}",
            s.dof,
            s.mean_nees.len(),
            s.lambda.last().copied().unwrap_or(f64::NAN),
        );
    }
}

fn cmd_verify(suite: Option<&str>, parallel: Option<usize>) -> ExitCode {
    let suites: Vec<&str> = match suite {
        Some(name) => {
            if !verify::SUITES.contains(&name) {
                eprintln!("unknown suite `{name}`; available: {}", verify::SUITES.join(", "));
                return ExitCode::from(EXIT_CONFIG);
            }
            vec![name]
        }
        None => verify::SUITES.to_vec(),
    };
    let mut all_passed = true;
    for name in suites {
        for outcome in verify::run_suite(name, parallel) {
            println!("{outcome}");
            all_passed &= outcome.passed;
        }
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}
