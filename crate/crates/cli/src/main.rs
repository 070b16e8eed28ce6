//! `specobs`: batch front end for observer design, simulation and validation.
//!
//! Exit codes: 0 success, 1 configuration or generic failure, 2 the projected
//! pair is not observable, 3 the Riccati solve failed, 4 design artifacts
//! requested with `--from-design` are missing or stale.

mod manifest;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::{Parser, Subcommand};
use serde_json::json;

use manifest::OutputDir;
use specobs_core::discretize::assemble_generator;
use specobs_core::experiment::diagnostics;
use specobs_core::report::{
    design_json, kappa_csv, norms_csv, snapshots_csv, spectrum_json, summary_json, to_pretty,
};
use specobs_core::spectral::{discrete_spectrum, SelectionOptions};
use specobs_core::validate::validate_config;
use specobs_core::{
    design_observer, run_error_experiment, ExperimentConfig, Field, ObserverDesign, ObserverError, C64,
};

#[derive(Parser)]
#[command(name = "specobs", version, about = "Spectral boundary observer for a counter-flow heat exchanger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design κ for every configured rate; writes design_<tag>.json and kappa_<tag>.csv.
    Design {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate the error system for the direct model and each designed observer.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated rates; overrides the config.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Include the direct model (κ = 0).
        #[arg(long)]
        direct: bool,
        /// Use κ from a previous `design` output instead of designing inline.
        #[arg(long)]
        from_design: Option<PathBuf>,
    },
    /// Run the invariant suite and print a pass/fail table.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Export the discrete spectrum of the shifted generator.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "lambda-o")]
        lambda_o: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Self { code, kind, message: message.into() }
    }
}

impl From<ObserverError> for Failure {
    fn from(e: ObserverError) -> Self {
        let (code, kind) = match &e {
            ObserverError::NotObservable { .. } => (2, "not_observable"),
            ObserverError::Riccati { .. } => (3, "riccati"),
            ObserverError::InvalidParameter { .. } => (1, "invalid_parameter"),
            _ => (1, "numerical"),
        };
        Self::new(code, kind, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::new(1, "io", e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn read_config(path: &Path) -> Result<(ExperimentConfig, String), Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::new(1, "invalid_parameter", format!("{}: {e}", path.display())))?;
    Ok((ExperimentConfig::from_json(&text)?, text))
}

fn tag(lambda_o: f64) -> String {
    format!("lambda_{lambda_o}")
}

fn thread_count(jobs: usize) -> usize {
    let requested = std::env::var("SPECOBS_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&k| k > 0);
    let available = std::thread::available_parallelism().map_or(1, |k| k.get());
    requested.unwrap_or(available).clamp(1, jobs.max(1))
}

/// Runs `f` over `jobs` on a bounded pool. Results come back in job order.
fn run_pool<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..thread_count(jobs.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                *slots[i].lock().unwrap() = Some(f(job));
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("every job ran")).collect()
}

/// The first failure in job order, so the reported error does not depend on scheduling.
fn first_failure<T>(results: Vec<Result<T, Failure>>) -> Result<Vec<T>, Failure> {
    results.into_iter().collect()
}

fn design_for(config: &ExperimentConfig, lambda_o: f64) -> Result<ObserverDesign, Failure> {
    let grid = config.grid()?;
    Ok(design_observer(&config.params, &grid, lambda_o, SelectionOptions::default())?)
}

fn cmd_design(config_path: &Path, out: &Path) -> CmdResult {
    let (config, text) = read_config(config_path)?;
    let dir = OutputDir::create(out)?;
    let results = run_pool(&config.rates, |&rate| -> Result<(), Failure> {
        let t = tag(rate);
        let design = dir.timed(&format!("design {t}"), || design_for(&config, rate))?;
        for notice in &design.notices {
            eprintln!("notice [{t}]: {notice}");
        }
        println!("{t}: q = {}, |κ| = {:.6e}", design.q(), design.gain.norm());
        dir.write(&format!("design_{t}.json"), &to_pretty(&design_json(&design, &config)))?;
        dir.write(&format!("kappa_{t}.csv"), &kappa_csv(&design.gain))?;
        Ok(())
    });
    first_failure(results)?;
    dir.finish("design", &text)?;
    Ok(())
}

fn parse_kappa_csv(text: &str, n: usize) -> Option<Field> {
    let mut lines = text.lines();
    if lines.next()? != "x,re_h,im_h,re_c,im_c" {
        return None;
    }
    let mut f = Field::zeros(n);
    let mut count = 0;
    for (i, line) in lines.enumerate() {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().ok()).collect::<Option<_>>()?;
        if v.len() != 5 || i >= n {
            return None;
        }
        f.zh[i] = C64::new(v[1], v[2]);
        f.zc[i] = C64::new(v[3], v[4]);
        count += 1;
    }
    (count == n).then_some(f)
}

/// Loads κ written by `design` and checks it belongs to this configuration.
fn load_design(dir: &Path, config: &ExperimentConfig, lambda_o: f64) -> Result<Field, Failure> {
    let t = tag(lambda_o);
    let missing = |what: String| Failure::new(4, "missing_design", what);
    let report_path = dir.join(format!("design_{t}.json"));
    let kappa_path = dir.join(format!("kappa_{t}.csv"));
    let report: serde_json::Value = fs::read_to_string(&report_path)
        .ok()
        .and_then(|s| serde_json::from_str(&s).ok())
        .ok_or_else(|| missing(format!("cannot read {}", report_path.display())))?;
    let stored: Option<ExperimentConfig> = serde_json::from_value(report["config"].clone()).ok();
    if stored.as_ref().map(|c| (&c.params, c.grid.n)) != Some((&config.params, config.grid.n)) {
        return Err(missing(format!("{} was designed for a different model or grid", report_path.display())));
    }
    let kappa_text = fs::read_to_string(&kappa_path)
        .map_err(|e| missing(format!("cannot read {}: {e}", kappa_path.display())))?;
    parse_kappa_csv(&kappa_text, config.grid.n)
        .ok_or_else(|| missing(format!("{} is malformed", kappa_path.display())))
}

#[derive(Clone, Copy)]
enum Job {
    Direct,
    Rate(f64),
}

fn simulate_job(
    config: &ExperimentConfig,
    dir: &OutputDir,
    job: Job,
    from_design: Option<&Path>,
) -> Result<(String, serde_json::Value), Failure> {
    let grid = config.grid()?;
    let design = match job {
        Job::Direct => None,
        Job::Rate(rate) => {
            // κ from disk is checked before any design work so exit 4 is cheap
            let stored = from_design.map(|d| load_design(d, config, rate)).transpose()?;
            let mut d = dir.timed(&format!("design {}", tag(rate)), || design_for(config, rate))?;
            if let Some(k) = stored {
                d.gain.kappa = k;
            }
            Some(d)
        }
    };
    let gain = design.as_ref().map(|d| &d.gain);
    let name = match job {
        Job::Direct => "direct".to_string(),
        Job::Rate(rate) => tag(rate),
    };
    let result = dir.timed(&format!("simulate {name}"), || run_error_experiment(config, gain))?;
    let diag = match &design {
        Some(d) => Some(diagnostics(&result, &d.gain.basis)?),
        None => None,
    };
    for w in &result.warnings {
        eprintln!("warning [{name}]: {w}");
    }
    dir.write(&format!("norms_{name}.csv"), &norms_csv(&result))?;
    dir.write(&format!("snapshots_{name}.csv"), &snapshots_csv(&result, &grid))?;
    let summary = summary_json(&result, design.as_ref(), diag.as_ref(), config);
    dir.write(&format!("summary_{name}.json"), &to_pretty(&summary))?;
    Ok((name, summary))
}

fn cmd_simulate(
    config_path: &Path,
    out: &Path,
    rates: Option<Vec<f64>>,
    direct: bool,
    from_design: Option<&Path>,
) -> CmdResult {
    let (mut config, text) = read_config(config_path)?;
    let explicit = rates.is_some() || direct;
    if let Some(r) = rates {
        config.rates = r;
        config.validate()?;
    }
    let mut jobs = Vec::new();
    if direct || !explicit {
        jobs.push(Job::Direct);
    }
    if !explicit || !config.rates.is_empty() {
        jobs.extend(config.rates.iter().map(|&r| Job::Rate(r)));
    }
    let dir = OutputDir::create(out)?;
    let results = run_pool(&jobs, |&job| simulate_job(&config, &dir, job, from_design));
    let summaries: BTreeMap<String, serde_json::Value> = first_failure(results)?.into_iter().collect();
    for (name, s) in &summaries {
        println!(
            "{name}: q = {}, fitted rate = {}, final norm = {}",
            s["q"], s["fitted_rate"], s["final_norm"]
        );
    }
    dir.finish("simulate", &text)?;
    Ok(())
}

fn cmd_validate(config_path: &Path) -> CmdResult {
    let (config, _) = read_config(config_path)?;
    let report = validate_config(&config)?;
    print!("{}", report.table());
    if report.all_passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        let names: Vec<&str> = report.failures().map(|c| c.name.as_str()).collect();
        Err(Failure::new(1, "invariant", format!("failed checks: {}", names.join("; "))))
    }
}

fn cmd_spectrum(config_path: &Path, lambda_o: f64, out: &Path) -> CmdResult {
    let (config, _) = read_config(config_path)?;
    if !lambda_o.is_finite() {
        return Err(Failure::new(1, "invalid_parameter", format!("lambda-o must be finite, got {lambda_o}")));
    }
    let grid = config.grid()?;
    let spectrum = discrete_spectrum(&assemble_generator(&config.params, &grid, lambda_o, None)?)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(out, to_pretty(&spectrum_json(&spectrum, &config.params)))?;
    println!("{} eigenvalues, abscissa {:.6e}", spectrum.modes.len(), spectrum.abscissa());
    Ok(())
}

fn write_error_file(out: Option<&Path>, command: &str, f: &Failure) {
    let Some(dir) = out else { return };
    let body = json!({ "command": command, "exit_code": f.code, "kind": f.kind, "message": f.message });
    if fs::create_dir_all(dir).is_ok() {
        let _ = fs::write(dir.join("error.json"), to_pretty(&body));
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, out, result) = match &cli.command {
        Command::Design { config, out } => ("design", Some(out.as_path()), cmd_design(config, out)),
        Command::Simulate { config, out, rates, direct, from_design } => (
            "simulate",
            Some(out.as_path()),
            cmd_simulate(config, out, rates.clone(), *direct, from_design.as_deref()),
        ),
        Command::Validate { config } => ("validate", None, cmd_validate(config)),
        Command::Spectrum { config, lambda_o, out } => ("spectrum", out.parent(), cmd_spectrum(config, *lambda_o, out)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            write_error_file(out, name, &f);
            ExitCode::from(f.code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_taxonomy() {
        assert_eq!(Failure::from(ObserverError::NotObservable { worst_margin: 0.0 }).code, 2);
        let r = ObserverError::Riccati { reason: "x".into(), residual: 1.0, abscissa: 0.0 };
        assert_eq!(Failure::from(r).code, 3);
        let p = ObserverError::InvalidParameter { name: "c1", reason: "x".into() };
        assert_eq!(Failure::from(p).code, 1);
    }

    #[test]
    fn kappa_csv_round_trip() {
        let grid = specobs_core::SpatialGrid::new(4).unwrap();
        let mut gain = specobs_core::design::ObserverGain::zero(&grid, 1.0);
        gain.kappa.zh[1] = C64::new(0.1, -1.0 / 3.0);
        gain.kappa.zc[2] = C64::new(1e-300, 7.0);
        let back = parse_kappa_csv(&kappa_csv(&gain), 4).unwrap();
        assert_eq!(back, gain.kappa);
        assert!(parse_kappa_csv(&kappa_csv(&gain), 5).is_none());
        assert!(parse_kappa_csv("x,y\n", 4).is_none());
    }

    #[test]
    fn pool_preserves_order() {
        let jobs: Vec<usize> = (0..10).collect();
        assert_eq!(run_pool(&jobs, |j| j * j), jobs.iter().map(|j| j * j).collect::<Vec<_>>());
    }
}
