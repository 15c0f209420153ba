//! Command-line front end: single runs, phase-diagram sweeps, capacity
//! audits, exponent tables, and the numerical self-checks.
//!
//! Exit codes: 0 for a completed experiment regardless of how it was
//! classified, 2 for configuration errors (the message names the offending
//! field), 3 when a computation overflowed outside the blow-up protocol,
//! 1 for anything else.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use fujita_lab::config::ExperimentConfig;
use fujita_lab::dynamics::{Classification, RunResult};
use fujita_lab::capacity::{CapacityVerdict, ConditionVerdict, KernelConditionReport};
use fujita_lab::experiments::{self, AuditOutcome, PhaseDiagram, THREADS_ENV};
use fujita_lab::par;
use fujita_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "fujita-lab", version, about = "Blow-up vs decay experiments for fractional diffusion with a nonlocal source")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and classify it.
    Run(JobArgs),
    /// Classify a grid of problems and bracket the blow-up/decay transition.
    Sweep(JobArgs),
    /// Re-run the configured trajectory and audit it against the window inequality.
    Audit(JobArgs),
    /// Print the critical exponents for the configured equation.
    Exponents {
        /// Experiment description (TOML); defaults apply when omitted.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
    },
    /// Run the numerical self-checks and report each one.
    Verify {
        /// Seed for the randomized fields.
        #[arg(long, value_name = "U64", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct JobArgs {
    /// Experiment description (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Write artifacts under this directory instead of `outputs.directory`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for the parallel maps; 0 keeps the pool default.
    #[arg(long, value_name = "N")]
    workers: Option<usize>,
    /// Overrides the seed recorded in the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Exponents { config } => cmd_exponents(config.as_deref()),
        Command::Verify { seed } => cmd_verify(*seed),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parameter { .. } => 2,
        Error::Overflow { .. } | Error::NonFinite { .. } => 3,
        _ => 1,
    }
}

/// `FUJITA_LAB_THREADS` beats `--workers`; nothing set keeps the pool default.
fn resolve_workers(flag: Option<usize>) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| {
            Error::Config(format!(
                "{THREADS_ENV}: expected a worker count, got {text:?}"
            ))
        }),
        Err(std::env::VarError::NotPresent) => Ok(flag.unwrap_or(0)),
        Err(e) => Err(Error::Config(format!("{THREADS_ENV}: {e}"))),
    }
}

/// Loads the config, applies the command-line overrides, and reports the
/// effective worker count. Returns the artifact base directory alongside.
fn prepare(args: &JobArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let workers = par::install_workers(resolve_workers(args.workers)?);
    println!("workers: {workers}");
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let base = match &args.out {
        Some(dir) => dir.clone(),
        None => config.resolve_path(&config.outputs.directory),
    };
    Ok((config, base))
}

fn report_files(dir: &Path, files: &[PathBuf]) {
    println!("wrote {}", dir.display());
    for file in files {
        if let Some(name) = file.file_name() {
            println!("  {}", name.to_string_lossy());
        }
    }
}

fn describe(class: &Classification) -> String {
    match class {
        Classification::GlobalDecay => "global-decay".into(),
        Classification::Blowup {
            t_estimate,
            wide_uncertainty,
            ..
        } => {
            if *wide_uncertainty {
                format!("blowup, T_est = {t_estimate:.6e} (wide uncertainty)")
            } else {
                format!("blowup, T_est = {t_estimate:.6e}")
            }
        }
        Classification::Inconclusive { reason } => format!("inconclusive: {reason}"),
    }
}

fn cmd_run(args: &JobArgs) -> Result<i32> {
    let (config, base) = prepare(args)?;
    let run = experiments::run_single(&config)?;
    println!("classification: {}", describe(&run.classification));
    println!(
        "sup {:.6e} -> {:.6e} over {} steps to t = {:.6e}",
        run.initial_sup, run.final_sup, run.steps, run.final_time
    );
    let dir = experiments::create_artifact_dir(&base, &config, "run")?;
    let files = experiments::write_run_artifacts(&config, &run, &dir)?;
    report_files(&dir, &files);
    Ok(0)
}

fn summarize_sweep(diagram: &PhaseDiagram) {
    let mut blowup = 0;
    let mut decay = 0;
    let mut inconclusive = 0;
    let mut failed = 0;
    for cell in &diagram.cells {
        match &cell.classification {
            Some(Classification::Blowup { .. }) => blowup += 1,
            Some(Classification::GlobalDecay) => decay += 1,
            Some(Classification::Inconclusive { .. }) => inconclusive += 1,
            None => failed += 1,
        }
    }
    println!(
        "cells: {} ({blowup} blowup, {decay} global-decay, {inconclusive} inconclusive, {failed} failed)",
        diagram.cells.len()
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
    for band in &diagram.bands {
        println!(
            "  alpha {:.4} amplitude {:.4e}: last blowup p = {}, first decay p = {}, predicted transition {}",
            band.alpha,
            band.amplitude,
            opt(band.last_blowup_p),
            opt(band.first_decay_p),
            opt(band.predicted_fujita),
        );
    }
}

fn cmd_sweep(args: &JobArgs) -> Result<i32> {
    let (config, base) = prepare(args)?;
    let diagram = experiments::sweep(&config)?;
    summarize_sweep(&diagram);
    let dir = experiments::create_artifact_dir(&base, &config, "sweep")?;
    let files = experiments::write_sweep_artifacts(&config, &diagram, &dir)?;
    report_files(&dir, &files);
    Ok(0)
}

fn flag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAIL"
    }
}

fn describe_verdict(label: &str, verdict: &CapacityVerdict) {
    match verdict {
        CapacityVerdict::VacuousPass => {
            println!("{label}: vacuous (no nonlinear mass in any window)")
        }
        CapacityVerdict::Subcritical {
            master_ok,
            envelope_ok,
            predicted_decay,
            fitted_decay,
            decay_ok,
            ..
        } => println!(
            "{label}: master {}, envelope {}, decay slope {fitted_decay:.4} vs predicted {predicted_decay:.4} {}",
            flag(*master_ok),
            flag(*envelope_ok),
            flag(*decay_ok),
        ),
        CapacityVerdict::Critical {
            master_ok,
            absorbed_ok,
            couplings,
            tail_shrinks,
        } => {
            let tail = match tail_shrinks {
                Some(true) => "tail shrinks",
                Some(false) => "tail does not shrink",
                None => "tail trend not resolved",
            };
            println!(
                "{label}: master {}, absorption {}, {tail} over k = {couplings:?}",
                flag(*master_ok),
                flag(*absorbed_ok),
            );
        }
    }
}

fn describe_condition(verdict: &ConditionVerdict) -> &'static str {
    match verdict {
        ConditionVerdict::Holds => "holds",
        ConditionVerdict::Fails => "fails",
        ConditionVerdict::Undecidable => "undecidable",
    }
}

fn describe_kernel(report: &KernelConditionReport) {
    let mut growth = format!(
        "kernel growth condition: {}",
        describe_condition(&report.growth.verdict)
    );
    if let Some(th) = report.riesz_threshold {
        growth.push_str(&format!(" (riesz predicts blow-up for p <= {th:.4})"));
    }
    println!("{growth}");
    if let (Some(tail), Some(gamma)) = (&report.tail, report.tail_exponent) {
        println!(
            "kernel tail condition at gamma = {gamma:.4}: {}",
            describe_condition(&tail.verdict)
        );
    }
}

fn summarize_audit(run: &RunResult, outcome: &AuditOutcome) {
    println!("trajectory: {} ({} steps)", describe(&run.classification), run.steps);
    println!(
        "window sign audit: {} ({} radii)",
        flag(outcome.ju_ok),
        outcome.ju.len()
    );
    if let Some(mode) = &outcome.subcritical {
        match &mode.verdict {
            Some(v) => describe_verdict("subcritical", v),
            None => println!("subcritical: windows recorded, no envelope verdict for this source"),
        }
    }
    if let Some(mode) = &outcome.critical {
        match &mode.verdict {
            Some(v) => describe_verdict("critical", v),
            None => println!("critical: windows recorded, no verdict"),
        }
    }
    if let Some(report) = &outcome.scaling {
        let fitted = |fit: &Option<fujita_lab::capacity::ScalingFit>| {
            fit.as_ref()
                .map(|f| format!("{:.4} (predicted {:.4})", f.exponent, f.predicted))
                .unwrap_or_else(|| "-".into())
        };
        println!(
            "scaling fits: J2 vs R {}, J1 vs T {}, J1 vs R {}",
            fitted(&report.j2_radius_fit),
            fitted(&report.j1_time_fit),
            fitted(&report.j1_radius_fit),
        );
    }
    if let Some(kernel) = &outcome.kernel_conditions {
        describe_kernel(kernel);
    }
}

fn cmd_audit(args: &JobArgs) -> Result<i32> {
    let (config, base) = prepare(args)?;
    let run = experiments::run_for_audit(&config)?;
    let outcome = experiments::audit_run(&config, &run)?;
    summarize_audit(&run, &outcome);
    let dir = experiments::create_artifact_dir(&base, &config, "audit")?;
    let files = experiments::write_audit_artifacts(&config, &run, &outcome, &dir)?;
    report_files(&dir, &files);
    Ok(0)
}

fn cmd_exponents(path: Option<&Path>) -> Result<i32> {
    let config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let rows = experiments::exponent_rows(&config)?;
    let eq = &config.equation;
    println!("n = {}, beta = {:.4}, p = {:.4}", eq.dim, eq.beta, eq.p);
    println!(
        "{:<9} {:<10} {:<11} {:<10} {:<11} {}",
        "alpha", "p_local", "p_scaling", "p_fujita", "q_critical", "admissible q at p"
    );
    for row in &rows {
        let interval = row
            .weight_interval
            .map(|(lo, hi)| format!("({lo:.4}, {hi:.4})"))
            .unwrap_or_else(|| "none".into());
        println!(
            "{:<9.4} {:<10.4} {:<11.4} {:<10.4} {:<11.4} {interval}",
            row.alpha, row.p_local, row.p_scaling, row.p_fujita, row.q_critical
        );
    }
    Ok(0)
}

fn cmd_verify(seed: u64) -> Result<i32> {
    let outcomes = experiments::verify_suite(seed);
    let mut passed = 0;
    for check in &outcomes {
        println!(
            "{:<5} {:<26} {}",
            flag(check.passed),
            check.name,
            check.detail
        );
        if check.passed {
            passed += 1;
        }
    }
    println!("{passed}/{} checks passed", outcomes.len());
    Ok(if passed == outcomes.len() { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        assert_eq!(exit_code(&Error::Config("grid.box_length: bad".into())), 2);
        assert_eq!(exit_code(&Error::parameter("p", "must exceed 1")), 2);
        assert_eq!(exit_code(&Error::Overflow { t: 0.5, sup: 1e300 }), 3);
        assert_eq!(
            exit_code(&Error::NonFinite {
                index: 3,
                value: f64::NAN
            }),
            3
        );
        assert_eq!(
            exit_code(&Error::NoContraction {
                halvings: 8,
                last_ratio: 2.0
            }),
            1
        );
    }

    #[test]
    fn environment_beats_the_workers_flag() {
        // the test process owns this variable name; restore it afterwards
        std::env::remove_var(THREADS_ENV);
        assert_eq!(resolve_workers(None).unwrap(), 0);
        assert_eq!(resolve_workers(Some(4)).unwrap(), 4);
        std::env::set_var(THREADS_ENV, "2");
        assert_eq!(resolve_workers(Some(4)).unwrap(), 2);
        std::env::set_var(THREADS_ENV, "soon");
        let err = resolve_workers(Some(4)).unwrap_err();
        assert!(err.to_string().contains(THREADS_ENV));
        std::env::remove_var(THREADS_ENV);
    }
}
