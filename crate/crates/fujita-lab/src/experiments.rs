//! Drivers behind the command-line interface: single runs, phase-diagram
//! sweeps, capacity audits, exponent tables, the verification suite, and
//! the on-disk artifact layout.
//!
//! Everything here is deterministic for a fixed config and seed; sweeps
//! produce identical bytes no matter how many workers execute the cells.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::capacity::{
    capacity_report, critical_points, cutoff_profile, grid_points, ju_audit,
    kernel_limit_conditions, mass_functional, subcritical_points, verify_capacity_inequality,
    AuditPoint, CapacityMode, CapacityReport, CapacityVerdict, ConditionVerdict, JuAudit,
    KernelConditionReport,
};
use crate::config::{
    AuditMode, ExperimentConfig, InitialFamily, OutputFormat, SourceKind,
};
use crate::dynamics::{evolve, history_to_csv, Classification, RunResult, SolverConfig};
use crate::error::{Error, Result};
use crate::exponents::CriticalExponents;
use crate::grid::{Field, Grid};
use crate::operators::{ConvolutionKernel, KernelProfile};
use crate::oracle::{direct_circular_convolution, heat_gaussian, ode_blowup_time};
use crate::par;
use crate::propagator::Propagator;
use crate::source::{EquationParams, Nonlinearity, ParamsSummary};

pub const PHASE_SCHEMA: &str = "fujita-lab/phase-diagram/v1";
pub const AUDIT_SCHEMA: &str = "fujita-lab/audit/v1";
/// Overrides the worker count of the command-line tool when set.
pub const THREADS_ENV: &str = "FUJITA_LAB_THREADS";

/// One solve of the configured problem.
pub fn run_single(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let grid = config.build_grid()?;
    let params = config.build_params()?;
    let u0 = config.build_initial(grid)?;
    evolve(&u0, &params, &config.solver)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Alpha,
    Amplitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseCell {
    pub p: f64,
    pub alpha: f64,
    pub amplitude: f64,
    /// Reserved for stochastic data families; recorded so a cell can be
    /// replayed in isolation.
    pub seed: u64,
    pub classification: Option<Classification>,
    pub blowup_time: Option<f64>,
    pub final_sup: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub p_fujita: f64,
    pub p_scaling: f64,
}

/// Empirical bracket of the blow-up/decay transition along one sweep row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DichotomyBand {
    pub alpha: f64,
    pub amplitude: f64,
    /// Largest exponent whose cell blew up.
    pub last_blowup_p: Option<f64>,
    /// Smallest decaying exponent above every blow-up cell.
    pub first_decay_p: Option<f64>,
    pub predicted_fujita: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub schema: String,
    pub axis: SweepAxis,
    pub p_values: Vec<f64>,
    pub axis_values: Vec<f64>,
    /// Row-major over `axis_values`, `p_values` fastest.
    pub cells: Vec<PhaseCell>,
    pub curves: Vec<CurvePoint>,
    pub bands: Vec<DichotomyBand>,
}

impl PhaseDiagram {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let diagram: PhaseDiagram = serde_json::from_str(text)?;
        if diagram.schema != PHASE_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported phase-diagram schema {:?}, expected {PHASE_SCHEMA:?}",
                diagram.schema
            )));
        }
        Ok(diagram)
    }

    pub fn cells_csv(&self) -> String {
        let mut out = String::from("p,alpha,amplitude,seed,classification,blowup_time,final_sup,error\n");
        for cell in &self.cells {
            let kind = match &cell.classification {
                Some(Classification::GlobalDecay) => "global_decay",
                Some(Classification::Blowup { .. }) => "blowup",
                Some(Classification::Inconclusive { .. }) => "inconclusive",
                None => "",
            };
            out.push_str(&format!(
                "{:e},{:e},{:e},{},{},{},{},{}\n",
                cell.p,
                cell.alpha,
                cell.amplitude,
                cell.seed,
                kind,
                cell.blowup_time.map(|t| format!("{t:e}")).unwrap_or_default(),
                cell.final_sup.map(|s| format!("{s:e}")).unwrap_or_default(),
                cell.error.as_deref().map(csv_quote).unwrap_or_default(),
            ));
        }
        out
    }
}

fn csv_quote(text: &str) -> String {
    format!("\"{}\"", text.replace('"', "\"\""))
}

struct CellSpec {
    p: f64,
    alpha: f64,
    amplitude: f64,
    seed: u64,
}

/// Classifies every cell of the configured grid of problems. Cells fail
/// independently: an error is recorded in the cell and the sweep moves on.
pub fn sweep(config: &ExperimentConfig) -> Result<PhaseDiagram> {
    config.validate()?;
    let sw = &config.sweep;
    let p_values = if sw.p_grid.is_empty() {
        vec![config.equation.p]
    } else {
        sw.p_grid.clone()
    };
    let (axis, axis_values) = if !sw.alpha_grid.is_empty() {
        (SweepAxis::Alpha, sw.alpha_grid.clone())
    } else if !sw.amplitude_grid.is_empty() {
        (SweepAxis::Amplitude, sw.amplitude_grid.clone())
    } else {
        (SweepAxis::Amplitude, vec![config.initial.amplitude])
    };
    let grid = config.build_grid()?;

    let mut specs = Vec::with_capacity(axis_values.len() * p_values.len());
    for (j, &axis_value) in axis_values.iter().enumerate() {
        for (i, &p) in p_values.iter().enumerate() {
            let (alpha, amplitude) = match axis {
                SweepAxis::Alpha => (axis_value, config.initial.amplitude),
                SweepAxis::Amplitude => (config.equation.alpha, axis_value),
            };
            specs.push(CellSpec {
                p,
                alpha,
                amplitude,
                seed: cell_seed(config.seed, i, j),
            });
        }
    }
    let cells = par::map(&specs, |spec| run_cell(config, grid, spec));

    let curves = if config.equation.source == SourceKind::Riesz {
        let alphas: Vec<f64> = match axis {
            SweepAxis::Alpha => axis_values.clone(),
            SweepAxis::Amplitude => vec![config.equation.alpha],
        };
        alphas
            .iter()
            .map(|&alpha| {
                let e = CriticalExponents::new(config.equation.dim, config.equation.beta, alpha)?;
                Ok(CurvePoint {
                    alpha,
                    p_fujita: e.fujita(),
                    p_scaling: e.scaling(),
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let bands = axis_values
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let row = &cells[j * p_values.len()..(j + 1) * p_values.len()];
            band_for_row(row, config)
        })
        .collect();

    Ok(PhaseDiagram {
        schema: PHASE_SCHEMA.to_string(),
        axis,
        p_values,
        axis_values,
        cells,
        curves,
        bands,
    })
}

fn run_cell(config: &ExperimentConfig, grid: Grid, spec: &CellSpec) -> PhaseCell {
    let mut cell = PhaseCell {
        p: spec.p,
        alpha: spec.alpha,
        amplitude: spec.amplitude,
        seed: spec.seed,
        classification: None,
        blowup_time: None,
        final_sup: None,
        error: None,
    };
    let outcome = (|| -> Result<RunResult> {
        let params = config.build_params_at(spec.p, spec.alpha)?;
        let u0 = config.build_initial_at(grid, spec.amplitude)?;
        evolve(&u0, &params, &config.solver)
    })();
    match outcome {
        Ok(run) => {
            if let Classification::Blowup { t_estimate, .. } = &run.classification {
                cell.blowup_time = Some(*t_estimate);
            }
            cell.final_sup = Some(run.final_sup);
            cell.classification = Some(run.classification);
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

fn band_for_row(row: &[PhaseCell], config: &ExperimentConfig) -> DichotomyBand {
    let alpha = row.first().map(|c| c.alpha).unwrap_or(f64::NAN);
    let amplitude = row.first().map(|c| c.amplitude).unwrap_or(f64::NAN);
    let last_blowup_p = row
        .iter()
        .filter(|c| matches!(c.classification, Some(Classification::Blowup { .. })))
        .map(|c| c.p)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
    let first_decay_p = row
        .iter()
        .filter(|c| matches!(c.classification, Some(Classification::GlobalDecay)))
        .filter(|c| last_blowup_p.map_or(true, |b| c.p > b))
        .map(|c| c.p)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.min(p))));
    let predicted_fujita = if config.equation.source == SourceKind::Riesz {
        CriticalExponents::new(config.equation.dim, config.equation.beta, alpha)
            .ok()
            .map(|e| e.fujita())
    } else {
        None
    };
    DichotomyBand {
        alpha,
        amplitude,
        last_blowup_p,
        first_decay_p,
        predicted_fujita,
    }
}

fn cell_seed(base: u64, i: usize, j: usize) -> u64 {
    let mut bytes = [0u8; 24];
    bytes[..8].copy_from_slice(&base.to_le_bytes());
    bytes[8..16].copy_from_slice(&(i as u64).to_le_bytes());
    bytes[16..].copy_from_slice(&(j as u64).to_le_bytes());
    fnv1a(&bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOutcome {
    pub report: CapacityReport,
    /// `None` when the mode has no verdict for this source (the envelope
    /// exponent needs the plain Riesz kernel).
    pub verdict: Option<CapacityVerdict>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JuAuditRow {
    pub r: f64,
    pub audit: JuAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditOutcome {
    pub schema: String,
    pub params: ParamsSummary,
    /// Sign audit of the window commutator defect, one row per window radius.
    pub ju: Vec<JuAuditRow>,
    pub ju_ok: bool,
    pub subcritical: Option<ModeOutcome>,
    pub critical: Option<ModeOutcome>,
    /// Cross grid of radii and times isolating the scaling fits.
    pub scaling: Option<CapacityReport>,
    pub kernel_conditions: Option<KernelConditionReport>,
}

impl AuditOutcome {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let outcome: AuditOutcome = serde_json::from_str(text)?;
        if outcome.schema != AUDIT_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported audit schema {:?}, expected {AUDIT_SCHEMA:?}",
                outcome.schema
            )));
        }
        Ok(outcome)
    }
}

/// Solver settings for the trajectory an audit consumes: snapshots dense
/// enough for the smallest window and a horizon covering the largest.
/// An explicit `snapshot_interval` is honored even if too sparse; the
/// audit then reports the required cadence.
pub fn audit_solver_config(config: &ExperimentConfig) -> Result<SolverConfig> {
    let times = &config.audit.times;
    if times.is_empty() {
        return Err(Error::Config(
            "audit.times: need at least one window horizon".into(),
        ));
    }
    let min_t = times.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_t = times.iter().cloned().fold(0.0, f64::max);
    let mut solver = config.solver.clone();
    if solver.snapshot_interval == 0.0 {
        solver.snapshot_interval = min_t / 16.0;
    }
    if solver.t_end < max_t {
        solver.t_end = max_t;
    }
    Ok(solver)
}

pub fn run_for_audit(config: &ExperimentConfig) -> Result<RunResult> {
    config.validate()?;
    let solver = audit_solver_config(config)?;
    let grid = config.build_grid()?;
    let params = config.build_params()?;
    let u0 = config.build_initial(grid)?;
    evolve(&u0, &params, &solver)
}

/// Audits a stored trajectory against the configured windows: the sign of
/// the window defect, the master inequality in every requested mode, the
/// scaling fits when a radius grid is configured, and the kernel limit
/// conditions for nonlocal sources.
pub fn audit_run(config: &ExperimentConfig, run: &RunResult) -> Result<AuditOutcome> {
    config.validate()?;
    let times = &config.audit.times;
    if times.is_empty() {
        return Err(Error::Config(
            "audit.times: need at least one window horizon".into(),
        ));
    }
    let params = config.build_params()?;
    let beta = params.beta();
    let p = params.p();
    let grid = run.grid;

    let sub_points = config
        .audit
        .modes
        .contains(&AuditMode::Subcritical)
        .then(|| subcritical_points(beta, times));
    let crit_points = config
        .audit
        .modes
        .contains(&AuditMode::Critical)
        .then(|| critical_points(beta, &config.audit.couplings, times));
    let scaling_points = (!config.audit.radii.is_empty())
        .then(|| grid_points(&config.audit.radii, times));

    let mut radii: Vec<f64> = [&sub_points, &crit_points, &scaling_points]
        .into_iter()
        .flatten()
        .flat_map(|pts: &Vec<AuditPoint>| pts.iter().map(|pt| pt.r))
        .collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * a.abs().max(1.0));
    let ju = par::try_map(&radii, |&r| {
        Ok(JuAuditRow {
            r,
            audit: ju_audit(grid, beta, p, r)?,
        })
    })?;
    let ju_ok = ju.iter().all(|row| row.audit.ok);

    let riesz_source = matches!(params.nonlinearity(), Nonlinearity::Riesz(_));
    let subcritical = match sub_points {
        Some(points) => {
            let report = capacity_report(run, &params, &points)?;
            let verdict = if riesz_source {
                Some(verify_capacity_inequality(
                    &report,
                    &params,
                    CapacityMode::Subcritical,
                )?)
            } else {
                None
            };
            Some(ModeOutcome { report, verdict })
        }
        None => None,
    };
    let critical = match crit_points {
        Some(points) => {
            let report = capacity_report(run, &params, &points)?;
            let verdict = Some(verify_capacity_inequality(
                &report,
                &params,
                CapacityMode::Critical,
            )?);
            Some(ModeOutcome { report, verdict })
        }
        None => None,
    };
    let scaling = match scaling_points {
        Some(points) => Some(capacity_report(run, &params, &points)?),
        None => None,
    };
    let kernel_conditions = audit_kernel_report(config)?;

    Ok(AuditOutcome {
        schema: AUDIT_SCHEMA.to_string(),
        params: ParamsSummary::of(&params),
        ju,
        ju_ok,
        subcritical,
        critical,
        scaling,
        kernel_conditions,
    })
}

fn audit_kernel_report(config: &ExperimentConfig) -> Result<Option<KernelConditionReport>> {
    let eq = &config.equation;
    let kernel = match eq.source {
        SourceKind::Kernel => config.build_kernel()?,
        SourceKind::Riesz => {
            ConvolutionKernel::new(eq.dim, KernelProfile::Riesz { alpha: eq.alpha }, 1.0)?
        }
        _ => return Ok(None),
    };
    let tail = config.audit.tail_gamma.or_else(|| {
        (config.initial.family == InitialFamily::PowerDecay).then_some(config.initial.gamma)
    });
    kernel_limit_conditions(&kernel, eq.beta, eq.p, tail).map(Some)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    pub alpha: f64,
    pub p_fujita: f64,
    pub p_scaling: f64,
    pub p_local: f64,
    /// Critical Lebesgue index of the configured exponent.
    pub q_critical: f64,
    /// Weighted-norm indices admissible at the configured exponent, when
    /// the interval is nonempty.
    pub weight_interval: Option<(f64, f64)>,
}

/// One row per order in `sweep.alpha_grid`, or a single row at the
/// configured order.
pub fn exponent_rows(config: &ExperimentConfig) -> Result<Vec<ExponentRow>> {
    config.validate()?;
    let eq = &config.equation;
    let alphas = if config.sweep.alpha_grid.is_empty() {
        vec![eq.alpha]
    } else {
        config.sweep.alpha_grid.clone()
    };
    alphas
        .iter()
        .map(|&alpha| {
            let e = CriticalExponents::new(eq.dim, eq.beta, alpha)?;
            let weight_interval = e
                .admissible_weight_interval(eq.p)
                .ok()
                .filter(|(lo, hi)| lo < hi);
            Ok(ExponentRow {
                alpha,
                p_fujita: e.fujita(),
                p_scaling: e.scaling(),
                p_local: e.local_existence(),
                q_critical: e.critical_lebesgue(eq.p)?,
                weight_interval,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Fast self-checks of the spectral identities, the closed-form oracles,
/// the exponent formulas, and the window machinery. Randomized fields are
/// drawn from the given seed.
pub fn verify_suite(seed: u64) -> Vec<CheckOutcome> {
    let checks: Vec<(&str, fn(u64) -> Result<(bool, String)>)> = vec![
        ("fft-roundtrip", check_fft_roundtrip),
        ("convolution-oracle", check_convolution_oracle),
        ("heat-semigroup", check_heat_semigroup),
        ("heat-kernel-oracle", check_heat_kernel_oracle),
        ("exponent-order", check_exponent_order),
        ("window-profile", check_window_profile),
        ("window-defect-sign", check_window_defect),
        ("growth-condition-flip", check_growth_flip),
        ("local-blowup-oracle", check_local_blowup),
        ("signed-data-average-decay", check_signed_average),
    ];
    checks
        .into_iter()
        .map(|(name, f)| match f(seed) {
            Ok((passed, detail)) => CheckOutcome {
                name: name.to_string(),
                passed,
                detail,
            },
            Err(e) => CheckOutcome {
                name: name.to_string(),
                passed: false,
                detail: e.to_string(),
            },
        })
        .collect()
}

fn random_field(grid: Grid, seed: u64) -> Field {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Field::new(grid, values).expect("length matches by construction")
}

fn check_fft_roundtrip(seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(1, 12.0, 128)?;
    let u = random_field(grid, seed);
    let back = u.forward()?.backward()?;
    let err = u
        .values()
        .iter()
        .zip(back.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((err < 1e-12, format!("max roundtrip error {err:.3e}")))
}

fn check_convolution_oracle(seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(1, 16.0, 64)?;
    let f = random_field(grid, seed ^ 0x9e3779b97f4a7c15).map(|v| v * v);
    let kernel = ConvolutionKernel::new(
        1,
        KernelProfile::RieszWithCutoff {
            alpha: 0.5,
            cutoff: 2.0,
        },
        1.0,
    )?;
    let fast = kernel.convolve(&f)?;
    let slow = direct_circular_convolution(&kernel.sampled_field(grid)?, &f);
    let scale = fast.sup_abs().max(1e-300);
    let err = fast
        .values()
        .iter()
        .zip(slow.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    Ok((err < 1e-10, format!("relative disagreement {err:.3e}")))
}

fn check_heat_semigroup(seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(1, 20.0, 128)?;
    let u = random_field(grid, seed ^ 0x5851f42d4c957f2d);
    let prop = Propagator::new(grid, 1.5)?;
    let once = prop.semigroup_apply(&u, 0.7)?;
    let twice = prop.semigroup_apply(&prop.semigroup_apply(&u, 0.35)?, 0.35)?;
    let scale = once.sup_abs().max(1e-300);
    let err = once
        .values()
        .iter()
        .zip(twice.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale;
    Ok((err < 1e-12, format!("relative semigroup defect {err:.3e}")))
}

fn check_heat_kernel_oracle(_seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(1, 40.0, 256)?;
    let u0 = heat_gaussian(grid, 1.0, 0.0);
    let prop = Propagator::new(grid, 2.0)?;
    let evolved = prop.semigroup_apply(&u0, 1.25)?;
    let exact = heat_gaussian(grid, 1.0, 1.25);
    let err = evolved
        .values()
        .iter()
        .zip(exact.values())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok((err < 1e-8, format!("max disagreement {err:.3e}")))
}

fn check_exponent_order(_seed: u64) -> Result<(bool, String)> {
    let e = CriticalExponents::new(1, 2.0, 0.5)?;
    let ordered = e.local_existence() < e.scaling() && e.scaling() < e.fujita();
    let exact = (e.local_existence() - 2.0).abs() < 1e-12
        && (e.scaling() - 3.5).abs() < 1e-12
        && (e.fujita() - 6.0).abs() < 1e-12;
    Ok((
        ordered && exact,
        format!(
            "p_local {} < p_scaling {} < p_fujita {}",
            e.local_existence(),
            e.scaling(),
            e.fujita()
        ),
    ))
}

fn check_window_profile(_seed: u64) -> Result<(bool, String)> {
    let mut ok = cutoff_profile(0.3) == 1.0
        && cutoff_profile(1.2) == 0.0
        && (cutoff_profile(0.75) - 0.5).abs() < 1e-15;
    let mut prev = f64::INFINITY;
    for i in 0..=200 {
        let v = cutoff_profile(i as f64 / 100.0);
        ok &= v <= prev + 1e-15;
        prev = v;
    }
    Ok((ok, format!("midpoint value {}", cutoff_profile(0.75))))
}

fn check_window_defect(_seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(1, 32.0, 256)?;
    let audit = ju_audit(grid, 1.4, 3.0, 4.0)?;
    Ok((
        audit.ok,
        format!(
            "min defect {:.3e} against scale {:.3e}",
            audit.min_residual, audit.scale
        ),
    ))
}

fn check_growth_flip(_seed: u64) -> Result<(bool, String)> {
    // p = 7 sits far enough past the threshold 6 for the sampled decay to
    // clear the flat-exponent band
    let kernel = ConvolutionKernel::new(1, KernelProfile::Riesz { alpha: 0.5 }, 1.0)?;
    let below = kernel_limit_conditions(&kernel, 2.0, 5.9, None)?;
    let above = kernel_limit_conditions(&kernel, 2.0, 7.0, None)?;
    let ok = below.growth.verdict == ConditionVerdict::Holds
        && above.growth.verdict == ConditionVerdict::Fails;
    Ok((
        ok,
        format!(
            "p=5.9 {:?}, p=7.0 {:?}, threshold {:?}",
            below.growth.verdict, above.growth.verdict, below.riesz_threshold
        ),
    ))
}

fn check_local_blowup(_seed: u64) -> Result<(bool, String)> {
    let grid = Grid::new(1, 10.0, 16)?;
    let params = EquationParams::new(1, 2.0, 2.0, Nonlinearity::Local)?;
    let u0 = Field::constant(grid, 1.0);
    let mut solver = SolverConfig::default();
    solver.t_end = 2.0;
    solver.dt_max = 1e-3;
    solver.blowup_threshold = 1e6;
    let run = evolve(&u0, &params, &solver)?;
    let exact = ode_blowup_time(1.0, 2.0, 1.0);
    match run.classification {
        Classification::Blowup { t_estimate, .. } => {
            let rel = (t_estimate - exact).abs() / exact;
            Ok((rel < 0.02, format!("estimated {t_estimate:.5}, exact {exact}")))
        }
        other => Ok((false, format!("classified {other:?}"))),
    }
}

fn check_signed_average(_seed: u64) -> Result<(bool, String)> {
    // Zero-mean but asymmetric, so finite windows see a genuine imbalance
    // that the growing windows cancel.
    let grid = Grid::new(1, 40.0, 256)?;
    let positive = Field::from_fn(grid, |[x, _]| (-(x - 1.0) * (x - 1.0)).exp());
    let negative = Field::from_fn(grid, |[x, _]| (-4.0 * (x + 0.5) * (x + 0.5)).exp());
    let ratio = positive.mass() / negative.mass();
    let signed = positive.zip_map(&negative, |a, b| a - ratio * b)?;
    let radii = [2.0, 4.0, 8.0, 16.0];
    let series = mass_functional(&signed, 0.5, &radii)?;
    let first = series.first().map(|&(_, v)| v.abs()).unwrap_or(0.0);
    let last = series.last().map(|&(_, v)| v.abs()).unwrap_or(1.0);
    let ok = first > 1e-3 && last < 1e-6;
    Ok((
        ok,
        format!("window average falls from {first:.3e} to {last:.3e}"),
    ))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}

/// Date from a day count relative to 1970-01-01, civil calendar.
fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = (z - era * 146_097) as u64;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe as i64 + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

fn utc_stamp(now: SystemTime) -> String {
    let secs = now
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let (y, m, d) = civil_from_days((secs / 86_400) as i64);
    let sod = secs % 86_400;
    format!(
        "{y:04}{m:02}{d:02}T{:02}{:02}{:02}Z",
        sod / 3600,
        (sod % 3600) / 60,
        sod % 60
    )
}

/// Fresh artifact directory `<stamp>-<hash>` under `base`: the stamp
/// orders runs, the hash of the canonical config separates concurrent
/// invocations with different settings. An existing name gets a numeric
/// suffix instead of being reused.
pub fn create_artifact_dir(base: &Path, config: &ExperimentConfig, label: &str) -> Result<PathBuf> {
    let digest = fnv1a(format!("{label}\n{}", config.canonical_toml()?).as_bytes());
    let short = ((digest >> 32) ^ (digest & 0xffff_ffff)) as u32;
    let stem = format!("{}-{short:08x}", utc_stamp(SystemTime::now()));
    let mut dir = base.join(&stem);
    let mut n = 1;
    while dir.exists() {
        n += 1;
        dir = base.join(format!("{stem}-{n}"));
    }
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_artifact(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

fn write_config_echo(
    config: &ExperimentConfig,
    dir: &Path,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    write_artifact(dir, "config.toml", &config.canonical_toml()?, files)
}

pub fn write_run_artifacts(
    config: &ExperimentConfig,
    run: &RunResult,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    write_config_echo(config, dir, &mut files)?;
    let formats = &config.outputs.formats;
    if formats.contains(&OutputFormat::Json) {
        write_artifact(dir, "result.json", &(run.to_json()? + "\n"), &mut files)?;
    }
    if formats.contains(&OutputFormat::Csv) {
        write_artifact(dir, "history.csv", &history_to_csv(&run.history), &mut files)?;
    }
    if config.outputs.plot_script {
        write_artifact(dir, "plot_history.py", PLOT_HISTORY, &mut files)?;
    }
    Ok(files)
}

pub fn write_sweep_artifacts(
    config: &ExperimentConfig,
    diagram: &PhaseDiagram,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    write_config_echo(config, dir, &mut files)?;
    let formats = &config.outputs.formats;
    if formats.contains(&OutputFormat::Json) {
        write_artifact(
            dir,
            "phase_diagram.json",
            &(diagram.to_json()? + "\n"),
            &mut files,
        )?;
    }
    if formats.contains(&OutputFormat::Csv) {
        write_artifact(dir, "cells.csv", &diagram.cells_csv(), &mut files)?;
    }
    if config.outputs.plot_script {
        write_artifact(dir, "plot_phase.py", PLOT_PHASE, &mut files)?;
    }
    Ok(files)
}

pub fn write_audit_artifacts(
    config: &ExperimentConfig,
    run: &RunResult,
    outcome: &AuditOutcome,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    write_config_echo(config, dir, &mut files)?;
    let formats = &config.outputs.formats;
    if formats.contains(&OutputFormat::Json) {
        write_artifact(dir, "run.json", &(run.to_json()? + "\n"), &mut files)?;
        write_artifact(dir, "audit.json", &(outcome.to_json()? + "\n"), &mut files)?;
    }
    if formats.contains(&OutputFormat::Csv) {
        if let Some(mode) = &outcome.subcritical {
            write_artifact(dir, "capacity_subcritical.csv", &mode.report.to_csv(), &mut files)?;
        }
        if let Some(mode) = &outcome.critical {
            write_artifact(dir, "capacity_critical.csv", &mode.report.to_csv(), &mut files)?;
        }
        if let Some(report) = &outcome.scaling {
            write_artifact(dir, "capacity_scaling.csv", &report.to_csv(), &mut files)?;
        }
    }
    if config.outputs.plot_script {
        write_artifact(dir, "plot_capacity.py", PLOT_CAPACITY, &mut files)?;
    }
    Ok(files)
}

const PLOT_HISTORY: &str = r#"#!/usr/bin/env python3
"""Plot the norm history written next to this script."""
import csv
import pathlib

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).resolve().parent
with open(here / "history.csv", newline="") as fh:
    rows = list(csv.DictReader(fh))

fig, ax = plt.subplots(figsize=(7, 4.5))
for column in ("linf", "ls", "lqsc", "weighted", "boundary_mass"):
    points = [(float(r["t"]), float(r[column])) for r in rows if r.get(column)]
    if points:
        ax.plot([p[0] for p in points], [p[1] for p in points], label=column)
ax.set_xlabel("t")
ax.set_yscale("log")
ax.legend()
ax.grid(True, which="both", alpha=0.3)
fig.tight_layout()
fig.savefig(here / "history.png", dpi=150)
print(here / "history.png")
"#;

const PLOT_PHASE: &str = r#"#!/usr/bin/env python3
"""Plot the phase diagram written next to this script."""
import json
import pathlib

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).resolve().parent
with open(here / "phase_diagram.json") as fh:
    diagram = json.load(fh)

axis = diagram["axis"]
colors = {"global_decay": "tab:blue", "blowup": "tab:red", "inconclusive": "tab:gray"}
fig, ax = plt.subplots(figsize=(7, 5))
for cell in diagram["cells"]:
    y = cell["alpha"] if axis == "alpha" else cell["amplitude"]
    kind = (cell.get("classification") or {}).get("kind", "error")
    ax.scatter(cell["p"], y, c=colors.get(kind, "k"), marker="s", s=60)
if axis == "alpha":
    curve = diagram.get("curves", [])
    if curve:
        ax.plot([c["p_fujita"] for c in curve], [c["alpha"] for c in curve], "r--",
                label="critical exponent")
        ax.plot([c["p_scaling"] for c in curve], [c["alpha"] for c in curve], "b:",
                label="scaling exponent")
        ax.legend()
ax.set_xlabel("p")
ax.set_ylabel(axis)
fig.tight_layout()
fig.savefig(here / "phase_diagram.png", dpi=150)
print(here / "phase_diagram.png")
"#;

const PLOT_CAPACITY: &str = r#"#!/usr/bin/env python3
"""Plot the capacity audit tables written next to this script."""
import csv
import pathlib

import matplotlib.pyplot as plt

here = pathlib.Path(__file__).resolve().parent
tables = sorted(here.glob("capacity_*.csv"))
fig, axes = plt.subplots(1, max(len(tables), 1), figsize=(6 * max(len(tables), 1), 4.5),
                         squeeze=False)
for ax, path in zip(axes[0], tables):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for column in ("J1", "J2", "lhs", "rhs"):
        xs = [float(r["R"]) for r in rows]
        ys = [float(r[column]) for r in rows]
        if any(y > 0 for y in ys):
            ax.loglog(xs, ys, "o-", label=column)
    ax.set_xlabel("R")
    ax.set_title(path.stem)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
fig.tight_layout()
fig.savefig(here / "capacity.png", dpi=150)
print(here / "capacity.png")
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn fast_config() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.grid.box_length = 20.0;
        config.grid.points_per_axis = 64;
        config.initial.amplitude = 0.05;
        config.initial.width = 1.5;
        config.solver.t_end = 0.5;
        config.solver.history_stride = 8;
        config
    }

    #[test]
    fn sweeps_are_deterministic_and_ordered() {
        let mut config = fast_config();
        config.sweep.p_grid = vec![2.0, 3.0];
        config.sweep.amplitude_grid = vec![0.0, 0.05];
        let first = sweep(&config).unwrap();
        let second = sweep(&config).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.to_json().unwrap(), second.to_json().unwrap());
        assert_eq!(first.cells_csv(), second.cells_csv());

        assert_eq!(first.cells.len(), 4);
        assert_eq!(first.axis, SweepAxis::Amplitude);
        let ps: Vec<f64> = first.cells.iter().map(|c| c.p).collect();
        assert_eq!(ps, vec![2.0, 3.0, 2.0, 3.0]);
        let seeds: std::collections::HashSet<u64> =
            first.cells.iter().map(|c| c.seed).collect();
        assert_eq!(seeds.len(), 4, "cell seeds must differ");
        for cell in &first.cells {
            assert!(cell.error.is_none(), "{:?}", cell.error);
            assert!(cell.classification.is_some());
        }
        assert_eq!(first.curves.len(), 1);
        assert!((first.curves[0].p_fujita - 6.0).abs() < 1e-12);
        assert_eq!(first.bands.len(), 2);
        for band in &first.bands {
            assert_eq!(band.predicted_fujita, Some(6.0));
            if let (Some(b), Some(d)) = (band.last_blowup_p, band.first_decay_p) {
                assert!(d > b);
            }
        }
    }

    #[test]
    fn sweep_cells_capture_errors_without_aborting() {
        let mut config = fast_config();
        config.sweep.p_grid = vec![2.0, 3.0];
        config.initial.family = InitialFamily::Custom;
        config.initial.table = Some(PathBuf::from("no-such-file.txt"));
        let diagram = sweep(&config).unwrap();
        assert_eq!(diagram.cells.len(), 2);
        for cell in &diagram.cells {
            assert!(cell.classification.is_none());
            let err = cell.error.as_deref().unwrap();
            assert!(err.contains("no-such-file"), "{err}");
        }
        let csv = diagram.cells_csv();
        assert!(csv.contains("no-such-file"), "{csv}");
    }

    #[test]
    fn audit_of_a_decaying_run_round_trips() {
        let mut config = fast_config();
        // window radii r = sqrt(t) need ~65 cells across them before the
        // discrete window defect settles under the sign tolerance
        config.grid.points_per_axis = 1024;
        config.solver.history_stride = 1;
        config.audit.times = vec![2.0, 3.0, 4.5];
        config.audit.couplings = vec![1.0, 2.0];
        config.audit.modes = vec![AuditMode::Subcritical, AuditMode::Critical];
        let run = run_for_audit(&config).unwrap();
        assert!(!run.snapshots.is_empty());

        let outcome = audit_run(&config, &run).unwrap();
        assert!(outcome.ju_ok);
        assert!(!outcome.ju.is_empty());
        let sub = outcome.subcritical.as_ref().unwrap();
        match sub.verdict.as_ref().unwrap() {
            CapacityVerdict::Subcritical { master_ok, .. } => assert!(master_ok),
            other => panic!("unexpected verdict {other:?}"),
        }
        let crit = outcome.critical.as_ref().unwrap();
        match crit.verdict.as_ref().unwrap() {
            CapacityVerdict::Critical {
                master_ok,
                couplings,
                ..
            } => {
                assert!(master_ok);
                assert_eq!(couplings, &vec![1.0, 2.0]);
            }
            other => panic!("unexpected verdict {other:?}"),
        }
        assert!(outcome.scaling.is_none());
        let conditions = outcome.kernel_conditions.as_ref().unwrap();
        assert_eq!(conditions.growth.verdict, ConditionVerdict::Holds);

        let text = outcome.to_json().unwrap();
        let back = AuditOutcome::from_json(&text).unwrap();
        assert_eq!(back, outcome);
    }

    #[test]
    fn audit_requires_window_horizons() {
        let config = fast_config();
        let err = run_for_audit(&config).unwrap_err();
        assert!(err.to_string().contains("audit.times"), "{err}");
    }

    #[test]
    fn exponent_rows_match_reference_values() {
        let mut config = ExperimentConfig::default();
        let rows = exponent_rows(&config).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert!((row.p_fujita - 6.0).abs() < 1e-12);
        assert!((row.p_scaling - 3.5).abs() < 1e-12);
        assert!((row.p_local - 2.0).abs() < 1e-12);
        assert!((row.q_critical - 0.8).abs() < 1e-12);
        assert!(row.weight_interval.is_none(), "p=3 sits below the threshold");

        config.equation.p = 8.0;
        let rows = exponent_rows(&config).unwrap();
        let (lo, hi) = rows[0].weight_interval.unwrap();
        assert!((lo - 8.0).abs() < 1e-12);
        assert!((hi - 28.0 / 3.0).abs() < 1e-12);

        config.sweep.alpha_grid = vec![0.25, 0.5, 0.75];
        let rows = exponent_rows(&config).unwrap();
        assert_eq!(rows.len(), 3);
        assert!((rows[0].p_fujita - 4.0).abs() < 1e-12);
        assert!((rows[2].p_fujita - 12.0).abs() < 1e-12);
    }

    #[test]
    fn verification_suite_passes_and_is_seed_stable() {
        let outcomes = verify_suite(7);
        assert_eq!(outcomes.len(), 10);
        for outcome in &outcomes {
            assert!(outcome.passed, "{}: {}", outcome.name, outcome.detail);
        }
        assert_eq!(verify_suite(7), outcomes);
    }

    #[test]
    fn timestamps_and_hashes_are_pinned() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
        let t = UNIX_EPOCH + std::time::Duration::from_secs(1_787_443_200 + 3661);
        assert_eq!(utc_stamp(t), "20260823T010101Z");
        assert_eq!(civil_from_days(0), (1970, 1, 1));
    }

    #[test]
    fn artifact_directories_do_not_collide() {
        let base = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::default();
        let first = create_artifact_dir(base.path(), &config, "run").unwrap();
        let second = create_artifact_dir(base.path(), &config, "run").unwrap();
        assert_ne!(first, second);
        assert!(first.is_dir() && second.is_dir());
        let name = first.file_name().unwrap().to_str().unwrap();
        let (stamp, hash) = name.split_at(16);
        assert_eq!(&stamp[8..9], "T");
        assert!(stamp.ends_with('Z'));
        assert_eq!(hash.len(), 9);
        assert!(hash[1..].chars().all(|c| c.is_ascii_hexdigit()));
    }

    #[test]
    fn run_artifacts_land_in_the_requested_formats() {
        let mut config = fast_config();
        config.solver.t_end = 0.2;
        let run = run_single(&config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_run_artifacts(&config, &run, dir.path()).unwrap();
        let names: Vec<String> = files
            .iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(
            names,
            vec!["config.toml", "result.json", "history.csv", "plot_history.py"]
        );
        let echoed = ExperimentConfig::from_toml_str(
            &std::fs::read_to_string(dir.path().join("config.toml")).unwrap(),
        )
        .unwrap();
        assert_eq!(echoed.solver.t_end, 0.2);
        let body = std::fs::read_to_string(dir.path().join("result.json")).unwrap();
        let back = RunResult::from_json(&body).unwrap();
        // wall time is skipped on disk, so compare the serialized forms
        assert_eq!(back.to_json().unwrap(), run.to_json().unwrap());

        config.outputs.formats = vec![OutputFormat::Csv];
        config.outputs.plot_script = false;
        let dir = tempfile::tempdir().unwrap();
        let files = write_run_artifacts(&config, &run, dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        assert!(dir.path().join("history.csv").exists());
        assert!(!dir.path().join("result.json").exists());
    }
}
