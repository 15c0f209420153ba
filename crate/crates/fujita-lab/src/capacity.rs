//! Space-time window audit of the blow-up mechanism.
//!
//! A stored trajectory is weighed against compactly supported window
//! functions `psi(t, x) = phi_R(x)^ell phi_T(t)^ell`. Integrating the
//! equation against `psi` and separating the diffusion and time-derivative
//! terms by Hoelder's inequality yields, for nonnegative solutions,
//!
//! `floor(R) * I + int u0 phi_R^ell  <=  J1 * I^{1/p} + J2 * J^{1/p}`
//!
//! where `I` and `J` are windowed integrals of `u^p`, `J1`/`J2` depend only
//! on the windows, and `floor(R)` bounds the convolution kernel from below
//! over the window. Everything on both sides is computable from a stored
//! run, so the inequality can be audited row by row; its scaling in `(R, T)`
//! decides between decay and blow-up away from the critical exponent.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dynamics::RunResult;
use crate::error::{Error, Result};
use crate::fitting::fit_power_law;
use crate::grid::{Field, Grid};
use crate::operators::{
    check_beta, frac_laplacian_apply, ju_residual, riesz_normalization, ConvolutionKernel,
    KernelProfile,
};
use crate::par;
use crate::quad::adaptive_simpson;
use crate::source::{EquationParams, Nonlinearity, ParamsSummary};

pub const CAPACITY_SCHEMA: &str = "fujita-lab/capacity-report/v1";

/// Multiplicative slack granted to the audited inequalities for quadrature
/// and discretisation error.
pub const QUADRATURE_CUSHION: f64 = 1.05;

/// Largest allowed gap between stored snapshots, as a fraction of the time
/// window, before the trapezoid quadrature is refused.
const MAX_GAP_FRACTION: f64 = 1.0 / 8.0;

/// Relative tolerance on the nonnegativity defect of the nonlocal product
/// rule for cutoff powers.
pub const JU_TOLERANCE: f64 = 1e-8;

// Limit-condition classifier knobs: sampled radii, the exponent band treated
// as "flat", the log-residual above which a power fit is distrusted, and the
// monotone rise or drop (in decades) that overrides a failed fit.
const CONDITION_RADIUS_MAX: f64 = 1e4;
const CONDITION_SAMPLES_PER_DECADE: usize = 40;
const FLAT_EXPONENT_BAND: f64 = 0.02;
const FIT_RESIDUAL_LIMIT: f64 = 0.1;
const OVERRIDE_ORDERS: f64 = 4.0;
const MIN_FIT_DECADES: f64 = 3.5;

fn ramp(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn ramp_slope(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

/// Smooth cutoff profile: identically 1 on `[0, 1/2]`, identically 0 on
/// `[1, inf)`, strictly decreasing in between, infinitely differentiable
/// everywhere. Built from the standard exponential ramp
/// `f(s) = exp(-1/s)` as `f(1 - r) / (f(1 - r) + f(r - 1/2))`.
pub fn cutoff_profile(r: f64) -> f64 {
    if r <= 0.5 {
        return 1.0;
    }
    if r >= 1.0 {
        return 0.0;
    }
    let a = ramp(1.0 - r);
    let b = ramp(r - 0.5);
    a / (a + b)
}

/// Derivative of [`cutoff_profile`]; zero on both plateaus, nonpositive
/// everywhere.
pub fn cutoff_profile_slope(r: f64) -> f64 {
    if r <= 0.5 || r >= 1.0 {
        return 0.0;
    }
    let a = ramp(1.0 - r);
    let b = ramp(r - 0.5);
    let da = -ramp_slope(1.0 - r);
    let db = ramp_slope(r - 0.5);
    (da * b - a * db) / ((a + b) * (a + b))
}

/// Spatial and temporal window data for one `(R, T)` pair: the cutoff and
/// its `ell`-th power sampled on the grid, the fractional Laplacian of the
/// cutoff, and the scalar quadratures entering the separation functionals.
#[derive(Debug, Clone)]
pub struct TestFunction {
    grid: Grid,
    beta: f64,
    p: f64,
    ell: f64,
    r: f64,
    t_scale: f64,
    phi_r: Field,
    phi_r_ell: Field,
    frac_phi_r: Field,
    /// `h^n sum phi_R |(-Delta)^{beta/2} phi_R|^{p/(p-1)}`.
    diffusion_weight: f64,
    /// `h^n sum phi_R^ell`.
    window_volume: f64,
    /// `int_0^1 Phi(s)^ell ds`.
    time_plateau: f64,
    /// `int_{1/2}^1 Phi(s) |Phi'(s)|^{p/(p-1)} ds`.
    time_edge: f64,
}

/// Builds the window pair for radius `r` and horizon `t_scale`. The cutoff
/// power is `ell = (2p - 1)/(p - 1)`, large enough that `ell - p/(p-1)` of
/// it survives each Hoelder split. Requires at least four grid cells across
/// `r` and a box at least `4 r` wide so the periodic images stay far from
/// the window.
pub fn build_test_function(grid: Grid, beta: f64, p: f64, r: f64, t_scale: f64) -> Result<TestFunction> {
    check_beta(beta)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::parameter("p", format!("must exceed 1, got {p}")));
    }
    if !(t_scale > 0.0 && t_scale.is_finite()) {
        return Err(Error::parameter(
            "t_scale",
            format!("time window must be positive and finite, got {t_scale}"),
        ));
    }
    let h = grid.spacing();
    if !(r.is_finite() && r >= 4.0 * h) {
        return Err(Error::parameter(
            "r",
            format!("window radius must cover at least four cells ({:.6})", 4.0 * h),
        ));
    }
    if 4.0 * r > grid.box_length() {
        return Err(Error::parameter(
            "r",
            format!(
                "window radius {r} needs a box of at least {}, got {}",
                4.0 * r,
                grid.box_length()
            ),
        ));
    }
    let ell = (2.0 * p - 1.0) / (p - 1.0);
    let pp = p / (p - 1.0);
    let phi_r = Field::from_fn(grid, |[x, y]| cutoff_profile((x * x + y * y).sqrt() / r));
    let phi_r_ell = phi_r.map(|v| v.powf(ell));
    let frac_phi_r = frac_laplacian_apply(&phi_r, beta)?;
    let vol = grid.cell_volume();
    let diffusion_weight = phi_r
        .values()
        .iter()
        .zip(frac_phi_r.values())
        .map(|(&f, &l)| f * l.abs().powf(pp))
        .sum::<f64>()
        * vol;
    let window_volume = phi_r_ell.values().iter().sum::<f64>() * vol;
    let time_plateau = adaptive_simpson(&|s: f64| cutoff_profile(s).powf(ell), 0.0, 1.0, 1e-12);
    let time_edge = adaptive_simpson(
        &|s: f64| cutoff_profile(s) * cutoff_profile_slope(s).abs().powf(pp),
        0.5,
        1.0,
        1e-12,
    );
    Ok(TestFunction {
        grid,
        beta,
        p,
        ell,
        r,
        t_scale,
        phi_r,
        phi_r_ell,
        frac_phi_r,
        diffusion_weight,
        window_volume,
        time_plateau,
        time_edge,
    })
}

impl TestFunction {
    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn ell(&self) -> f64 {
        self.ell
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn t_scale(&self) -> f64 {
        self.t_scale
    }

    pub fn phi_r(&self) -> &Field {
        &self.phi_r
    }

    pub fn phi_r_ell(&self) -> &Field {
        &self.phi_r_ell
    }

    pub fn frac_phi_r(&self) -> &Field {
        &self.frac_phi_r
    }

    /// Temporal cutoff `Phi(t / T)`.
    pub fn time_profile(&self, t: f64) -> f64 {
        cutoff_profile(t / self.t_scale)
    }

    /// Temporal weight `Phi(t / T)^ell` multiplying the windowed integrals.
    pub fn time_weight(&self, t: f64) -> f64 {
        self.time_profile(t).powf(self.ell)
    }

    /// Separation functional of the diffusion term,
    /// `ell (T int Phi^ell * int phi_R |(-Delta)^{beta/2} phi_R|^{p'})^{1/p'}`
    /// with `p' = p/(p-1)`. Scales like `T^{(p-1)/p} R^{n(p-1)/p - beta}`.
    pub fn j1(&self) -> f64 {
        let inv_pp = (self.p - 1.0) / self.p;
        self.ell * (self.t_scale * self.time_plateau * self.diffusion_weight).powf(inv_pp)
    }

    /// Separation functional of the time-derivative term,
    /// `ell (int phi_R^ell * T^{-1/(p-1)} int Phi |Phi'|^{p'})^{1/p'}`.
    /// Scales like `R^{n(p-1)/p} T^{-1/p}`.
    pub fn j2(&self) -> f64 {
        let inv_pp = (self.p - 1.0) / self.p;
        let time_part = self.t_scale.powf(-1.0 / (self.p - 1.0)) * self.time_edge;
        self.ell * (self.window_volume * time_part).powf(inv_pp)
    }
}

/// Outcome of checking `(-Delta)^{beta/2}(phi^ell) <= ell phi^{ell-1}
/// (-Delta)^{beta/2} phi` for the window cutoff on a dedicated grid. The
/// separation step leans on this pointwise bound, so its defect is measured
/// against the size of the diffusion term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JuAudit {
    pub min_residual: f64,
    pub scale: f64,
    pub tolerance: f64,
    pub ok: bool,
}

pub fn ju_audit(grid: Grid, beta: f64, p: f64, r: f64) -> Result<JuAudit> {
    let tf = build_test_function(grid, beta, p, r, 1.0)?;
    let residual = ju_residual(tf.phi_r(), tf.ell(), beta)?;
    let scale = tf.ell() * tf.frac_phi_r().sup_abs();
    let tolerance = JU_TOLERANCE * scale;
    let min_residual = residual.min_value();
    Ok(JuAudit {
        min_residual,
        scale,
        tolerance,
        ok: min_residual >= -tolerance,
    })
}

/// One `(R, T)` audit window; `k` records the coupling constant when the
/// window sits on the critical locus `R = (k T)^{1/beta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditPoint {
    pub r: f64,
    pub t: f64,
    pub k: Option<f64>,
}

/// Windows on the subcritical locus `R = T^{1/beta}`.
pub fn subcritical_points(beta: f64, times: &[f64]) -> Vec<AuditPoint> {
    times
        .iter()
        .map(|&t| AuditPoint {
            r: t.powf(1.0 / beta),
            t,
            k: None,
        })
        .collect()
}

/// Windows on the critical loci `R = (k T)^{1/beta}`, one family per
/// coupling.
pub fn critical_points(beta: f64, couplings: &[f64], times: &[f64]) -> Vec<AuditPoint> {
    couplings
        .iter()
        .flat_map(|&k| {
            times.iter().map(move |&t| AuditPoint {
                r: (k * t).powf(1.0 / beta),
                t,
                k: Some(k),
            })
        })
        .collect()
}

/// Full cartesian grid of windows, used to isolate the `R` and `T` scalings
/// of the separation functionals.
pub fn grid_points(radii: &[f64], times: &[f64]) -> Vec<AuditPoint> {
    radii
        .iter()
        .flat_map(|&r| times.iter().map(move |&t| AuditPoint { r, t, k: None }))
        .collect()
}

/// All audited quantities for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityRow {
    pub r: f64,
    pub t: f64,
    pub k: Option<f64>,
    pub j1: f64,
    pub j2: f64,
    /// `int_0^T int u^p psi`.
    pub i_int: f64,
    /// `int_{T/2}^T int u^p psi`.
    pub j_int: f64,
    /// `int_0^T int N(u) psi` for the actual nonlocal source.
    pub nonlocal_term: f64,
    /// Kernel floor times `i_int`; bounds `nonlocal_term` from below.
    pub lower_bound: f64,
    /// `int u0 phi_R^ell`.
    pub data_term: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs <= rhs` within the quadrature cushion.
    pub master_ok: bool,
    /// `lower_bound <= nonlocal_term` within the cushion.
    pub floor_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub predicted: f64,
    pub rms_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityReport {
    pub schema: String,
    pub params: ParamsSummary,
    pub ell: f64,
    pub rows: Vec<CapacityRow>,
    /// `j2` against `r` at the best-populated fixed `t`.
    pub j2_radius_fit: Option<ScalingFit>,
    /// `j1` against `t` at the best-populated fixed `r`.
    pub j1_time_fit: Option<ScalingFit>,
    /// `j1` against `r` at the best-populated fixed `t`.
    pub j1_radius_fit: Option<ScalingFit>,
}

impl CapacityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: CapacityReport = serde_json::from_str(text)?;
        if report.schema != CAPACITY_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported capacity schema {:?}, expected {CAPACITY_SCHEMA:?}",
                report.schema
            )));
        }
        Ok(report)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,T,J1,J2,I,J,lhs,rhs\n");
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                row.r, row.t, row.j1, row.j2, row.i_int, row.j_int, row.lhs, row.rhs
            );
        }
        out
    }
}

struct TrajectoryCache {
    times: Vec<f64>,
    /// `|u|^p` per stored time.
    powers: Vec<Field>,
    /// `N(u)` per stored time.
    sources: Vec<Field>,
    initial: Field,
}

fn check_matches(params: &EquationParams, stored: &ParamsSummary) -> Result<()> {
    let ours = ParamsSummary::of(params);
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    let alpha_ok = match (ours.alpha, stored.alpha) {
        (None, None) => true,
        (Some(a), Some(b)) => close(a, b),
        _ => false,
    };
    if ours.dim != stored.dim
        || !close(ours.beta, stored.beta)
        || !close(ours.p, stored.p)
        || ours.nonlinearity != stored.nonlinearity
        || !alpha_ok
    {
        return Err(Error::parameter(
            "params",
            format!(
                "equation ({}d beta={} p={} source={}) differs from the stored run \
                 ({}d beta={} p={} source={})",
                ours.dim,
                ours.beta,
                ours.p,
                ours.nonlinearity,
                stored.dim,
                stored.beta,
                stored.p,
                stored.nonlinearity
            ),
        ));
    }
    Ok(())
}

fn load_trajectory(run: &RunResult, params: &EquationParams) -> Result<TrajectoryCache> {
    check_matches(params, &run.params)?;
    match params.nonlinearity() {
        Nonlinearity::Riesz(_) | Nonlinearity::Kernel(_) => {}
        _ => {
            return Err(Error::parameter(
                "params",
                "the window audit needs a convolution source (riesz or kernel)",
            ))
        }
    }
    if run.snapshots.is_empty() {
        return Err(Error::parameter(
            "run",
            "no stored snapshots; rerun with a positive snapshot interval",
        ));
    }
    if run.snapshots[0].t != 0.0 {
        return Err(Error::parameter(
            "run",
            format!(
                "first stored snapshot sits at t = {}, expected the initial state",
                run.snapshots[0].t
            ),
        ));
    }
    let mut indices: Vec<usize> = Vec::with_capacity(run.snapshots.len());
    for (i, snap) in run.snapshots.iter().enumerate() {
        if i > 0 && snap.t <= run.snapshots[indices[indices.len() - 1]].t {
            continue; // terminal snapshot can coincide with the cadence
        }
        indices.push(i);
    }
    let fields = par::try_map(&indices, |&i| run.snapshot_field(i))?;
    let p = params.p();
    let powers = par::map(&fields, |u| u.map(|v| v.abs().powf(p)));
    let sources = par::try_map(&fields, |u| params.nonlinearity().eval(u, p))?;
    let times = indices.iter().map(|&i| run.snapshots[i].t).collect();
    let initial = fields[0].clone();
    Ok(TrajectoryCache {
        times,
        powers,
        sources,
        initial,
    })
}

/// Refuses the trapezoid quadrature when the stored cadence undersamples
/// the window `[0, t]`.
fn check_cadence(times: &[f64], t: f64) -> Result<()> {
    let required = t * MAX_GAP_FRACTION;
    let mut prev = 0.0;
    let mut have = 0.0f64;
    for &tau in times.iter().take_while(|&&tau| tau <= t) {
        have = have.max(tau - prev);
        prev = tau;
    }
    have = have.max(t - prev);
    if have > required * (1.0 + 1e-9) {
        return Err(Error::NeedsDenserTrajectory { required, have });
    }
    Ok(())
}

/// Linear interpolation on a sorted abscissa, clamped at both ends.
fn sample_series(times: &[f64], values: &[f64], tau: f64) -> f64 {
    if tau <= times[0] {
        return values[0];
    }
    if tau >= *times.last().unwrap() {
        return *values.last().unwrap();
    }
    match times.binary_search_by(|v| v.partial_cmp(&tau).unwrap()) {
        Ok(i) => values[i],
        Err(i) => {
            let f = (tau - times[i - 1]) / (times[i] - times[i - 1]);
            values[i - 1] + f * (values[i] - values[i - 1])
        }
    }
}

/// Trapezoid of `X(tau) w(tau)` over `[lo, hi]` on the stored abscissae plus
/// the window endpoints. The temporal cutoff vanishes at `hi = T`, so the
/// stretch past the last stored node contributes through the decay of `w`
/// alone.
fn windowed_integral(
    times: &[f64],
    values: &[f64],
    lo: f64,
    hi: f64,
    w: impl Fn(f64) -> f64,
) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(times.len() + 2);
    pts.push((lo, sample_series(times, values, lo) * w(lo)));
    for (i, &t) in times.iter().enumerate() {
        if t > lo && t < hi {
            pts.push((t, values[i] * w(t)));
        }
    }
    pts.push((hi, sample_series(times, values, hi) * w(hi)));
    pts.windows(2)
        .map(|s| 0.5 * (s[1].0 - s[0].0) * (s[0].1 + s[1].1))
        .sum()
}

/// Smallest kernel value over the window, times the measure of the inner
/// plateau ball: for `x` in the plateau and `xi` in the window the distance
/// stays below `2 r`, so a non-increasing kernel is at least `K(2 r)` there.
fn source_floor(params: &EquationParams, r: f64) -> f64 {
    let n = params.dim() as f64;
    let half_ball = match params.dim() {
        1 => r,
        _ => PI * r * r / 4.0,
    };
    let kernel_min = match params.nonlinearity() {
        Nonlinearity::Riesz(k) => {
            riesz_normalization(params.dim(), k.alpha()) * (2.0 * r).powf(k.alpha() - n)
        }
        Nonlinearity::Kernel(k) => k.eval(2.0 * r),
        _ => 0.0,
    };
    half_ball * kernel_min
}

fn row_from_cache(
    cache: &TrajectoryCache,
    params: &EquationParams,
    tf: &TestFunction,
) -> Result<CapacityRow> {
    tf.grid().check_same(&cache.initial.grid())?;
    let t = tf.t_scale();
    check_cadence(&cache.times, t)?;
    let vol = tf.grid().cell_volume();
    let weight = tf.phi_r_ell();
    let dot = |f: &Field| -> f64 {
        f.values()
            .iter()
            .zip(weight.values())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * vol
    };
    let xs: Vec<f64> = cache.powers.iter().map(&dot).collect();
    let ys: Vec<f64> = cache.sources.iter().map(&dot).collect();
    let w = |tau: f64| tf.time_weight(tau);
    let i_int = windowed_integral(&cache.times, &xs, 0.0, t, w);
    let j_int = windowed_integral(&cache.times, &xs, t / 2.0, t, w);
    let nonlocal_term = windowed_integral(&cache.times, &ys, 0.0, t, w);
    let data_term = dot(&cache.initial);
    let lower_bound = source_floor(params, tf.r()) * i_int;
    let p = params.p();
    let j1 = tf.j1();
    let j2 = tf.j2();
    let lhs = lower_bound + data_term;
    let rhs = j1 * i_int.powf(1.0 / p) + j2 * j_int.powf(1.0 / p);
    Ok(CapacityRow {
        r: tf.r(),
        t,
        k: None,
        j1,
        j2,
        i_int,
        j_int,
        nonlocal_term,
        lower_bound,
        data_term,
        lhs,
        rhs,
        master_ok: lhs <= rhs * QUADRATURE_CUSHION,
        floor_ok: lower_bound <= nonlocal_term * QUADRATURE_CUSHION,
    })
}

/// Audits one window against a stored trajectory.
pub fn capacity_integrals(
    run: &RunResult,
    params: &EquationParams,
    tf: &TestFunction,
) -> Result<CapacityRow> {
    let cache = load_trajectory(run, params)?;
    row_from_cache(&cache, params, tf)
}

/// Audits every requested window against a stored trajectory and fits the
/// scalings of the separation functionals where the window family allows
/// it.
pub fn capacity_report(
    run: &RunResult,
    params: &EquationParams,
    points: &[AuditPoint],
) -> Result<CapacityReport> {
    if points.is_empty() {
        return Err(Error::parameter("points", "need at least one audit window"));
    }
    let cache = load_trajectory(run, params)?;
    let grid = run.grid;
    let beta = params.beta();
    let p = params.p();
    let rows = par::try_map(points, |pt| {
        let tf = build_test_function(grid, beta, p, pt.r, pt.t)?;
        let mut row = row_from_cache(&cache, params, &tf)?;
        row.k = pt.k;
        Ok(row)
    })?;
    let n = params.dim() as f64;
    let j2_predicted = n * (p - 1.0) / p;
    let j1_time_predicted = (p - 1.0) / p;
    let j1_radius_predicted = n * (p - 1.0) / p - beta;
    let fit_group = |samples: &[(f64, f64)], predicted: f64| -> Option<ScalingFit> {
        let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
        let ys: Vec<f64> = samples.iter().map(|s| s.1).collect();
        fit_power_law(&xs, &ys).ok().map(|fit| ScalingFit {
            exponent: fit.slope,
            predicted,
            rms_residual: fit.rms_residual,
        })
    };
    let radius_samples = best_group(&rows, |r| r.t, |r| r.r, |r| (r.j1, r.j2));
    let time_samples = best_group(&rows, |r| r.r, |r| r.t, |r| (r.j1, r.j2));
    let j2_radius_fit = radius_samples
        .as_ref()
        .and_then(|g| fit_group(&g.iter().map(|(x, v)| (*x, v.1)).collect::<Vec<_>>(), j2_predicted));
    let j1_radius_fit = radius_samples
        .as_ref()
        .and_then(|g| fit_group(&g.iter().map(|(x, v)| (*x, v.0)).collect::<Vec<_>>(), j1_radius_predicted));
    let j1_time_fit = time_samples
        .as_ref()
        .and_then(|g| fit_group(&g.iter().map(|(x, v)| (*x, v.0)).collect::<Vec<_>>(), j1_time_predicted));
    Ok(CapacityReport {
        schema: CAPACITY_SCHEMA.to_string(),
        params: ParamsSummary::of(params),
        ell: (2.0 * p - 1.0) / (p - 1.0),
        rows,
        j2_radius_fit,
        j1_time_fit,
        j1_radius_fit,
    })
}

/// Samples `(varying, payload)` at the fixed coordinate with the most
/// distinct varying coordinates; `None` below three.
fn best_group(
    rows: &[CapacityRow],
    fixed: impl Fn(&CapacityRow) -> f64,
    varying: impl Fn(&CapacityRow) -> f64,
    payload: impl Fn(&CapacityRow) -> (f64, f64),
) -> Option<Vec<(f64, (f64, f64))>> {
    let mut groups: HashMap<u64, Vec<(f64, (f64, f64))>> = HashMap::new();
    for row in rows {
        groups
            .entry(fixed(row).to_bits())
            .or_default()
            .push((varying(row), payload(row)));
    }
    let mut best: Option<Vec<(f64, (f64, f64))>> = None;
    for (_, mut g) in groups {
        g.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        g.dedup_by(|a, b| a.0.to_bits() == b.0.to_bits());
        if g.len() >= 3 && best.as_ref().map_or(true, |b| g.len() > b.len()) {
            best = Some(g);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityMode {
    Subcritical,
    Critical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CapacityVerdict {
    /// Every window captured zero nonlinear mass, so the inequality holds
    /// with nothing to weigh.
    VacuousPass,
    /// Windows on `R = T^{1/beta}`: the inequality forces
    /// `I <= ((J1 + J2) / floor)^{p/(p-1)}`, whose fitted decay in `T`
    /// should not undershoot the predicted envelope exponent.
    Subcritical {
        master_ok: bool,
        envelope_ok: bool,
        predicted_decay: f64,
        fitted_decay: f64,
        fit_residual: f64,
        decay_ok: bool,
    },
    /// Windows on `R = (k T)^{1/beta}`: after absorbing half the floor term
    /// by Young's inequality the tail integral `J` must carry the bound,
    /// and for a global solution it has to shrink along `T`.
    Critical {
        master_ok: bool,
        absorbed_ok: bool,
        couplings: Vec<f64>,
        tail_shrinks: Option<bool>,
    },
}

/// Weighs a finished report. Subcritical mode needs the plain Riesz source
/// so the envelope exponent is defined; critical mode only needs the rows
/// to sit on coupled loci.
pub fn verify_capacity_inequality(
    report: &CapacityReport,
    params: &EquationParams,
    mode: CapacityMode,
) -> Result<CapacityVerdict> {
    check_matches(params, &report.params)?;
    let p = params.p();
    let pp = p / (p - 1.0);
    match mode {
        CapacityMode::Subcritical => {
            let alpha = match params.nonlinearity() {
                Nonlinearity::Riesz(k) => k.alpha(),
                _ => {
                    return Err(Error::parameter(
                        "params",
                        "the envelope exponent needs the riesz source; use the kernel \
                         limit conditions for general kernels",
                    ))
                }
            };
            let beta = params.beta();
            for row in &report.rows {
                let expect = row.t.powf(1.0 / beta);
                if (row.r - expect).abs() > 1e-6 * expect {
                    return Err(Error::parameter(
                        "report",
                        format!(
                            "subcritical audit expects windows on R = T^(1/beta); \
                             got R = {} at T = {}",
                            row.r, row.t
                        ),
                    ));
                }
            }
            let master_ok = report.rows.iter().all(|r| r.master_ok);
            let positive: Vec<&CapacityRow> =
                report.rows.iter().filter(|r| r.i_int > 0.0).collect();
            if positive.is_empty() {
                return Ok(CapacityVerdict::VacuousPass);
            }
            if positive.len() < 3 {
                return Err(Error::parameter(
                    "report",
                    format!(
                        "need at least three windows with nonzero mass for the decay \
                         fit, got {}",
                        positive.len()
                    ),
                ));
            }
            let cushion = QUADRATURE_CUSHION.powf(pp);
            let mut ts = Vec::with_capacity(positive.len());
            let mut bounds = Vec::with_capacity(positive.len());
            let mut envelope_ok = true;
            for row in &positive {
                let unit = source_floor(params, row.r);
                let bound = ((row.j1 + row.j2) / unit).powf(pp);
                if row.i_int > bound * cushion {
                    envelope_ok = false;
                }
                ts.push(row.t);
                bounds.push(bound);
            }
            let n = params.dim() as f64;
            let predicted_decay = ((n - alpha) * p - n - beta) / (beta * (p - 1.0));
            let fit = fit_power_law(&ts, &bounds)?;
            let decay_ok = fit.slope <= predicted_decay + 0.1;
            Ok(CapacityVerdict::Subcritical {
                master_ok,
                envelope_ok,
                predicted_decay,
                fitted_decay: fit.slope,
                fit_residual: fit.rms_residual,
                decay_ok,
            })
        }
        CapacityMode::Critical => {
            let mut groups: HashMap<u64, Vec<&CapacityRow>> = HashMap::new();
            for row in &report.rows {
                let k = row.k.ok_or_else(|| {
                    Error::parameter(
                        "report",
                        "critical audit expects coupled windows R = (k T)^(1/beta)",
                    )
                })?;
                groups.entry(k.to_bits()).or_default().push(row);
            }
            if groups.len() < 2 {
                return Err(Error::parameter(
                    "report",
                    format!("need at least two couplings, got {}", groups.len()),
                ));
            }
            if report.rows.iter().all(|r| r.i_int == 0.0) {
                return Ok(CapacityVerdict::VacuousPass);
            }
            let master_ok = report.rows.iter().all(|r| r.master_ok);
            let mut absorbed_ok = true;
            for row in &report.rows {
                if row.i_int == 0.0 {
                    continue;
                }
                let unit = source_floor(params, row.r);
                // Young's inequality with weight unit/2:
                // J1 I^{1/p} <= (unit/2) I + C J1^{p'}
                let c_half = ((p - 1.0) / p) * (unit * p / 2.0).powf(-1.0 / (p - 1.0));
                let lhs = 0.5 * unit * row.i_int;
                let rhs = c_half * row.j1.powf(pp) + row.j2 * row.j_int.powf(1.0 / p);
                if lhs > rhs * QUADRATURE_CUSHION {
                    absorbed_ok = false;
                }
            }
            let mut couplings: Vec<f64> = groups
                .keys()
                .map(|&bits| f64::from_bits(bits))
                .collect();
            couplings.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut any_trend = false;
            let mut all_shrink = true;
            for rows in groups.values() {
                let mut sorted: Vec<&&CapacityRow> = rows.iter().collect();
                sorted.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
                if sorted.len() < 2 {
                    continue;
                }
                any_trend = true;
                let first = sorted.first().unwrap().j_int;
                let last = sorted.last().unwrap().j_int;
                if last > first * (1.0 + 1e-9) {
                    all_shrink = false;
                }
            }
            Ok(CapacityVerdict::Critical {
                master_ok,
                absorbed_ok,
                couplings,
                tail_shrinks: if any_trend { Some(all_shrink) } else { None },
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionVerdict {
    Holds,
    Fails,
    Undecidable,
}

/// Classification of one scalar limit along `R -> inf`, from a power fit
/// over geometric radii plus a monotone override for profiles that leave
/// the power-law regime (exponential tails under- or overflow long before
/// the last sampled radius).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCondition {
    pub fitted_exponent: Option<f64>,
    pub fit_residual: Option<f64>,
    /// Signed decades across the monotone tail of the sample; `+-16` when
    /// the profile left the floating-point range entirely.
    pub monotone_orders: f64,
    pub sampled_decades: f64,
    pub verdict: ConditionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConditionReport {
    pub dim: usize,
    pub beta: f64,
    pub p: f64,
    /// `limsup K(R) R^{(n+beta)/p} > 0`: every nontrivial nonnegative datum
    /// then produces a blowing-up solution.
    pub growth: LimitCondition,
    pub tail_exponent: Option<f64>,
    /// `liminf K(R)^{-1} R^{gamma(p-1)-n-beta} = 0`: data with a
    /// `|x|^{-gamma}` floor at infinity then blow up.
    pub tail: Option<LimitCondition>,
    /// For the plain riesz profile the growth condition reduces to
    /// `p <= (n + beta)/(n - alpha)`; recorded for cross-checking.
    pub riesz_threshold: Option<f64>,
    pub riesz_growth_predicted: Option<bool>,
    /// Riesz counterpart of the tail condition, `p < 1 + (beta+alpha)/gamma`.
    pub riesz_tail_threshold: Option<f64>,
}

fn classify_limit(radii: &[f64], values: &[f64], holds_when_vanishing: bool) -> Result<LimitCondition> {
    let mut kept_r = Vec::with_capacity(values.len());
    let mut kept_v = Vec::with_capacity(values.len());
    let mut collapse = 0.0f64;
    for (&r, &v) in radii.iter().zip(values) {
        if v.is_nan() || v < 0.0 {
            return Err(Error::KernelTable {
                message: format!("limit-condition sample at radius {r:.6e} evaluated to {v}"),
            });
        }
        if v == 0.0 {
            if collapse > 0.0 {
                return Err(Error::KernelTable {
                    message: "kernel alternates between overflow and underflow".into(),
                });
            }
            collapse = -2.0 * OVERRIDE_ORDERS;
            continue;
        }
        if v.is_infinite() {
            if collapse < 0.0 {
                return Err(Error::KernelTable {
                    message: "kernel alternates between overflow and underflow".into(),
                });
            }
            collapse = 2.0 * OVERRIDE_ORDERS;
            continue;
        }
        if collapse != 0.0 {
            return Err(Error::KernelTable {
                message: format!("positive sample at radius {r:.6e} after the kernel left the floating-point range"),
            });
        }
        kept_r.push(r);
        kept_v.push(v);
    }
    if kept_r.len() < 8 {
        return Err(Error::KernelTable {
            message: format!(
                "only {} usable limit-condition samples on [1, {CONDITION_RADIUS_MAX:.0e}]",
                kept_r.len()
            ),
        });
    }
    let sampled_decades = (kept_r.last().unwrap() / kept_r[0]).log10();
    // limit behaviour shows in the far half of the usable range
    let half = kept_v.len() / 2;
    let tail_v = &kept_v[half..];
    let nondecr = tail_v.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let nonincr = tail_v.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let span = (tail_v.last().unwrap() / tail_v[0]).log10();
    let mut monotone_orders = if nondecr ^ nonincr { span } else { 0.0 };
    if collapse < 0.0 && monotone_orders <= 0.0 {
        monotone_orders = collapse;
    } else if collapse > 0.0 && monotone_orders >= 0.0 {
        monotone_orders = collapse;
    }
    let to_verdict = |vanishing: bool| {
        if vanishing == holds_when_vanishing {
            ConditionVerdict::Holds
        } else {
            ConditionVerdict::Fails
        }
    };
    if monotone_orders <= -OVERRIDE_ORDERS {
        return Ok(LimitCondition {
            fitted_exponent: None,
            fit_residual: None,
            monotone_orders,
            sampled_decades,
            verdict: to_verdict(true),
        });
    }
    if monotone_orders >= OVERRIDE_ORDERS {
        return Ok(LimitCondition {
            fitted_exponent: None,
            fit_residual: None,
            monotone_orders,
            sampled_decades,
            verdict: to_verdict(false),
        });
    }
    let fit = fit_power_law(&kept_r, &kept_v)?;
    let verdict = if sampled_decades < MIN_FIT_DECADES || fit.rms_residual > FIT_RESIDUAL_LIMIT {
        ConditionVerdict::Undecidable
    } else if fit.slope < -FLAT_EXPONENT_BAND {
        to_verdict(true)
    } else {
        // growing or flat: the quantity keeps a positive floor
        to_verdict(false)
    };
    Ok(LimitCondition {
        fitted_exponent: Some(fit.slope),
        fit_residual: Some(fit.rms_residual),
        monotone_orders,
        sampled_decades,
        verdict,
    })
}

/// Classifies the two kernel limit conditions governing the dichotomy for a
/// general convolution source: growth of `K(R) R^{(n+beta)/p}` (blow-up for
/// every nontrivial datum) and, given a data tail exponent `gamma`, decay of
/// `K(R)^{-1} R^{gamma(p-1)-n-beta}` (blow-up for `|x|^{-gamma}` data).
pub fn kernel_limit_conditions(
    kernel: &ConvolutionKernel,
    beta: f64,
    p: f64,
    tail_exponent: Option<f64>,
) -> Result<KernelConditionReport> {
    check_beta(beta)?;
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::parameter("p", format!("must exceed 1, got {p}")));
    }
    if let Some(g) = tail_exponent {
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::parameter(
                "tail_exponent",
                format!("must be positive and finite, got {g}"),
            ));
        }
    }
    let n = kernel.dim() as f64;
    let decades = CONDITION_RADIUS_MAX.log10();
    let samples = (decades * CONDITION_SAMPLES_PER_DECADE as f64).round() as usize;
    let radii: Vec<f64> = (0..=samples)
        .map(|j| 10f64.powf(j as f64 / CONDITION_SAMPLES_PER_DECADE as f64))
        .collect();
    let growth_vals: Vec<f64> = radii
        .iter()
        .map(|&r| kernel.eval(r) * r.powf((n + beta) / p))
        .collect();
    let growth = classify_limit(&radii, &growth_vals, false)?;
    let tail = match tail_exponent {
        Some(g) => {
            let vals: Vec<f64> = radii
                .iter()
                .map(|&r| r.powf(g * (p - 1.0) - n - beta) / kernel.eval(r))
                .collect();
            Some(classify_limit(&radii, &vals, true)?)
        }
        None => None,
    };
    let (riesz_threshold, riesz_growth_predicted, riesz_tail_threshold) =
        match kernel.profile() {
            KernelProfile::Riesz { alpha } => {
                let threshold = (n + beta) / (n - alpha);
                (
                    Some(threshold),
                    Some(p <= threshold * (1.0 + 1e-12)),
                    tail_exponent.map(|g| 1.0 + (beta + alpha) / g),
                )
            }
            _ => (None, None, None),
        };
    Ok(KernelConditionReport {
        dim: kernel.dim(),
        beta,
        p,
        growth,
        tail_exponent,
        tail,
        riesz_threshold,
        riesz_growth_predicted,
        riesz_tail_threshold,
    })
}

/// Normalised window mass `R^{-alpha} int_{|x| <= R} u0`, the quantity whose
/// positive limsup forces the data term to beat the separation functionals
/// at large radius. Returns `(R, value)` pairs.
pub fn mass_functional(u0: &Field, alpha: f64, radii: &[f64]) -> Result<Vec<(f64, f64)>> {
    let grid = u0.grid();
    let n = grid.dim() as f64;
    if !(alpha > 0.0 && alpha < n) {
        return Err(Error::parameter(
            "alpha",
            format!("must lie in (0, {n}), got {alpha}"),
        ));
    }
    let half = grid.box_length() / 2.0;
    let vol = grid.cell_volume();
    let mut out = Vec::with_capacity(radii.len());
    for &r in radii {
        if !(r > 0.0 && r <= half) {
            return Err(Error::parameter(
                "radius",
                format!("window radius must lie in (0, {half}], got {r}"),
            ));
        }
        let mass: f64 = u0
            .values()
            .iter()
            .enumerate()
            .filter(|(i, _)| grid.radius(*i) <= r)
            .map(|(_, &v)| v)
            .sum::<f64>()
            * vol;
        out.push((r, r.powf(-alpha) * mass));
    }
    Ok(out)
}
