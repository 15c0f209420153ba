//! Full initial-value runs: the adaptive evolution loop, blow-up detection
//! and fitting, decay classification, the weighted-norm diagnostic and the
//! exact scaling transform, plus the serialized run artifacts.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::CriticalExponents;
use crate::fitting;
use crate::grid::{Field, Grid};
use crate::propagator::{step_controller, Propagator};
use crate::source::{EquationParams, ParamsSummary};

/// Schema tag of the serialized [`RunResult`]; bump on layout changes.
pub const RUN_SCHEMA: &str = "fujita-lab/run-result/v1";

/// Steps a growth spurt must persist at `dt_min` before the run is declared
/// resolution-limited blow-up.
const PINNED_WINDOW: usize = 20;
const PINNED_GROWTH: f64 = 10.0;
/// Per-row growth above this factor marks the row as resolution-limited and
/// excludes it from the blow-up fit window.
const FIT_TRIM_GROWTH: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt_min: f64,
    pub dt_max: f64,
    pub t_end: f64,
    /// `M_blow`: sup-norm level at which blow-up is declared.
    pub blowup_threshold: f64,
    pub dealias_fraction: f64,
    /// Width of the edge region, as a fraction of the half box length.
    pub boundary_edge_fraction: f64,
    /// |u|-mass fraction in the edge region that raises the truncation alarm.
    pub boundary_mass_fraction: f64,
    /// Field snapshot cadence in simulation time; 0 disables snapshots.
    pub snapshot_interval: f64,
    /// Lebesgue index of the `ls` history column; default 2.
    pub norm_exponent: Option<f64>,
    /// When set, track `t^{beta*} ||u||_q` for this q (Riesz mode only).
    pub weight_exponent_q: Option<f64>,
    /// Record every k-th step in the history (the final step always lands).
    pub history_stride: usize,
    pub max_steps: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            dt_min: 1e-12,
            dt_max: 1e-2,
            t_end: 10.0,
            blowup_threshold: 1e8,
            dealias_fraction: 2.0 / 3.0,
            boundary_edge_fraction: 0.05,
            boundary_mass_fraction: 0.01,
            snapshot_interval: 0.0,
            norm_exponent: None,
            weight_exponent_q: None,
            history_stride: 1,
            max_steps: 2_000_000,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_min > 0.0 && self.dt_min.is_finite()) {
            return Err(Error::parameter("dt_min", "must be positive and finite"));
        }
        if !(self.dt_max > self.dt_min) {
            return Err(Error::parameter("dt_max", "must exceed dt_min"));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::parameter("t_end", "must be positive and finite"));
        }
        if !(self.blowup_threshold > 0.0) {
            return Err(Error::parameter("blowup_threshold", "must be positive"));
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(Error::parameter("dealias_fraction", "must lie in (0, 1]"));
        }
        if !(self.boundary_edge_fraction > 0.0 && self.boundary_edge_fraction < 1.0) {
            return Err(Error::parameter(
                "boundary_edge_fraction",
                "must lie in (0, 1)",
            ));
        }
        if !(self.boundary_mass_fraction > 0.0 && self.boundary_mass_fraction <= 1.0) {
            return Err(Error::parameter(
                "boundary_mass_fraction",
                "must lie in (0, 1]",
            ));
        }
        if self.snapshot_interval < 0.0 || !self.snapshot_interval.is_finite() {
            return Err(Error::parameter(
                "snapshot_interval",
                "must be finite and >= 0",
            ));
        }
        if let Some(s) = self.norm_exponent {
            if !(s >= 1.0 && s.is_finite()) {
                return Err(Error::parameter("norm_exponent", "must lie in [1, inf)"));
            }
        }
        if self.history_stride == 0 {
            return Err(Error::parameter("history_stride", "must be >= 1"));
        }
        if self.max_steps == 0 {
            return Err(Error::parameter("max_steps", "must be >= 1"));
        }
        Ok(())
    }
}

/// One recorded time level. `lqsc`, `lq` and `weighted` are `None` when the
/// corresponding exponent is not defined for the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub t: f64,
    /// Step that produced this state; `None` for the initial row and for rows
    /// parsed back from CSV.
    pub dt: Option<f64>,
    pub linf: f64,
    pub ls: f64,
    pub lqsc: Option<f64>,
    pub lq: Option<f64>,
    /// `t^{beta*} ||u||_q` for the tracked q.
    pub weighted: Option<f64>,
    /// |u|-mass fraction within the edge region.
    pub boundary_mass: f64,
    /// Signed mass `h^n sum u`.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    /// Decay certified on the run horizon only; no claim about `T_max`.
    GlobalDecay,
    Blowup {
        t_estimate: f64,
        /// Log-space rms residual of the power-law fit; `None` if unfittable.
        fit_residual: Option<f64>,
        wide_uncertainty: bool,
    },
    Inconclusive {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub schema: String,
    pub params: ParamsSummary,
    pub grid: Grid,
    pub solver: SolverConfig,
    /// Lebesgue index used for the `ls` column.
    pub norm_exponent_s: f64,
    pub q_sc: Option<f64>,
    pub tracked_q: Option<f64>,
    pub beta_star: Option<f64>,
    /// Set when 1 < p <= n/(n - alpha): local existence is unproven there.
    pub outside_local_theory: bool,
    pub classification: Classification,
    pub steps: usize,
    pub final_time: f64,
    pub initial_sup: f64,
    pub final_sup: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
    pub history: Vec<HistoryRow>,
    pub snapshots: Vec<Snapshot>,
    /// Wall-clock seconds; excluded from serialization so identical inputs
    /// produce identical bytes.
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl RunResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let run: RunResult = serde_json::from_str(text)?;
        if run.schema != RUN_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported run schema {:?}, expected {RUN_SCHEMA:?}",
                run.schema
            )));
        }
        Ok(run)
    }

    /// Rebuild the stored snapshot as a [`Field`] on the run grid.
    pub fn snapshot_field(&self, index: usize) -> Result<Field> {
        let snap = self.snapshots.get(index).ok_or_else(|| {
            Error::parameter(
                "index",
                format!("snapshot {index} of {}", self.snapshots.len()),
            )
        })?;
        Field::new(self.grid, snap.values.clone())
    }

    pub fn weighted_track(&self) -> Result<WeightedTrack> {
        let q = self.tracked_q.ok_or_else(|| {
            Error::parameter("weight_exponent_q", "run did not track a weighted norm")
        })?;
        let beta_star = self
            .beta_star
            .ok_or_else(|| Error::parameter("beta_star", "missing from run"))?;
        weighted_series(&self.history, q, beta_star)
    }
}

/// `t^{beta*} ||u||_q` diagnostic of a stored history.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightedTrack {
    pub q: f64,
    pub beta_star: f64,
    pub series: Vec<(f64, f64)>,
    pub sup: f64,
    pub sup_time: f64,
    /// Max over the last quartile of the series.
    pub last_quartile_max: f64,
    /// True when the last-quartile trend does not exceed the earlier supremum.
    pub non_growing: bool,
}

fn weighted_series(history: &[HistoryRow], q: f64, beta_star: f64) -> Result<WeightedTrack> {
    let mut series = Vec::new();
    for row in history {
        if let Some(lq) = row.lq {
            series.push((row.t, row.t.powf(beta_star) * lq));
        }
    }
    if series.is_empty() {
        return Err(Error::parameter(
            "history",
            "no rows carry the tracked L^q norm",
        ));
    }
    let (mut sup, mut sup_time) = (f64::NEG_INFINITY, 0.0);
    for &(t, w) in &series {
        if w > sup {
            sup = w;
            sup_time = t;
        }
    }
    let tail_start = series.len() - series.len() / 4;
    let head_max = series[..tail_start.max(1)]
        .iter()
        .map(|&(_, w)| w)
        .fold(0.0f64, f64::max);
    let last_quartile_max = series[tail_start.min(series.len() - 1)..]
        .iter()
        .map(|&(_, w)| w)
        .fold(0.0f64, f64::max);
    Ok(WeightedTrack {
        q,
        beta_star,
        series,
        sup,
        sup_time,
        last_quartile_max,
        non_growing: last_quartile_max <= head_max * (1.0 + 1e-6),
    })
}

/// Recompute the weighted series of a history recorded with
/// `weight_exponent_q = q`, validating the admissible interval first.
pub fn weighted_norm_track(
    history: &[HistoryRow],
    params: &EquationParams,
    q: f64,
) -> Result<WeightedTrack> {
    let exps = params.exponents().ok_or_else(|| {
        Error::parameter(
            "nonlinearity",
            "weighted norms are defined for the riesz nonlinearity only",
        )
    })?;
    let beta_star = exps.weight_exponent(params.p(), q)?;
    weighted_series(history, q, beta_star)
}

/// Rectangle-rule Lebesgue (quasi-)norm for any positive exponent.
fn lebesgue_any(f: &Field, q: f64) -> f64 {
    if q.is_infinite() {
        return f.sup_abs();
    }
    let h = f.grid().cell_volume();
    let sum: f64 = f.values().iter().map(|v| v.abs().powf(q)).sum();
    (h * sum).powf(1.0 / q)
}

fn boundary_mask(grid: Grid, edge_fraction: f64) -> Vec<bool> {
    let half = grid.box_length() / 2.0;
    let cut = half * (1.0 - edge_fraction);
    (0..grid.len())
        .map(|i| {
            let [x, y] = grid.position(i);
            let r = if grid.dim() == 1 {
                x.abs()
            } else {
                x.abs().max(y.abs())
            };
            r >= cut
        })
        .collect()
}

fn boundary_fraction(f: &Field, mask: &[bool]) -> f64 {
    let mut edge = 0.0;
    let mut total = 0.0;
    for (v, &m) in f.values().iter().zip(mask) {
        let a = v.abs();
        total += a;
        if m {
            edge += a;
        }
    }
    if total > 0.0 {
        edge / total
    } else {
        0.0
    }
}

/// Result of fitting `||u||_inf ~ c (T* - t)^{-1/(p-1)}` to the trailing
/// growth decade of a history.
#[derive(Debug, Clone, Copy)]
pub struct BlowupFit {
    pub t_estimate: f64,
    pub fit_residual: Option<f64>,
    pub wide_uncertainty: bool,
    pub window_len: usize,
}

/// Fit the blow-up time from a recorded history. Rows whose per-step growth
/// exceeds [`FIT_TRIM_GROWTH`] are resolution-limited and trimmed from the
/// tail; the fit then uses the trailing decade of `||u||_inf`. Fewer than 8
/// usable samples, or data with no growth toward the end, yield the last
/// recorded time with the wide-uncertainty flag instead of a fabricated T*.
pub fn blowup_time_estimate(history: &[HistoryRow], p: f64) -> Result<BlowupFit> {
    if !(p > 1.0) {
        return Err(Error::parameter("p", format!("must exceed 1, got {p}")));
    }
    let rows: Vec<(f64, f64)> = history
        .iter()
        .filter(|r| r.linf.is_finite() && r.linf > 0.0)
        .map(|r| (r.t, r.linf))
        .collect();
    if rows.is_empty() {
        return Err(Error::parameter("history", "no finite positive samples"));
    }
    let t_last = rows.last().unwrap().0;
    let fallback = |window_len| BlowupFit {
        t_estimate: t_last,
        fit_residual: None,
        wide_uncertainty: true,
        window_len,
    };

    // drop the contiguous resolution-limited tail
    let mut end = rows.len();
    while end >= 2 && rows[end - 1].1 / rows[end - 2].1 > FIT_TRIM_GROWTH {
        end -= 1;
    }
    let kept = &rows[..end];
    let peak = kept.iter().map(|&(_, u)| u).fold(0.0f64, f64::max);

    // trailing contiguous run inside the top decade
    let mut start = kept.len();
    while start > 0 && kept[start - 1].1 >= peak / 10.0 {
        start -= 1;
    }
    let window = &kept[start..];
    if window.len() < 2 {
        return Ok(fallback(window.len()));
    }

    let ts: Vec<f64> = window.iter().map(|&(t, _)| t).collect();
    let ys: Vec<f64> = window.iter().map(|&(_, u)| u.powf(1.0 - p)).collect();
    let fit = fitting::fit_line(&ts, &ys)?;
    let b = -fit.slope;
    if !(b > 0.0) {
        return Ok(fallback(window.len()));
    }
    let t_estimate = fit.intercept / b;
    if t_estimate < ts[ts.len() - 1] {
        return Ok(fallback(window.len()));
    }

    // residual in log space of the reconstructed sup norm
    let mut ss = 0.0;
    let mut count = 0usize;
    let mut degenerate = false;
    for (&t, &(_, u)) in ts.iter().zip(window) {
        let pred = fit.eval(t);
        if pred <= 0.0 {
            degenerate = true;
            continue;
        }
        let r = (pred.powf(-1.0 / (p - 1.0)) / u).ln();
        ss += r * r;
        count += 1;
    }
    let residual = if count > 0 {
        Some((ss / count as f64).sqrt())
    } else {
        None
    };

    let span = peak / window[0].1;
    let wide = window.len() < 8 || span < 5.0 || degenerate;
    Ok(BlowupFit {
        t_estimate,
        fit_residual: residual,
        wide_uncertainty: wide,
        window_len: window.len(),
    })
}

/// Exact realization of `u_lambda(x) = lambda^a u(lambda x)` for a power of
/// two lambda: the sample array is reused on the box of length `L/lambda`, so
/// the norm identity `||u_lambda||_q = lambda^{a - n/q} ||u||_q` holds to
/// rounding.
pub fn scaling_transform(u: &Field, lambda: f64, params: &EquationParams) -> Result<Field> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::parameter("lambda", "must be positive and finite"));
    }
    let log2 = lambda.log2();
    if (log2 - log2.round()).abs() > 1e-12 {
        return Err(Error::parameter(
            "lambda",
            format!("must be a power of 2 for exact grid commensurability, got {lambda}"),
        ));
    }
    let a = params.scaling_amplitude_exponent().ok_or_else(|| {
        Error::parameter(
            "nonlinearity",
            "the scaling family needs a riesz or local nonlinearity",
        )
    })?;
    let g = u.grid();
    let scaled = Grid::new(g.dim(), g.box_length() / lambda, g.points_per_axis())?;
    let amp = lambda.powf(a);
    Field::new(scaled, u.values().iter().map(|&v| amp * v).collect())
}

struct Tracking {
    s: f64,
    q_sc: Option<f64>,
    tracked_q: Option<f64>,
    beta_star: Option<f64>,
    mask: Vec<bool>,
}

impl Tracking {
    fn row(&self, u: &Field, t: f64, dt: Option<f64>) -> HistoryRow {
        let lq = self.tracked_q.map(|q| lebesgue_any(u, q));
        HistoryRow {
            t,
            dt,
            linf: u.sup_abs(),
            ls: lebesgue_any(u, self.s),
            lqsc: self.q_sc.map(|q| lebesgue_any(u, q)),
            lq,
            weighted: match (lq, self.beta_star) {
                (Some(lq), Some(bs)) => Some(t.powf(bs) * lq),
                _ => None,
            },
            boundary_mass: boundary_fraction(u, &self.mask),
            mass: u.mass(),
        }
    }
}

/// Evolve `u0` under the configured problem until the horizon, blow-up, a
/// boundary alarm, or the step budget. Deterministic given its inputs.
pub fn evolve(u0: &Field, params: &EquationParams, config: &SolverConfig) -> Result<RunResult> {
    config.validate()?;
    let start = std::time::Instant::now();
    let grid = u0.grid();
    if grid.dim() != params.dim() {
        return Err(Error::parameter(
            "dim",
            format!("field dim {} vs equation dim {}", grid.dim(), params.dim()),
        ));
    }
    let initial_sup = u0.sup_abs();
    if initial_sup > 0.0 && config.blowup_threshold <= 10.0 * initial_sup {
        return Err(Error::parameter(
            "blowup_threshold",
            format!(
                "must exceed 10 ||u0||_inf = {:.3e}",
                10.0 * initial_sup
            ),
        ));
    }

    let exps: Option<CriticalExponents> = params.exponents();
    let s = config.norm_exponent.unwrap_or(2.0);
    let q_sc = match &exps {
        Some(e) => Some(e.critical_lebesgue(params.p())?),
        None => None,
    };
    let (tracked_q, beta_star) = match config.weight_exponent_q {
        Some(q) => {
            let e = exps.as_ref().ok_or_else(|| {
                Error::parameter(
                    "weight_exponent_q",
                    "weighted tracking needs the riesz nonlinearity",
                )
            })?;
            (Some(q), Some(e.weight_exponent(params.p(), q)?))
        }
        None => (None, None),
    };
    let outside_local_theory = exps
        .as_ref()
        .map(|e| params.p() <= e.local_existence())
        .unwrap_or(false);

    let tracking = Tracking {
        s,
        q_sc,
        tracked_q,
        beta_star,
        mask: boundary_mask(grid, config.boundary_edge_fraction),
    };
    // the alarm measures growth of edge mass over the initial layout, so
    // deliberately delocalized data (a constant) does not trip it at t = 0
    let initial_edge = boundary_fraction(u0, &tracking.mask);
    let edge_alarm = config.boundary_mass_fraction + initial_edge;

    let propagator = Propagator::new(grid, params.beta())?;
    let gain = params.nonlinearity().max_gain(grid);

    let mut u = u0.clone();
    let mut t = 0.0f64;
    let mut dt_prev = f64::INFINITY;
    let mut steps = 0usize;
    let mut history = vec![tracking.row(&u, t, None)];
    let mut snapshots = Vec::new();
    let mut next_snapshot = if config.snapshot_interval > 0.0 {
        snapshots.push(Snapshot {
            t,
            values: u.values().to_vec(),
        });
        config.snapshot_interval
    } else {
        f64::INFINITY
    };
    let mut recent_sups: VecDeque<f64> = VecDeque::with_capacity(PINNED_WINDOW + 1);
    let mut pinned_run = 0usize;
    let mut last_recorded = 0usize; // step index of the last history row

    let classification = loop {
        let sup = u.sup_abs();

        if sup >= config.blowup_threshold {
            break classify_blowup(&history, params.p());
        }
        let edge = history.last().map(|r| r.boundary_mass).unwrap_or(0.0);
        if edge > edge_alarm {
            break Classification::Inconclusive {
                reason: format!(
                    "domain truncation: boundary mass fraction {edge:.3e} exceeds \
                     the initial fraction by more than {:.3e}",
                    config.boundary_mass_fraction
                ),
            };
        }
        if pinned_run >= PINNED_WINDOW && recent_sups.len() > PINNED_WINDOW {
            let old = recent_sups[0];
            if old > 0.0 && sup / old >= PINNED_GROWTH {
                break classify_blowup(&history, params.p());
            }
        }
        if t >= config.t_end * (1.0 - 1e-12) {
            break classify_horizon(&history, initial_sup);
        }
        if steps >= config.max_steps {
            break Classification::Inconclusive {
                reason: format!("step budget exhausted after {steps} steps at t = {t:.6e}"),
            };
        }

        let mut dt = step_controller(sup, dt_prev, params.p(), gain, config.dt_min, config.dt_max);
        let pinned = dt <= config.dt_min * (1.0 + 1e-12);
        // land exactly on snapshot times and the horizon
        let mut clipped = false;
        if t + dt >= next_snapshot - 1e-12 * config.snapshot_interval.max(1.0) {
            dt = next_snapshot - t;
            clipped = true;
        }
        if t + dt > config.t_end {
            dt = config.t_end - t;
            clipped = true;
        }

        let stepped = propagator.etd_step(&u, dt, params, config.dealias_fraction);
        match stepped {
            Ok(next) => u = next,
            Err(Error::Overflow { .. }) | Err(Error::NonFinite { .. }) => {
                break classify_blowup(&history, params.p());
            }
            Err(e) => return Err(e),
        }
        t += dt;
        steps += 1;
        dt_prev = if clipped { dt_prev.min(config.dt_max) } else { dt };

        if pinned && !clipped {
            pinned_run += 1;
        } else {
            pinned_run = 0;
        }
        recent_sups.push_back(u.sup_abs());
        if recent_sups.len() > PINNED_WINDOW + 1 {
            recent_sups.pop_front();
        }

        if steps % config.history_stride == 0 {
            history.push(tracking.row(&u, t, Some(dt)));
            last_recorded = steps;
        }
        if (t - next_snapshot).abs() <= 1e-9 * config.snapshot_interval {
            snapshots.push(Snapshot {
                t,
                values: u.values().to_vec(),
            });
            next_snapshot += config.snapshot_interval;
        }
    };

    if last_recorded != steps && steps > 0 {
        history.push(tracking.row(&u, t, None));
    }
    if config.snapshot_interval > 0.0 && snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(Snapshot {
            t,
            values: u.values().to_vec(),
        });
    }

    Ok(RunResult {
        schema: RUN_SCHEMA.to_string(),
        params: ParamsSummary::of(params),
        grid,
        solver: config.clone(),
        norm_exponent_s: s,
        q_sc,
        tracked_q,
        beta_star,
        outside_local_theory,
        classification,
        steps,
        final_time: t,
        initial_sup,
        final_sup: u.sup_abs(),
        initial_mass: history.first().map(|r| r.mass).unwrap_or(0.0),
        final_mass: u.mass(),
        history,
        snapshots,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn classify_blowup(history: &[HistoryRow], p: f64) -> Classification {
    match blowup_time_estimate(history, p) {
        Ok(fit) => Classification::Blowup {
            t_estimate: fit.t_estimate,
            fit_residual: fit.fit_residual,
            wide_uncertainty: fit.wide_uncertainty,
        },
        Err(e) => Classification::Inconclusive {
            reason: format!("blow-up detected but unfittable: {e}"),
        },
    }
}

fn classify_horizon(history: &[HistoryRow], initial_sup: f64) -> Classification {
    if initial_sup == 0.0 {
        return Classification::GlobalDecay;
    }
    let sups: Vec<f64> = history.iter().map(|r| r.linf).collect();
    let final_sup = *sups.last().unwrap();
    if final_sup >= initial_sup {
        return Classification::Inconclusive {
            reason: "no decay: final sup norm at or above the initial one".into(),
        };
    }
    let tail = &sups[sups.len() - sups.len() / 4..];
    for w in tail.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-9) {
            return Classification::Inconclusive {
                reason: "non-monotone sup-norm trend in the last quartile".into(),
            };
        }
    }
    Classification::GlobalDecay
}

const CSV_HEADER: &str = "t,linf,ls,lqsc,weighted,boundary_mass";

fn fmt_cell(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:e}"),
        None => "nan".to_string(),
    }
}

/// Render the history in the fixed six-column CSV layout.
pub fn history_to_csv(history: &[HistoryRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in history {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_cell(Some(row.t)),
            fmt_cell(Some(row.linf)),
            fmt_cell(Some(row.ls)),
            fmt_cell(row.lqsc),
            fmt_cell(row.weighted),
            fmt_cell(Some(row.boundary_mass)),
        ));
    }
    out
}

fn parse_cell(text: &str, line: usize) -> Result<Option<f64>> {
    let v: f64 = text.trim().parse().map_err(|_| {
        Error::Config(format!("history csv line {line}: bad number {text:?}"))
    })?;
    Ok(if v.is_nan() { None } else { Some(v) })
}

/// Parse a history CSV back into rows. `dt`, `lq` and `mass` are not part of
/// the CSV layout and come back as `None`/`NaN`-free defaults.
pub fn history_from_csv(text: &str) -> Result<Vec<HistoryRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, head)) if head.trim() == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "history csv: expected header {CSV_HEADER:?}, got {:?}",
                other.map(|(_, l)| l).unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::Config(format!(
                "history csv line {}: expected 6 columns, got {}",
                idx + 1,
                cells.len()
            )));
        }
        let line_no = idx + 1;
        let req = |cell: &str| -> Result<f64> {
            parse_cell(cell, line_no)?.ok_or_else(|| {
                Error::Config(format!("history csv line {line_no}: unexpected nan"))
            })
        };
        rows.push(HistoryRow {
            t: req(cells[0])?,
            dt: None,
            linf: req(cells[1])?,
            ls: req(cells[2])?,
            lqsc: parse_cell(cells[3], line_no)?,
            lq: None,
            weighted: parse_cell(cells[4], line_no)?,
            boundary_mass: req(cells[5])?,
            mass: 0.0,
        });
    }
    Ok(rows)
}
