//! Mild-solution fixed point on a short horizon:
//!
//! `u(t) = S(t) u0 + int_0^t S(t - tau) N(u)(tau) d tau`
//!
//! iterated on a uniform grid of sub-times with trapezoidal quadrature for
//! the Duhamel integral. The iteration is run inside the ball of radius
//! `2 (||u0||_s + ||u0||_inf)`; if it fails to contract with ratio <= 1/2 the
//! horizon is halved (up to [`MAX_HALVINGS`] times). This provides a solver
//! independent of the exponential integrator for cross-validation.

use crate::error::{Error, Result};
use crate::grid::Field;
use crate::propagator::Propagator;
use crate::source::{EquationParams, Nonlinearity};

/// Sub-intervals of the Duhamel quadrature.
pub const SUB_TIMES: usize = 32;
/// Horizon halvings attempted before giving up.
pub const MAX_HALVINGS: u32 = 8;
/// Contraction target for ratios of successive iterate distances.
pub const CONTRACTION_TARGET: f64 = 0.5;

const MAX_ITERATIONS: usize = 24;

#[derive(Debug, Clone)]
pub struct ContractionReport {
    pub requested_horizon: f64,
    pub horizon: f64,
    pub halvings: u32,
    /// Successive iterate distances in the norm `sup_t (||.||_s + ||.||_inf)`.
    pub diff_norms: Vec<f64>,
    /// Ratios of consecutive distances while they are above the noise floor.
    pub ratios: Vec<f64>,
    pub ball_radius: f64,
    pub max_iterate_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LocalSolution {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    pub report: ContractionReport,
}

fn mixed_norm(f: &Field, s: f64) -> Result<f64> {
    Ok(f.lp_norm(s)? + f.sup_abs())
}

/// Validate the Lebesgue index of the contraction space. For the Riesz
/// source the mild theory needs `n/(n - alpha) < s < n (p - 1)/alpha`.
fn check_norm_exponent(params: &EquationParams, s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 1.0) {
        return Err(Error::parameter(
            "s",
            format!("norm exponent must lie in [1, inf), got {s}"),
        ));
    }
    if let Nonlinearity::Riesz(k) = params.nonlinearity() {
        let n = params.dim() as f64;
        let lower = n / (n - k.alpha());
        let upper = n * (params.p() - 1.0) / k.alpha();
        if !(s > lower && s < upper) {
            return Err(Error::parameter(
                "s",
                format!(
                    "outside the local-existence window ({lower:.6}, {upper:.6}) for \
                     n = {n}, alpha = {}, p = {}",
                    k.alpha(),
                    params.p()
                ),
            ));
        }
    }
    Ok(())
}

struct AttemptOutcome {
    solution: Option<LocalSolution>,
    last_ratio: f64,
}

fn attempt(
    propagator: &Propagator,
    u0: &Field,
    horizon: f64,
    params: &EquationParams,
    s: f64,
    dealias_fraction: f64,
    ball_radius: f64,
) -> Result<AttemptOutcome> {
    let m = SUB_TIMES;
    let dt = horizon / m as f64;
    let times: Vec<f64> = (0..=m).map(|j| j as f64 * dt).collect();

    let u0_hat = u0.forward()?;
    // free evolution S(t_m) u0, kept spectral for reuse
    let mut free_hats = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let mut hat = u0_hat.clone();
        propagator.semigroup_spectral(&mut hat, times[j])?;
        free_hats.push(hat);
    }

    let mut current: Vec<Field> = free_hats
        .iter()
        .map(|h| h.backward())
        .collect::<Result<_>>()?;

    let scale = mixed_norm(u0, s)?;
    let floor = 1e-12 * scale.max(1e-300);
    let mut diff_norms = Vec::new();
    let mut ratios = Vec::new();
    let mut max_iterate_norm: f64 = 0.0;

    for _ in 0..MAX_ITERATIONS {
        // spectra of the source along the current trajectory
        let mut source_hats = Vec::with_capacity(m + 1);
        for u in &current {
            let mut hat = params.nonlinearity().eval(u, params.p())?.forward()?;
            hat.dealias(dealias_fraction);
            source_hats.push(hat);
        }

        let mut next = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let mut acc = free_hats[j].clone();
            // trapezoid over tau_0 .. tau_j
            for i in 0..=j {
                let weight = if i == 0 || i == j { 0.5 } else { 1.0 };
                if j == 0 {
                    break;
                }
                let mut term = source_hats[i].clone();
                propagator.semigroup_spectral(&mut term, (j - i) as f64 * dt)?;
                for (a, b) in acc.coeffs_mut().iter_mut().zip(term.coeffs()) {
                    *a += b * (weight * dt);
                }
            }
            next.push(acc.backward()?);
        }

        let mut dist: f64 = 0.0;
        for (a, b) in next.iter().zip(&current) {
            dist = dist.max(mixed_norm(&a.zip_map(b, |x, y| x - y)?, s)?);
        }
        for u in &next {
            max_iterate_norm = max_iterate_norm.max(mixed_norm(u, s)?);
        }
        if let Some(&prev) = diff_norms.last() {
            if prev > floor {
                ratios.push(dist / prev);
            }
        }
        diff_norms.push(dist);
        current = next;

        if dist <= floor {
            break;
        }
    }

    let contracted = ratios.iter().all(|&r| r <= CONTRACTION_TARGET)
        && diff_norms.last().copied().unwrap_or(f64::INFINITY) <= 1e-8 * scale.max(1e-300);
    let in_ball = max_iterate_norm <= ball_radius * (1.0 + 1e-9);
    let last_ratio = ratios.last().copied().unwrap_or(f64::INFINITY);

    if contracted && in_ball {
        Ok(AttemptOutcome {
            solution: Some(LocalSolution {
                times,
                fields: current,
                report: ContractionReport {
                    requested_horizon: f64::NAN, // filled by the caller
                    horizon,
                    halvings: 0,
                    diff_norms,
                    ratios,
                    ball_radius,
                    max_iterate_norm,
                },
            }),
            last_ratio,
        })
    } else {
        Ok(AttemptOutcome {
            solution: None,
            last_ratio: if in_ball { last_ratio } else { f64::INFINITY },
        })
    }
}

/// Solve the mild formulation on `[0, horizon]`, halving the horizon until
/// the iteration contracts.
pub fn picard_solve_local(
    u0: &Field,
    horizon: f64,
    params: &EquationParams,
    s: f64,
    dealias_fraction: f64,
) -> Result<LocalSolution> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::parameter(
            "horizon",
            format!("must be positive and finite, got {horizon}"),
        ));
    }
    check_norm_exponent(params, s)?;
    let propagator = Propagator::new(u0.grid(), params.beta())?;
    let ball_radius = 2.0 * mixed_norm(u0, s)?;

    let mut t = horizon;
    let mut last_ratio = f64::INFINITY;
    for halvings in 0..=MAX_HALVINGS {
        // an iterate leaving the floating-point range is divergence, not a
        // hard failure: the horizon was too ambitious
        let outcome = match attempt(
            &propagator,
            u0,
            t,
            params,
            s,
            dealias_fraction,
            ball_radius,
        ) {
            Ok(outcome) => outcome,
            Err(Error::Overflow { .. }) | Err(Error::NonFinite { .. }) => AttemptOutcome {
                solution: None,
                last_ratio: f64::INFINITY,
            },
            Err(e) => return Err(e),
        };
        if let Some(mut solution) = outcome.solution {
            solution.report.requested_horizon = horizon;
            solution.report.halvings = halvings;
            return Ok(solution);
        }
        last_ratio = outcome.last_ratio;
        t /= 2.0;
    }
    Err(Error::NoContraction {
        halvings: MAX_HALVINGS,
        last_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, Grid};
    use crate::operators::RieszKernel;
    use crate::source::Nonlinearity;

    fn small_problem() -> (Field, EquationParams) {
        let g = Grid::new(1, 30.0, 128).unwrap();
        let u0 = Field::from_fn(g, |[x, _]| 0.2 * (-x * x / 4.0).exp());
        let kernel = RieszKernel::new(1, 0.5).unwrap();
        let params = EquationParams::new(1, 2.0, 3.0, Nonlinearity::Riesz(kernel)).unwrap();
        (u0, params)
    }

    #[test]
    fn small_data_contracts_without_halving() {
        let (u0, params) = small_problem();
        let sol = picard_solve_local(&u0, 0.1, &params, 3.0, 2.0 / 3.0).unwrap();
        assert_eq!(sol.report.halvings, 0);
        assert_eq!(sol.fields.len(), SUB_TIMES + 1);
        assert!(sol
            .report
            .ratios
            .iter()
            .all(|&r| r <= CONTRACTION_TARGET));
        assert!(sol.report.max_iterate_norm <= sol.report.ball_radius);
    }

    #[test]
    fn picard_and_etd_agree_on_the_local_horizon() {
        let (u0, params) = small_problem();
        let horizon = 0.1;
        let sol = picard_solve_local(&u0, horizon, &params, 3.0, 2.0 / 3.0).unwrap();
        let prop = Propagator::new(u0.grid(), params.beta()).unwrap();
        let steps = 256;
        let etd = prop
            .evolve_fixed_steps(&u0, horizon / steps as f64, steps, &params, 2.0 / 3.0)
            .unwrap();
        let last = sol.fields.last().unwrap();
        let diff = last.zip_map(&etd, |a, b| a - b).unwrap().sup_abs();
        let scale = etd.sup_abs();
        assert!(
            diff / scale < 5e-4,
            "relative sup disagreement {:.3e}",
            diff / scale
        );
    }

    #[test]
    fn oversized_horizon_is_halved() {
        let g = Grid::new(1, 30.0, 128).unwrap();
        let u0 = Field::from_fn(g, |[x, _]| 1.5 * (-x * x / 4.0).exp());
        let kernel = RieszKernel::new(1, 0.5).unwrap();
        let params = EquationParams::new(1, 2.0, 3.0, Nonlinearity::Riesz(kernel)).unwrap();
        let sol = picard_solve_local(&u0, 4.0, &params, 3.0, 2.0 / 3.0).unwrap();
        assert!(sol.report.halvings >= 1);
        assert!(sol.report.horizon < 4.0);
    }

    #[test]
    fn norm_exponent_outside_the_window_is_rejected() {
        let (u0, params) = small_problem();
        // window for n=1, alpha=0.5, p=3 is (2, 4)
        assert!(picard_solve_local(&u0, 0.1, &params, 5.0, 2.0 / 3.0).is_err());
        assert!(picard_solve_local(&u0, 0.1, &params, 2.0, 2.0 / 3.0).is_err());
    }
}
