//! The equation being integrated:
//!
//! `u_t + (-Delta)^{beta/2} u = N(u)`
//!
//! with the source `N(u)` one of `I_alpha(|u|^p)` (Riesz potential of the
//! power), `K * |u|^p` (general radial kernel), the pointwise `|u|^p`
//! (local limit `alpha -> 0`), or absent (linear diffusion).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponents::{check_p, CriticalExponents};
use crate::grid::{Field, Grid};
use crate::operators::{check_beta, ConvolutionKernel, RieszKernel};

#[derive(Debug, Clone)]
pub enum Nonlinearity {
    /// `I_alpha(|u|^p)`.
    Riesz(RieszKernel),
    /// `K * |u|^p` for a general radial kernel.
    Kernel(ConvolutionKernel),
    /// `|u|^p` pointwise.
    Local,
    /// No source; the flow is the pure fractional heat semigroup.
    None,
}

impl Nonlinearity {
    pub fn kind(&self) -> &'static str {
        match self {
            Nonlinearity::Riesz(_) => "riesz",
            Nonlinearity::Kernel(_) => "kernel",
            Nonlinearity::Local => "local",
            Nonlinearity::None => "none",
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Nonlinearity::None)
    }

    /// Evaluate `N(u)`; `Overflow` if `|u|^p` leaves the finite range.
    pub fn eval(&self, u: &Field, p: f64) -> Result<Field> {
        if self.is_none() {
            return Ok(Field::zeros(u.grid()));
        }
        let powered = u.map(|v| v.abs().powf(p));
        if powered.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::Overflow {
                t: f64::NAN,
                sup: u.sup_abs(),
            });
        }
        match self {
            Nonlinearity::Riesz(k) => k.apply(&powered),
            Nonlinearity::Kernel(k) => k.convolve(&powered),
            Nonlinearity::Local => Ok(powered),
            Nonlinearity::None => unreachable!(),
        }
    }

    /// Amplification proxy: the largest multiplier gain the source applies on
    /// this grid. Drives the nonlinear time-step restriction.
    pub fn max_gain(&self, grid: Grid) -> f64 {
        match self {
            Nonlinearity::Riesz(k) => k.max_gain(grid),
            // the convolution is bounded by the integral of the sampled kernel
            Nonlinearity::Kernel(k) => k
                .sampled_field(grid)
                .map(|f| f.values().iter().map(|v| v.abs()).sum::<f64>() * grid.cell_volume())
                .unwrap_or(1.0),
            Nonlinearity::Local => 1.0,
            Nonlinearity::None => 0.0,
        }
    }
}

/// Full parameter set of the evolution problem.
#[derive(Debug, Clone)]
pub struct EquationParams {
    dim: usize,
    beta: f64,
    p: f64,
    nonlinearity: Nonlinearity,
}

impl EquationParams {
    pub fn new(dim: usize, beta: f64, p: f64, nonlinearity: Nonlinearity) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::parameter("dim", format!("must be 1 or 2, got {dim}")));
        }
        check_beta(beta)?;
        if !nonlinearity.is_none() {
            check_p(p)?;
        }
        match &nonlinearity {
            Nonlinearity::Riesz(k) if k.dim() != dim => {
                return Err(Error::parameter(
                    "nonlinearity",
                    format!("Riesz kernel is {}-dimensional, equation is {dim}-dimensional", k.dim()),
                ));
            }
            Nonlinearity::Kernel(k) if k.dim() != dim => {
                return Err(Error::parameter(
                    "nonlinearity",
                    format!("kernel is {}-dimensional, equation is {dim}-dimensional", k.dim()),
                ));
            }
            _ => {}
        }
        Ok(EquationParams {
            dim,
            beta,
            p,
            nonlinearity,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.nonlinearity
    }

    /// Critical exponents, defined for the Riesz source.
    pub fn exponents(&self) -> Option<CriticalExponents> {
        match &self.nonlinearity {
            Nonlinearity::Riesz(k) => CriticalExponents::new(self.dim, self.beta, k.alpha()).ok(),
            _ => None,
        }
    }

    /// Amplitude exponent of the scaling family
    /// `u_lambda(t, x) = lambda^a u(lambda^beta t, lambda x)`:
    /// `a = (beta + alpha)/(p - 1)` (Riesz) or `beta/(p - 1)` (local limit).
    pub fn scaling_amplitude_exponent(&self) -> Option<f64> {
        match &self.nonlinearity {
            Nonlinearity::Riesz(k) => Some((self.beta + k.alpha()) / (self.p - 1.0)),
            Nonlinearity::Local => Some(self.beta / (self.p - 1.0)),
            _ => None,
        }
    }
}

/// Serializable summary of the parameters, embedded in run artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsSummary {
    pub dim: usize,
    pub beta: f64,
    pub p: f64,
    pub nonlinearity: String,
    pub alpha: Option<f64>,
}

impl ParamsSummary {
    pub fn of(params: &EquationParams) -> Self {
        let alpha = match params.nonlinearity() {
            Nonlinearity::Riesz(k) => Some(k.alpha()),
            _ => None,
        };
        ParamsSummary {
            dim: params.dim(),
            beta: params.beta(),
            p: params.p(),
            nonlinearity: params.nonlinearity().kind().to_string(),
            alpha,
        }
    }
}
