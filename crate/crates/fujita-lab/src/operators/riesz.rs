//! Riesz potential `I_alpha f = A_alpha |x|^{alpha - n} * f`, the inverse of
//! `(-Delta)^{alpha/2}`, with Fourier symbol `|xi|^{-alpha}`.
//!
//! Two realizations are kept:
//! * `Multiplier`: divide spectral coefficients by `|xi|^alpha`; the singular
//!   zero mode is replaced by an explicit policy value.
//! * `SampledKernel`: circular convolution with the kernel sampled on the
//!   grid, the origin cell replaced by its exact cell average. This variant
//!   is manifestly positivity-preserving and is what the capacity audit uses.

use statrs::function::gamma::gamma;

use super::kernels::circular_convolve;
use super::{FourierMultiplier, ZeroMode};
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::quad::simpson;

/// `A_alpha = Gamma((n - alpha)/2) / (Gamma(alpha/2) pi^{n/2} 2^alpha)`, the
/// constant making `I_alpha` the exact inverse of `(-Delta)^{alpha/2}`.
pub fn riesz_normalization(dim: usize, alpha: f64) -> f64 {
    let n = dim as f64;
    gamma((n - alpha) / 2.0)
        / (gamma(alpha / 2.0) * std::f64::consts::PI.powf(n / 2.0) * 2.0f64.powf(alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RieszMode {
    Multiplier,
    SampledKernel,
}

/// Policy for the singular `|xi| = 0` multiplier entry. `BoxAverage` uses
/// `m0 = integral over the box of A_alpha |x|^{alpha - n} dx`, which is what a
/// spatially constant field is amplified by under the sampled kernel; with it
/// the two modes agree on constants and the spatially homogeneous problem
/// reduces to the ODE `u' = m0 u^p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RieszZeroMode {
    Zero,
    BoxAverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RieszKernel {
    dim: usize,
    alpha: f64,
    mode: RieszMode,
    zero_mode: RieszZeroMode,
}

impl RieszKernel {
    pub fn new(dim: usize, alpha: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::parameter("dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(Error::parameter(
                "alpha",
                format!("potential order must lie in (0, n) = (0, {dim}), got {alpha}"),
            ));
        }
        Ok(RieszKernel {
            dim,
            alpha,
            mode: RieszMode::Multiplier,
            zero_mode: RieszZeroMode::BoxAverage,
        })
    }

    pub fn with_mode(mut self, mode: RieszMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_zero_mode(mut self, zero_mode: RieszZeroMode) -> Self {
        self.zero_mode = zero_mode;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mode(&self) -> RieszMode {
        self.mode
    }

    pub fn normalization(&self) -> f64 {
        riesz_normalization(self.dim, self.alpha)
    }

    /// `m0 = integral over [-L/2, L/2)^n of A_alpha |x|^{alpha - n} dx`.
    ///
    /// In one dimension this is `2 A (L/2)^alpha / alpha` exactly; in two,
    /// the inscribed disk contributes `2 pi A (L/2)^alpha / alpha` and the
    /// corner remainder reduces to a smooth angular integral.
    pub fn box_average(&self, grid: Grid) -> f64 {
        let a = self.normalization();
        let alpha = self.alpha;
        let half = grid.box_length() / 2.0;
        match self.dim {
            1 => 2.0 * a * half.powf(alpha) / alpha,
            _ => {
                let disk = 2.0 * std::f64::consts::PI * a * half.powf(alpha) / alpha;
                let corners = 8.0 * a / alpha
                    * simpson(
                        |theta: f64| (half / theta.cos()).powf(alpha) - half.powf(alpha),
                        0.0,
                        std::f64::consts::FRAC_PI_4,
                        256,
                    );
                disk + corners
            }
        }
    }

    fn zero_mode_value(&self, grid: Grid) -> ZeroMode {
        match self.zero_mode {
            RieszZeroMode::Zero => ZeroMode::Zero,
            RieszZeroMode::BoxAverage => ZeroMode::Explicit(self.box_average(grid)),
        }
    }

    pub fn multiplier(&self, grid: Grid) -> Result<FourierMultiplier> {
        self.check_grid(grid)?;
        let alpha = self.alpha;
        Ok(FourierMultiplier::from_radial(
            grid,
            |xi| xi.powf(-alpha),
            self.zero_mode_value(grid),
        ))
    }

    /// Largest symbol magnitude seen by the multiplier form, including the
    /// zero-mode policy value. Used as the nonlinear stiffness proxy.
    pub fn max_gain(&self, grid: Grid) -> f64 {
        let smallest_xi = 2.0 * std::f64::consts::PI / grid.box_length();
        let sym = smallest_xi.powf(-self.alpha);
        match self.zero_mode_value(grid) {
            ZeroMode::Zero => sym,
            ZeroMode::Explicit(v) => sym.max(v.abs()),
        }
    }

    /// Kernel samples `A_alpha |x|^{alpha - n}` on the grid, the origin cell
    /// replaced by its cell average `A_alpha (n / alpha) r_cell^{alpha - n}`
    /// with `r_cell` the radius of the ball whose volume is one grid cell.
    pub fn sampled_field(&self, grid: Grid) -> Result<Field> {
        self.check_grid(grid)?;
        let a = self.normalization();
        let n = self.dim as f64;
        let alpha = self.alpha;
        let h = grid.spacing();
        let r_cell = match self.dim {
            1 => h / 2.0,
            _ => h / std::f64::consts::PI.sqrt(),
        };
        let origin_value = a * (n / alpha) * r_cell.powf(alpha - n);
        let mut field = Field::from_fn(grid, |[x, y]| {
            let r = (x * x + y * y).sqrt();
            a * r.powf(alpha - n)
        });
        let npa = grid.points_per_axis();
        let origin_flat = match self.dim {
            1 => npa / 2,
            _ => (npa / 2) * npa + npa / 2,
        };
        field.values_mut()[origin_flat] = origin_value;
        Ok(field)
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        match self.mode {
            RieszMode::Multiplier => self.multiplier(f.grid())?.apply(f),
            RieszMode::SampledKernel => {
                let kernel = self.sampled_field(f.grid())?;
                circular_convolve(&kernel, f)
            }
        }
    }

    fn check_grid(&self, grid: Grid) -> Result<()> {
        if grid.dim() != self.dim {
            return Err(Error::parameter(
                "grid",
                format!(
                    "kernel is {}-dimensional but grid is {}-dimensional",
                    self.dim,
                    grid.dim()
                ),
            ));
        }
        Ok(())
    }
}
