//! Spatial operators: Fourier multipliers, the fractional Laplacian, the
//! Riesz potential, general radial convolution kernels, and the
//! principal-value quadrature used as an independent cross-check.

mod kernels;
mod pv;
mod riesz;

pub use kernels::{ConvolutionKernel, KernelProfile, KernelTable};
pub use pv::{pv_frac_laplacian_1d, pv_on_grid, PvParams, PvValue};
pub use riesz::{riesz_normalization, RieszKernel, RieszMode, RieszZeroMode};

use crate::error::{Error, Result};
use crate::grid::{Field, Grid, SpectralField};

/// Diagonal operator in Fourier space: multiplies the coefficient at flat
/// index `k` by `symbol[k]`. The zero-mode entry is set by the chosen policy,
/// not by evaluating the symbol function at `|xi| = 0`.
#[derive(Debug, Clone)]
pub struct FourierMultiplier {
    grid: Grid,
    symbol: Vec<f64>,
}

/// What a multiplier does to the mean of a field. `Zero` annihilates it,
/// `Explicit(v)` scales it by `v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ZeroMode {
    Zero,
    Explicit(f64),
}

impl FourierMultiplier {
    /// Build from a radial symbol `|xi| -> value`. The zero mode is taken
    /// from `zero_mode` so singular symbols never see `|xi| = 0`.
    pub fn from_radial(grid: Grid, symbol: impl Fn(f64) -> f64, zero_mode: ZeroMode) -> Self {
        let values = (0..grid.len())
            .map(|k| {
                if k == 0 {
                    match zero_mode {
                        ZeroMode::Zero => 0.0,
                        ZeroMode::Explicit(v) => v,
                    }
                } else {
                    symbol(grid.wavenumber_abs(k))
                }
            })
            .collect();
        FourierMultiplier {
            grid,
            symbol: values,
        }
    }

    pub fn from_values(grid: Grid, symbol: Vec<f64>) -> Result<Self> {
        if symbol.len() != grid.len() {
            return Err(Error::parameter(
                "symbol",
                format!("expected {} entries, got {}", grid.len(), symbol.len()),
            ));
        }
        Ok(FourierMultiplier { grid, symbol })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Largest absolute symbol value, the natural operator-norm proxy used by
    /// the time-step controller.
    pub fn max_abs_symbol(&self) -> f64 {
        self.symbol.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn apply_spectral(&self, f: &mut SpectralField) -> Result<()> {
        self.grid.check_same(&f.grid())?;
        let symbol = &self.symbol;
        f.apply_symbol(|k| symbol[k]);
        Ok(())
    }

    pub fn apply(&self, f: &Field) -> Result<Field> {
        self.grid.check_same(&f.grid())?;
        let mut hat = f.forward()?;
        self.apply_spectral(&mut hat)?;
        hat.backward()
    }

    /// Pointwise product of symbols; applying the result equals applying the
    /// two factors in sequence.
    pub fn compose(&self, other: &FourierMultiplier) -> Result<FourierMultiplier> {
        self.grid.check_same(&other.grid)?;
        let symbol = self
            .symbol
            .iter()
            .zip(&other.symbol)
            .map(|(a, b)| a * b)
            .collect();
        Ok(FourierMultiplier {
            grid: self.grid,
            symbol,
        })
    }
}

/// Fractional Laplacian `(-Delta)^{beta/2}` as the multiplier `|xi|^beta`,
/// `beta` in `(0, 2]`. The mean of the field is annihilated.
pub fn frac_laplacian_multiplier(grid: Grid, beta: f64) -> Result<FourierMultiplier> {
    check_beta(beta)?;
    Ok(FourierMultiplier::from_radial(
        grid,
        |xi| xi.powf(beta),
        ZeroMode::Zero,
    ))
}

pub fn frac_laplacian_apply(f: &Field, beta: f64) -> Result<Field> {
    frac_laplacian_multiplier(f.grid(), beta)?.apply(f)
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::parameter(
            "beta",
            format!("diffusion order must lie in (0, 2], got {beta}"),
        ));
    }
    Ok(())
}

/// Pointwise defect of the nonlocal product rule
/// `(-Delta)^{beta/2}(phi^ell) <= ell phi^{ell-1} (-Delta)^{beta/2} phi`
/// for `phi` with values in `[0, 1]`:
///
/// `residual = ell phi^{ell-1} L phi - L(phi^ell)`.
///
/// The inequality says the residual is nonnegative; callers assert its
/// minimum stays above `-tol * ||L phi||_inf`. For `beta = 2` the residual
/// equals `ell (ell-1) phi^{ell-2} |grad phi|^2` classically.
pub fn ju_residual(phi: &Field, ell: f64, beta: f64) -> Result<Field> {
    check_beta(beta)?;
    if ell <= 1.0 {
        return Err(Error::parameter(
            "ell",
            format!("cutoff power must exceed 1, got {ell}"),
        ));
    }
    let slack = 1e-9;
    if phi.min_value() < -slack || phi.sup_abs() > 1.0 + slack {
        return Err(Error::parameter(
            "phi",
            format!(
                "cutoff must take values in [0, 1]; range is [{:.3e}, {:.3e}]",
                phi.min_value(),
                phi.values().iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
            ),
        ));
    }
    let clamped = phi.map(|v| v.clamp(0.0, 1.0));
    let lap = frac_laplacian_apply(&clamped, beta)?;
    let phi_ell = clamped.map(|v| v.powf(ell));
    let lap_ell = frac_laplacian_apply(&phi_ell, beta)?;
    let lhs = clamped.zip_map(&lap, |p, l| ell * p.powf(ell - 1.0) * l)?;
    lhs.zip_map(&lap_ell, |a, b| a - b)
}
