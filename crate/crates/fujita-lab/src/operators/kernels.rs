//! Radial convolution kernels `K(|x|)` for the generalized source term
//! `K * |u|^p`, together with the spectral circular convolution they share
//! with the sampled Riesz kernel.
//!
//! Profiles are positive and must be non-increasing beyond a stated tail
//! radius; that monotone tail is what the blow-up criteria quantify over.

use std::path::Path;

use super::riesz::riesz_normalization;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::quad::adaptive_simpson;

/// Spectral circular convolution `h^n sum_j K[i-j] f_j` with the kernel given
/// as a field sampled at node positions. Under the crate's transform
/// normalization this is `backward(L^n forward(K) .* forward(f))`.
pub fn circular_convolve(kernel: &Field, f: &Field) -> Result<Field> {
    kernel.grid().check_same(&f.grid())?;
    let grid = f.grid();
    let k_hat = kernel.forward()?;
    let mut f_hat = f.forward()?;
    let vol = grid.box_length().powi(grid.dim() as i32);
    for (c, k) in f_hat.coeffs_mut().iter_mut().zip(k_hat.coeffs()) {
        *c *= k * vol;
    }
    f_hat.backward()
}

/// Tabulated radial profile interpolated linearly in log-log coordinates.
/// Outside the tabulated range the end slopes are continued, so a tabulated
/// power law extends exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    log_r: Vec<f64>,
    log_k: Vec<f64>,
}

impl KernelTable {
    pub fn new(radii: &[f64], values: &[f64]) -> Result<Self> {
        if radii.len() != values.len() || radii.len() < 2 {
            return Err(Error::KernelTable {
                message: format!(
                    "need at least two (radius, value) rows with equal lengths, got {} and {}",
                    radii.len(),
                    values.len()
                ),
            });
        }
        let mut log_r = Vec::with_capacity(radii.len());
        let mut log_k = Vec::with_capacity(values.len());
        for (i, (&r, &k)) in radii.iter().zip(values).enumerate() {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::KernelTable {
                    message: format!("row {}: radius must be positive and finite, got {r}", i + 1),
                });
            }
            if !(k > 0.0 && k.is_finite()) {
                return Err(Error::KernelTable {
                    message: format!("row {}: value must be positive and finite, got {k}", i + 1),
                });
            }
            if let Some(&prev) = log_r.last() {
                if r.ln() <= prev {
                    return Err(Error::KernelTable {
                        message: format!("row {}: radii must be strictly increasing", i + 1),
                    });
                }
            }
            log_r.push(r.ln());
            log_k.push(k.ln());
        }
        Ok(KernelTable { log_r, log_k })
    }

    /// Parse a two-column whitespace-separated text table; `#` starts a
    /// comment, blank lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut radii = Vec::new();
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split_whitespace();
            let parse = |tok: Option<&str>, what: &str| -> Result<f64> {
                tok.ok_or_else(|| Error::KernelTable {
                    message: format!("line {}: missing {what} column", lineno + 1),
                })?
                .parse::<f64>()
                .map_err(|_| Error::KernelTable {
                    message: format!("line {}: {what} is not a number", lineno + 1),
                })
            };
            radii.push(parse(cols.next(), "radius")?);
            values.push(parse(cols.next(), "value")?);
            if cols.next().is_some() {
                return Err(Error::KernelTable {
                    message: format!("line {}: expected exactly two columns", lineno + 1),
                });
            }
        }
        KernelTable::new(&radii, &values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        KernelTable::parse(&text)
    }

    pub fn eval(&self, r: f64) -> f64 {
        let lr = r.ln();
        let n = self.log_r.len();
        // segment index, continuing the end slopes beyond the table
        let seg = match self.log_r.binary_search_by(|v| v.partial_cmp(&lr).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let t = (lr - self.log_r[seg]) / (self.log_r[seg + 1] - self.log_r[seg]);
        (self.log_k[seg] + t * (self.log_k[seg + 1] - self.log_k[seg])).exp()
    }
}

/// Built-in or tabulated radial profiles.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelProfile {
    /// `A_alpha r^{alpha - n}`: the Riesz kernel itself.
    Riesz { alpha: f64 },
    /// `A_alpha r^{alpha - n} exp(-r / cutoff)`: Riesz with an exponential
    /// cutoff; same local singularity, integrable tail.
    RieszWithCutoff { alpha: f64, cutoff: f64 },
    /// Spatially flat kernel `K(r) = level`.
    Constant { level: f64 },
    Table(KernelTable),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvolutionKernel {
    dim: usize,
    profile: KernelProfile,
    monotone_tail_radius: f64,
}

impl ConvolutionKernel {
    pub fn new(dim: usize, profile: KernelProfile, monotone_tail_radius: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::parameter("dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(monotone_tail_radius > 0.0 && monotone_tail_radius.is_finite()) {
            return Err(Error::parameter(
                "monotone_tail_radius",
                format!("must be positive, got {monotone_tail_radius}"),
            ));
        }
        let check_alpha = |alpha: f64| -> Result<()> {
            if !(alpha > 0.0 && alpha < dim as f64) {
                return Err(Error::parameter(
                    "alpha",
                    format!("must lie in (0, {dim}), got {alpha}"),
                ));
            }
            Ok(())
        };
        match &profile {
            KernelProfile::Riesz { alpha } => check_alpha(*alpha)?,
            KernelProfile::RieszWithCutoff { alpha, cutoff } => {
                check_alpha(*alpha)?;
                if !(*cutoff > 0.0 && cutoff.is_finite()) {
                    return Err(Error::parameter(
                        "cutoff",
                        format!("must be positive and finite, got {cutoff}"),
                    ));
                }
            }
            KernelProfile::Constant { level } => {
                if !(*level > 0.0) {
                    return Err(Error::parameter(
                        "level",
                        format!("must be positive, got {level}"),
                    ));
                }
            }
            KernelProfile::Table(_) => {}
        }
        let kernel = ConvolutionKernel {
            dim,
            profile,
            monotone_tail_radius,
        };
        kernel.check_monotone_tail()?;
        Ok(kernel)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    pub fn monotone_tail_radius(&self) -> f64 {
        self.monotone_tail_radius
    }

    pub fn eval(&self, r: f64) -> f64 {
        let n = self.dim as f64;
        match &self.profile {
            KernelProfile::Riesz { alpha } => {
                riesz_normalization(self.dim, *alpha) * r.powf(alpha - n)
            }
            KernelProfile::RieszWithCutoff { alpha, cutoff } => {
                riesz_normalization(self.dim, *alpha) * r.powf(alpha - n) * (-r / cutoff).exp()
            }
            KernelProfile::Constant { level } => *level,
            KernelProfile::Table(t) => t.eval(r),
        }
    }

    /// Verify `K` is non-increasing on a geometric sample of the tail
    /// `[R0, 1e4 R0]`, the range the limit-condition classifier relies on.
    fn check_monotone_tail(&self) -> Result<()> {
        let r0 = self.monotone_tail_radius;
        let samples = 257;
        let ratio = 1e4f64.powf(1.0 / (samples - 1) as f64);
        let mut r = r0;
        let mut prev = self.eval(r);
        for _ in 1..samples {
            let next_r = r * ratio;
            let next = self.eval(next_r);
            if next > prev * (1.0 + 1e-12) {
                return Err(Error::NonMonotoneKernel {
                    radius: r,
                    larger: next_r,
                });
            }
            r = next_r;
            prev = next;
        }
        Ok(())
    }

    /// Mean of `K(|x|)` over the ball whose volume is one grid cell; replaces
    /// the (possibly singular) origin sample.
    fn origin_cell_average(&self, grid: Grid) -> Result<f64> {
        let h = grid.spacing();
        let n = self.dim as f64;
        match &self.profile {
            KernelProfile::Riesz { alpha } => {
                let r_cell = match self.dim {
                    1 => h / 2.0,
                    _ => h / std::f64::consts::PI.sqrt(),
                };
                Ok(riesz_normalization(self.dim, *alpha) * (n / alpha) * r_cell.powf(alpha - n))
            }
            KernelProfile::Constant { level } => Ok(*level),
            _ => {
                let (r_cell, surface) = match self.dim {
                    1 => (h / 2.0, 2.0),
                    _ => (h / std::f64::consts::PI.sqrt(), 2.0 * std::f64::consts::PI),
                };
                // split off [0, delta) and integrate it as the local power law
                let delta = r_cell * 1e-4;
                let k_d = self.eval(delta);
                let k_d2 = self.eval(delta / 2.0);
                let local_power = (k_d / k_d2).ln() / 2f64.ln();
                if local_power + n <= 0.0 {
                    return Err(Error::parameter(
                        "profile",
                        format!(
                            "kernel behaves like r^{local_power:.3} near the origin and is not integrable in {n} dimensions"
                        ),
                    ));
                }
                let head = k_d * delta.powf(n) / (local_power + n);
                let body = adaptive_simpson(
                    &|r: f64| self.eval(r) * r.powf(n - 1.0),
                    delta,
                    r_cell,
                    1e-12 * k_d * r_cell.powf(n).max(1e-300),
                );
                Ok(surface * (head + body) / h.powf(n))
            }
        }
    }

    /// Cell-regularized kernel samples on the grid.
    pub fn sampled_field(&self, grid: Grid) -> Result<Field> {
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
        let mut field = Field::from_fn(grid, |[x, y]| {
            let r = (x * x + y * y).sqrt();
            if r > 0.0 {
                self.eval(r)
            } else {
                0.0
            }
        });
        let npa = grid.points_per_axis();
        let origin_flat = match self.dim {
            1 => npa / 2,
            _ => (npa / 2) * npa + npa / 2,
        };
        field.values_mut()[origin_flat] = self.origin_cell_average(grid)?;
        Ok(field)
    }

    pub fn convolve(&self, f: &Field) -> Result<Field> {
        let kernel = self.sampled_field(f.grid())?;
        circular_convolve(&kernel, f)
    }
}
