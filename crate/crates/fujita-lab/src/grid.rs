//! Uniform periodic grids on the centered box `[-L/2, L/2)^n`, `n = 1, 2`,
//! with discrete Fourier transforms normalized so that `coeff(0)` is the mean
//! of the field.
//!
//! Conventions: nodes sit at `x_j = -L/2 + j h` with `h = L/N`; the spectral
//! coefficient at wavenumber `xi_k = 2 pi m_k / L` (centered integer index
//! `m_k`) is `c_k = N^{-n} sum_j f(x_j) exp(-i xi_k . x_j)`. Under this
//! normalization `backward(forward(f)) = f`, a pure mode `cos(2 pi x / L)`
//! has coefficients `1/2` at `m = +-1`, and Parseval reads
//! `h^n sum |f|^2 = L^n sum |c|^2`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative imaginary residue tolerated when casting an inverse transform back
/// to a real field; anything larger means the spectrum was not conjugate
/// symmetric.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Uniform periodic grid. Cheap to copy; all fields carry one and operations
/// refuse to mix grids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    box_length: f64,
    points_per_axis: usize,
}

impl Grid {
    pub fn new(dim: usize, box_length: f64, points_per_axis: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::parameter("dim", format!("must be 1 or 2, got {dim}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::parameter(
                "box_length",
                format!("must be positive and finite, got {box_length}"),
            ));
        }
        if points_per_axis < 8 || !points_per_axis.is_power_of_two() {
            return Err(Error::parameter(
                "points_per_axis",
                format!("must be a power of two >= 8, got {points_per_axis}"),
            ));
        }
        Ok(Grid {
            dim,
            box_length,
            points_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    /// Total number of nodes, `N^dim`.
    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Node spacing `h = L/N`.
    pub fn spacing(&self) -> f64 {
        self.box_length / self.points_per_axis as f64
    }

    /// Cell volume `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Decompose a flat row-major index into per-axis indices (second entry 0
    /// in one dimension).
    #[inline]
    pub fn axis_indices(&self, flat: usize) -> [usize; 2] {
        match self.dim {
            1 => [flat, 0],
            _ => [flat / self.points_per_axis, flat % self.points_per_axis],
        }
    }

    /// Physical node coordinates (second entry 0 in one dimension).
    #[inline]
    pub fn position(&self, flat: usize) -> [f64; 2] {
        let h = self.spacing();
        let half = self.box_length / 2.0;
        let [i, j] = self.axis_indices(flat);
        match self.dim {
            1 => [-half + i as f64 * h, 0.0],
            _ => [-half + i as f64 * h, -half + j as f64 * h],
        }
    }

    /// Euclidean distance of a node from the origin.
    #[inline]
    pub fn radius(&self, flat: usize) -> f64 {
        let [x, y] = self.position(flat);
        (x * x + y * y).sqrt()
    }

    /// Centered integer index on one axis: `j` for `j <= N/2`, else `j - N`.
    #[inline]
    pub fn centered_index(&self, axis_index: usize) -> i64 {
        let n = self.points_per_axis as i64;
        let j = axis_index as i64;
        if j <= n / 2 {
            j
        } else {
            j - n
        }
    }

    /// Wavenumber vector `2 pi m / L` at a flat index.
    #[inline]
    pub fn wavenumber(&self, flat: usize) -> [f64; 2] {
        let scale = 2.0 * std::f64::consts::PI / self.box_length;
        let [i, j] = self.axis_indices(flat);
        match self.dim {
            1 => [scale * self.centered_index(i) as f64, 0.0],
            _ => [
                scale * self.centered_index(i) as f64,
                scale * self.centered_index(j) as f64,
            ],
        }
    }

    /// `|xi|` at a flat index.
    #[inline]
    pub fn wavenumber_abs(&self, flat: usize) -> f64 {
        let [a, b] = self.wavenumber(flat);
        (a * a + b * b).sqrt()
    }

    pub(crate) fn describe(&self) -> String {
        format!(
            "{}d L={} N={}",
            self.dim, self.box_length, self.points_per_axis
        )
    }

    pub(crate) fn check_same(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                left: self.describe(),
                right: other.describe(),
            })
        }
    }
}

/// Real scalar field sampled on a [`Grid`], row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    grid: Grid,
    values: Vec<f64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::parameter(
                "values",
                format!("expected {} samples, got {}", grid.len(), values.len()),
            ));
        }
        Ok(Field { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Field {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        Field {
            grid,
            values: vec![c; grid.len()],
        }
    }

    /// Sample a closure of the node position.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Field { grid, values }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        self.grid.check_same(&other.grid)?;
        Ok(Field {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Mean value, i.e. the zero spectral coefficient.
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// `h^n sum f_i` (signed); equals `L^n * mean`.
    pub fn mass(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().sum::<f64>()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    /// Rectangle-rule Lebesgue norm; `s` may be `f64::INFINITY`.
    pub fn lp_norm(&self, s: f64) -> Result<f64> {
        if s.is_infinite() && s > 0.0 {
            return Ok(self.sup_abs());
        }
        if !(s.is_finite() && s >= 1.0) {
            return Err(Error::parameter(
                "s",
                format!("Lebesgue exponent must lie in [1, inf], got {s}"),
            ));
        }
        let sum: f64 = self.values.iter().map(|&v| v.abs().powf(s)).sum();
        Ok((self.grid.cell_volume() * sum).powf(1.0 / s))
    }

    fn check_finite(&self) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: i, value: v });
            }
        }
        Ok(())
    }

    /// Forward transform; errors on non-finite input.
    pub fn forward(&self) -> Result<SpectralField> {
        self.check_finite()?;
        let mut buf: Vec<Complex64> = self
            .values
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft_all_axes(self.grid, &mut buf, FftDirection::Forward);
        let inv_n = 1.0 / self.grid.len() as f64;
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= center_phase(self.grid, k) * inv_n;
        }
        Ok(SpectralField {
            grid: self.grid,
            coeffs: buf,
        })
    }
}

/// Spectral coefficients of a real field; `coeffs[0]` is the field mean.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::parameter(
                "coeffs",
                format!("expected {} coefficients, got {}", grid.len(), coeffs.len()),
            ));
        }
        Ok(SpectralField { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        SpectralField {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Multiply each coefficient by a real symbol evaluated per flat index.
    pub fn apply_symbol(&mut self, symbol: impl Fn(usize) -> f64) {
        for (k, c) in self.coeffs.iter_mut().enumerate() {
            *c *= symbol(k);
        }
    }

    /// Zero every mode whose centered index exceeds `fraction * N/2` on any
    /// axis. `fraction = 1` is the identity; the operation is idempotent.
    pub fn dealias(&mut self, fraction: f64) {
        let cutoff = fraction * self.grid.points_per_axis() as f64 / 2.0;
        let grid = self.grid;
        for (k, c) in self.coeffs.iter_mut().enumerate() {
            let [i, j] = grid.axis_indices(k);
            let mi = grid.centered_index(i).abs() as f64;
            let mj = if grid.dim() == 2 {
                grid.centered_index(j).abs() as f64
            } else {
                0.0
            };
            if mi > cutoff || mj > cutoff {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Inverse transform back to a real field; errors if the imaginary residue
    /// shows the coefficients were not conjugate symmetric.
    pub fn backward(&self) -> Result<Field> {
        let mut buf: Vec<Complex64> = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(k, &c)| c * center_phase(self.grid, k))
            .collect();
        fft_all_axes(self.grid, &mut buf, FftDirection::Inverse);
        let mut max_re = 0.0f64;
        let mut max_im = 0.0f64;
        for c in &buf {
            max_re = max_re.max(c.re.abs());
            max_im = max_im.max(c.im.abs());
        }
        let scale = max_re.max(1e-300);
        if max_im > SYMMETRY_TOLERANCE * scale {
            return Err(Error::SymmetryViolation {
                residual: max_im / scale,
                tolerance: SYMMETRY_TOLERANCE,
            });
        }
        Ok(Field {
            grid: self.grid,
            values: buf.into_iter().map(|c| c.re).collect(),
        })
    }
}

/// `(-1)^(sum of axis indices)`: accounts for the box being centered at the
/// origin rather than starting at it.
#[inline]
fn center_phase(grid: Grid, flat: usize) -> f64 {
    let [i, j] = grid.axis_indices(flat);
    if (i + j) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, PartialEq)]
enum FftDirection {
    Forward,
    Inverse,
}

struct PlanPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plan_cache() -> &'static Mutex<HashMap<usize, Arc<PlanPair>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<PlanPair>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn plans_for(n: usize) -> Arc<PlanPair> {
    let mut cache = plan_cache().lock().expect("fft plan cache poisoned");
    cache
        .entry(n)
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(PlanPair {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

/// Unnormalized FFT along every axis of the row-major buffer.
fn fft_all_axes(grid: Grid, buf: &mut [Complex64], direction: FftDirection) {
    let n = grid.points_per_axis();
    let plans = plans_for(n);
    let fft = match direction {
        FftDirection::Forward => &plans.forward,
        FftDirection::Inverse => &plans.inverse,
    };
    match grid.dim() {
        1 => fft.process(buf),
        _ => {
            for row in buf.chunks_exact_mut(n) {
                fft.process(row);
            }
            let mut column = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..n {
                for i in 0..n {
                    column[i] = buf[i * n + j];
                }
                fft.process(&mut column);
                for i in 0..n {
                    buf[i * n + j] = column[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;
    use approx::assert_abs_diff_eq;

    fn grid1(n: usize) -> Grid {
        Grid::new(1, 10.0, n).unwrap()
    }

    #[test]
    fn forward_matches_direct_dft_1d() {
        let g = grid1(16);
        let f = Field::from_fn(g, |[x, _]| (0.7 * x).sin() + 0.3 * (1.9 * x).cos() + 0.1);
        let fast = f.forward().unwrap();
        let slow = oracle::direct_dft(&f);
        for k in 0..g.len() {
            assert_abs_diff_eq!(fast.coeffs()[k].re, slow[k].re, epsilon = 1e-12);
            assert_abs_diff_eq!(fast.coeffs()[k].im, slow[k].im, epsilon = 1e-12);
        }
    }

    #[test]
    fn forward_matches_direct_dft_2d() {
        let g = Grid::new(2, 7.0, 16).unwrap();
        let f = Field::from_fn(g, |[x, y]| (0.9 * x - 0.4 * y).sin() + 0.2 * (x * y * 0.1).cos());
        let fast = f.forward().unwrap();
        let slow = oracle::direct_dft(&f);
        for k in 0..g.len() {
            assert_abs_diff_eq!(fast.coeffs()[k].re, slow[k].re, epsilon = 1e-12);
            assert_abs_diff_eq!(fast.coeffs()[k].im, slow[k].im, epsilon = 1e-12);
        }
    }

    #[test]
    fn roundtrip_is_identity() {
        let g = grid1(64);
        let f = Field::from_fn(g, |[x, _]| (-x * x / 3.0).exp() + 0.05 * (2.0 * x).sin());
        let back = f.forward().unwrap().backward().unwrap();
        for (a, b) in f.values().iter().zip(back.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_mode_is_mean_and_cosine_splits() {
        let g = grid1(32);
        let l = g.box_length();
        let f = Field::from_fn(g, |[x, _]| {
            0.25 + (2.0 * std::f64::consts::PI * x / l).cos()
        });
        let c = f.forward().unwrap();
        assert_abs_diff_eq!(c.coeffs()[0].re, 0.25, epsilon = 1e-13);
        assert_abs_diff_eq!(c.coeffs()[0].im, 0.0, epsilon = 1e-13);
        // modes m = +1 (index 1) and m = -1 (index N-1) carry 1/2 each
        assert_abs_diff_eq!(c.coeffs()[1].re, 0.5, epsilon = 1e-13);
        assert_abs_diff_eq!(c.coeffs()[g.len() - 1].re, 0.5, epsilon = 1e-13);
        let others: f64 = (2..g.len() - 1).map(|k| c.coeffs()[k].norm()).sum();
        assert!(others < 1e-12);
    }

    #[test]
    fn l2_norm_of_cosine_is_sqrt_half_box() {
        let g = grid1(128);
        let l = g.box_length();
        let f = Field::from_fn(g, |[x, _]| (2.0 * std::f64::consts::PI * x / l).cos());
        // discrete sum of cos^2 over a full period is exactly N/2
        assert_abs_diff_eq!(f.lp_norm(2.0).unwrap(), (l / 2.0).sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(f.lp_norm(f64::INFINITY).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn parseval_identity() {
        let g = grid1(64);
        let f = Field::from_fn(g, |[x, _]| (-x.abs()).exp() * (3.0 * x).cos() + 0.4);
        let c = f.forward().unwrap();
        let phys: f64 = g.cell_volume() * f.values().iter().map(|v| v * v).sum::<f64>();
        let spec: f64 = g.box_length().powi(g.dim() as i32)
            * c.coeffs().iter().map(|z| z.norm_sqr()).sum::<f64>();
        assert_abs_diff_eq!(phys, spec, epsilon = 1e-10 * phys.abs());
    }

    #[test]
    fn dealias_is_idempotent_and_full_fraction_is_identity() {
        let g = grid1(32);
        let f = Field::from_fn(g, |[x, _]| (5.1 * x).sin() + (0.3 * x).cos());
        let mut c = f.forward().unwrap();
        let mut full = c.clone();
        full.dealias(1.0);
        assert_eq!(c.coeffs(), full.coeffs());

        c.dealias(2.0 / 3.0);
        let once = c.clone();
        c.dealias(2.0 / 3.0);
        assert_eq!(once.coeffs(), c.coeffs());
        // top mode must be gone
        let nyquist = g.len() / 2;
        assert_eq!(c.coeffs()[nyquist].norm(), 0.0);
    }

    #[test]
    fn non_finite_input_is_rejected_with_index() {
        let g = grid1(16);
        let mut f = Field::zeros(g);
        f.values_mut()[5] = f64::NAN;
        match f.forward() {
            Err(Error::NonFinite { index, .. }) => assert_eq!(index, 5),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_spectrum_is_rejected() {
        let g = grid1(16);
        let mut c = SpectralField::zeros(g);
        c.coeffs_mut()[1] = Complex64::new(0.0, 1.0); // no conjugate partner
        match c.backward() {
            Err(Error::SymmetryViolation { .. }) => {}
            other => panic!("expected SymmetryViolation, got {other:?}"),
        }
    }

    #[test]
    fn mass_and_mean_agree() {
        let g = Grid::new(2, 4.0, 16).unwrap();
        let f = Field::from_fn(g, |[x, y]| x + 0.5 * y + 2.0);
        let l = g.box_length();
        assert_abs_diff_eq!(f.mass(), f.mean() * l * l, epsilon = 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(Grid::new(3, 1.0, 16).is_err());
        assert!(Grid::new(1, -1.0, 16).is_err());
        assert!(Grid::new(1, 1.0, 12).is_err());
        assert!(Grid::new(1, 1.0, 4).is_err());
    }
}
