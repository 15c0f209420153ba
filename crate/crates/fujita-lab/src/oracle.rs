//! Slow, independently-coded reference computations.
//!
//! Everything here is deliberately naive (direct sums, closed forms): the fast
//! spectral paths are validated against these in the test and `verify` suites.
//! Nothing in this module calls the code it is used to check.

use num_complex::Complex64;

use crate::grid::{Field, Grid};

/// Direct `O(len^2)` discrete Fourier transform with the library's
/// normalization: `c_k = N^{-n} sum_j f(x_j) exp(-i xi_k . x_j)`.
pub fn direct_dft(f: &Field) -> Vec<Complex64> {
    let grid = f.grid();
    let len = grid.len();
    let inv_n = 1.0 / len as f64;
    (0..len)
        .map(|k| {
            let [kx, ky] = grid.wavenumber(k);
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, &v) in f.values().iter().enumerate() {
                let [x, y] = grid.position(j);
                let phase = -(kx * x + ky * y);
                acc += v * Complex64::new(phase.cos(), phase.sin());
            }
            acc * inv_n
        })
        .collect()
}

/// Direct periodic (circular) convolution `h^n sum_j K[i - j] f_j`, where the
/// kernel field is indexed by position and wrap-around is periodic.
pub fn direct_circular_convolution(kernel: &Field, f: &Field) -> Field {
    let grid = f.grid();
    assert_eq!(kernel.grid(), grid, "kernel and field must share a grid");
    let n = grid.points_per_axis();
    let h_vol = grid.cell_volume();
    // kernel values re-indexed by displacement: displacement d corresponds to
    // the node at position wrap(d*h), which sits at axis index (d + N/2) mod N
    let kernel_at = |di: usize, dj: usize| -> f64 {
        let i = (di + n / 2) % n;
        match grid.dim() {
            1 => kernel.values()[i],
            _ => {
                let j = (dj + n / 2) % n;
                kernel.values()[i * n + j]
            }
        }
    };
    let mut out = vec![0.0; grid.len()];
    match grid.dim() {
        1 => {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    let d = (i + n - j) % n;
                    acc += kernel_at(d, 0) * f.values()[j];
                }
                out[i] = acc * h_vol;
            }
        }
        _ => {
            for ix in 0..n {
                for iy in 0..n {
                    let mut acc = 0.0;
                    for jx in 0..n {
                        let dx = (ix + n - jx) % n;
                        for jy in 0..n {
                            let dy = (iy + n - jy) % n;
                            acc += kernel_at(dx, dy) * f.values()[jx * n + jy];
                        }
                    }
                    out[ix * n + iy] = acc * h_vol;
                }
            }
        }
    }
    Field::new(grid, out).expect("length matches grid")
}

/// Closed-form heat evolution (`beta = 2`) of the Gaussian
/// `u0 = exp(-|x|^2 / (4a))`:
/// `u(t, x) = (a / (a + t))^{n/2} exp(-|x|^2 / (4 (a + t)))`.
pub fn heat_gaussian(grid: Grid, a: f64, t: f64) -> Field {
    let n_half = grid.dim() as f64 / 2.0;
    let amp = (a / (a + t)).powf(n_half);
    Field::from_fn(grid, |[x, y]| {
        amp * (-(x * x + y * y) / (4.0 * (a + t))).exp()
    })
}

/// Blow-up time of the scalar ODE `u' = m u^p`, `u(0) = c > 0`:
/// `T* = 1 / ((p - 1) m c^{p-1})`.
pub fn ode_blowup_time(m: f64, p: f64, c: f64) -> f64 {
    1.0 / ((p - 1.0) * m * c.powf(p - 1.0))
}

/// Exact solution of `u' = m u^p` at time `t < T*`.
pub fn ode_solution(m: f64, p: f64, c: f64, t: f64) -> f64 {
    let q = p - 1.0;
    (c.powf(-q) - q * m * t).powf(-1.0 / q)
}
