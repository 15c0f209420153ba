//! Numerical laboratory for fractional reaction-diffusion equations whose
//! source term is a nonlocal potential of the solution:
//!
//! ```text
//! u_t + (-Delta)^{beta/2} u = I_alpha(|u|^p)      (or K * |u|^p)
//! ```
//!
//! on a periodic box in one or two dimensions, with `beta` in `(0, 2]` and
//! `alpha` in `(0, n)`. The smoothing potential shifts the blow-up/decay
//! threshold away from the classical scaling prediction, and this crate
//! exists to measure that shift:
//!
//! * [`exponents`] computes the competing critical exponents and the
//!   admissible weighted-norm indices;
//! * [`operators`] provides the spectral fractional Laplacian, the Riesz
//!   potential, and general radial convolution kernels;
//! * [`dynamics`] integrates the equation with an exponential propagator
//!   and classifies each run as decaying, blowing up (with a fitted
//!   blow-up time), or inconclusive;
//! * [`capacity`] audits stored trajectories against the test-function
//!   inequality behind the blow-up proofs, fits the predicted window
//!   scalings, and evaluates the kernel limit conditions that decide the
//!   general-kernel dichotomy;
//! * [`experiments`] drives parameter sweeps, capacity audits, and the
//!   self-verification suite behind the command-line tool.
//!
//! Heavy maps run on a rayon pool when the default `parallel` feature is
//! enabled and degrade to sequential loops without it; results are
//! byte-identical either way.

pub mod capacity;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod exponents;
pub mod fitting;
pub mod grid;
pub mod operators;
pub mod oracle;
pub mod par;
pub mod picard;
pub mod propagator;
pub mod quad;
pub mod source;

pub use error::{Error, Result};
pub use exponents::CriticalExponents;
pub use grid::{Field, Grid};
pub use source::{EquationParams, Nonlinearity};
