//! Critical exponents for `u_t + (-Delta)^{beta/2} u = I_alpha(|u|^p)`.
//!
//! The key structural fact the laboratory probes: the Fujita-type threshold
//! `p_fuj = 1 + (beta + alpha)/(n - alpha)` sits strictly above the scaling
//! exponent `p_sc = 1 + (beta + alpha)/n` whenever `alpha > 0`, so the
//! blow-up/global dichotomy is not decided by scale invariance alone.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::check_beta;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalExponents {
    dim: usize,
    beta: f64,
    alpha: f64,
}

impl CriticalExponents {
    pub fn new(dim: usize, beta: f64, alpha: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::parameter("dim", format!("must be 1 or 2, got {dim}")));
        }
        check_beta(beta)?;
        if !(alpha > 0.0 && alpha < dim as f64) {
            return Err(Error::parameter(
                "alpha",
                format!("must lie in (0, {dim}), got {alpha}"),
            ));
        }
        Ok(CriticalExponents { dim, beta, alpha })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Blow-up threshold `p_fuj = 1 + (beta + alpha)/(n - alpha)`; equals
    /// `(n + beta)/(n - alpha)`. Every positive-mass solution blows up for
    /// `1 < p <= p_fuj`, small data decay globally above it.
    pub fn fujita(&self) -> f64 {
        let n = self.dim as f64;
        1.0 + (self.beta + self.alpha) / (n - self.alpha)
    }

    /// Exponent singled out by the scaling symmetry: `1 + (beta + alpha)/n`.
    pub fn scaling(&self) -> f64 {
        1.0 + (self.beta + self.alpha) / self.dim as f64
    }

    /// `n/(n - alpha)`: mild local solvability needs `p` above this (the
    /// nonlinearity must land in a Lebesgue space the potential maps back).
    pub fn local_existence(&self) -> f64 {
        let n = self.dim as f64;
        n / (n - self.alpha)
    }

    /// Scale-invariant Lebesgue exponent `q_sc = n (p - 1)/(beta + alpha)`.
    /// Satisfies `q_sc(p_fuj) = local_existence()`.
    pub fn critical_lebesgue(&self, p: f64) -> Result<f64> {
        check_p(p)?;
        Ok(self.dim as f64 * (p - 1.0) / (self.beta + self.alpha))
    }

    /// Fujita threshold for data with spatial tail `|x|^{-gamma}`:
    /// `1 + (beta + alpha)/gamma`. Recovers `fujita()` at `gamma = n - alpha`
    /// and `scaling()` at `gamma = n`.
    pub fn fujita_for_tail(&self, gamma: f64) -> Result<f64> {
        let n = self.dim as f64;
        if !(gamma > 0.0 && gamma <= n) {
            return Err(Error::parameter(
                "gamma",
                format!("tail decay must lie in (0, {n}], got {gamma}"),
            ));
        }
        Ok(1.0 + (self.beta + self.alpha) / gamma)
    }

    /// Interval of Lebesgue exponents `q` admissible for the time-weighted
    /// norm `t^{beta_star} ||u(t)||_q` in the global small-data argument:
    ///
    /// `(beta+alpha)/(beta (p-1)) - 1/p < n/(beta q) < (beta+alpha)/(beta (p-1))`
    /// together with `q > p`.
    ///
    /// Empty below the Fujita exponent; errors list the violated constraint.
    pub fn admissible_weight_interval(&self, p: f64) -> Result<(f64, f64)> {
        check_p(p)?;
        let n = self.dim as f64;
        let a = (self.beta + self.alpha) / (self.beta * (p - 1.0));
        let lower = (n / (self.beta * a)).max(p);
        let upper = n / (self.beta * (a - 1.0 / p));
        if upper <= lower {
            return Err(Error::parameter(
                "p",
                format!(
                    "no admissible weight exponent: interval ({lower:.6}, {upper:.6}) is empty \
                     (p = {p} is at or below the Fujita exponent {:.6})",
                    self.fujita()
                ),
            ));
        }
        Ok((lower, upper))
    }

    /// Weight `beta_star = n/(beta q_sc) - n/(beta q)` attached to
    /// `||u(t)||_q`; `p * beta_star < 1` keeps the source time-integrable.
    pub fn weight_exponent(&self, p: f64, q: f64) -> Result<f64> {
        let (lo, hi) = self.admissible_weight_interval(p)?;
        if !(q > lo && q < hi) {
            return Err(Error::parameter(
                "q",
                format!("must lie in the admissible interval ({lo:.6}, {hi:.6}), got {q}"),
            ));
        }
        let n = self.dim as f64;
        let q_sc = self.critical_lebesgue(p)?;
        Ok(n / (self.beta * q_sc) - n / (self.beta * q))
    }
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::parameter(
            "p",
            format!("source exponent must exceed 1, got {p}"),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn frozen_values_for_the_reference_case() {
        let e = CriticalExponents::new(1, 2.0, 0.5).unwrap();
        assert_abs_diff_eq!(e.fujita(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.scaling(), 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(e.local_existence(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn critical_lebesgue_example() {
        let e = CriticalExponents::new(1, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(e.critical_lebesgue(4.0).unwrap(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn fujita_exceeds_scaling_and_identities_hold() {
        for &(dim, beta, alpha) in &[
            (1usize, 2.0, 0.5),
            (1, 1.0, 0.25),
            (1, 0.7, 0.9),
            (2, 2.0, 1.0),
            (2, 1.5, 0.3),
        ] {
            let e = CriticalExponents::new(dim, beta, alpha).unwrap();
            assert!(e.fujita() > e.scaling());
            // q_sc at the Fujita exponent is exactly the local-existence bound
            assert_relative_eq!(
                e.critical_lebesgue(e.fujita()).unwrap(),
                e.local_existence(),
                max_relative = 1e-12
            );
            // (n + beta)/(n - alpha) form agrees
            let n = dim as f64;
            assert_relative_eq!(e.fujita(), (n + beta) / (n - alpha), max_relative = 1e-12);
            // tail threshold interpolates the two exponents
            assert_relative_eq!(
                e.fujita_for_tail(n - alpha).unwrap(),
                e.fujita(),
                max_relative = 1e-12
            );
            assert_relative_eq!(
                e.fujita_for_tail(n).unwrap(),
                e.scaling(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn vanishing_alpha_recovers_the_classical_threshold() {
        // n = 2, beta = 2: the local limit is p_fuj -> 1 + 2/2 = 2
        let e = CriticalExponents::new(2, 2.0, 1e-8).unwrap();
        assert_abs_diff_eq!(e.fujita(), 2.0, epsilon = 1e-6);
    }

    #[test]
    fn weight_interval_reference_case() {
        // n = 1, beta = 2, alpha = 0.5, p = 7: interval is (7, 84/11)
        let e = CriticalExponents::new(1, 2.0, 0.5).unwrap();
        let (lo, hi) = e.admissible_weight_interval(7.0).unwrap();
        assert_abs_diff_eq!(lo, 7.0, epsilon = 1e-10);
        assert_abs_diff_eq!(hi, 84.0 / 11.0, epsilon = 1e-10);

        // q = 7.5: beta* = 2.5/12 - 1/15 and p beta* < 1
        let bs = e.weight_exponent(7.0, 7.5).unwrap();
        assert_abs_diff_eq!(bs, 2.5 / 12.0 - 1.0 / 15.0, epsilon = 1e-12);
        assert!(7.0 * bs < 1.0);
        assert_abs_diff_eq!(7.0 * bs, 0.991_666_666_666_666_6, epsilon = 1e-12);
    }

    #[test]
    fn weight_interval_is_empty_at_or_below_fujita() {
        let e = CriticalExponents::new(1, 2.0, 0.5).unwrap();
        assert!(e.admissible_weight_interval(6.0).is_err());
        assert!(e.admissible_weight_interval(3.0).is_err());
        assert!(e.admissible_weight_interval(6.0001).is_ok());
    }

    #[test]
    fn parameter_validation() {
        assert!(CriticalExponents::new(3, 2.0, 0.5).is_err());
        assert!(CriticalExponents::new(1, 2.5, 0.5).is_err());
        assert!(CriticalExponents::new(1, 2.0, 1.0).is_err());
        let e = CriticalExponents::new(1, 2.0, 0.5).unwrap();
        assert!(e.critical_lebesgue(1.0).is_err());
        assert!(e.fujita_for_tail(0.0).is_err());
        assert!(e.fujita_for_tail(1.5).is_err());
    }
}
