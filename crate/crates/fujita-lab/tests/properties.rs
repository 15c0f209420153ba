//! Randomized invariants. Everything here must hold for any admissible
//! input, not just the tuned fixtures: transform identities, operator
//! algebra, semigroup structure, the exponent ladder, rescaling, and config
//! serialization.

use fujita_lab::capacity::{build_test_function, cutoff_profile};
use fujita_lab::config::ExperimentConfig;
use fujita_lab::dynamics::scaling_transform;
use fujita_lab::exponents::CriticalExponents;
use fujita_lab::operators::{frac_laplacian_apply, RieszKernel};
use fujita_lab::propagator::Propagator;
use fujita_lab::{EquationParams, Field, Grid, Nonlinearity};
use proptest::prelude::*;

fn arb_grid() -> impl Strategy<Value = Grid> {
    (prop_oneof![Just(8usize), Just(16), Just(32), Just(64)], 5.0..100.0f64)
        .prop_map(|(n, l)| Grid::new(1, l, n).unwrap())
}

fn arb_field() -> impl Strategy<Value = Field> {
    arb_grid().prop_flat_map(|grid| {
        proptest::collection::vec(-10.0..10.0f64, grid.len())
            .prop_map(move |values| Field::new(grid, values).unwrap())
    })
}

/// Two random fields on one shared grid.
fn arb_field_pair() -> impl Strategy<Value = (Field, Field)> {
    arb_grid().prop_flat_map(|grid| {
        (
            proptest::collection::vec(-10.0..10.0f64, grid.len()),
            proptest::collection::vec(-10.0..10.0f64, grid.len()),
        )
            .prop_map(move |(a, b)| {
                (
                    Field::new(grid, a).unwrap(),
                    Field::new(grid, b).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn transform_round_trip_is_the_identity(f in arb_field()) {
        let back = f.forward().unwrap().backward().unwrap();
        let diff = f.zip_map(&back, |a, b| a - b).unwrap().sup_abs();
        prop_assert!(diff <= 1.0e-12 * (1.0 + f.sup_abs()));
    }

    #[test]
    fn transform_preserves_the_quadratic_form((f, g) in arb_field_pair()) {
        let phys = |u: &Field| u.values().iter().map(|v| v * v).sum::<f64>();
        let spec = |u: &Field| {
            u.forward()
                .unwrap()
                .coeffs()
                .iter()
                .map(|c| c.norm_sqr())
                .sum::<f64>()
        };
        let pf = phys(&f);
        let pg = phys(&g);
        prop_assume!(pf > 1.0e-6 && pg > 1.0e-6);
        // one grid-wide constant relates the two quadratic forms
        let rf = spec(&f) / pf;
        let rg = spec(&g) / pg;
        prop_assert!((rf - rg).abs() <= 1.0e-10 * rf.max(rg));
    }

    #[test]
    fn fractional_laplacian_is_linear(
        (f, g) in arb_field_pair(),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        beta in 0.2..2.0f64,
    ) {
        let combined = f.zip_map(&g, |x, y| a * x + b * y).unwrap();
        let lhs = frac_laplacian_apply(&combined, beta).unwrap();
        let of = frac_laplacian_apply(&f, beta).unwrap();
        let og = frac_laplacian_apply(&g, beta).unwrap();
        let rhs = of.zip_map(&og, |x, y| a * x + b * y).unwrap();
        let diff = lhs.zip_map(&rhs, |x, y| x - y).unwrap().sup_abs();
        let scale = 1.0 + lhs.sup_abs().max(rhs.sup_abs());
        prop_assert!(diff <= 1.0e-9 * scale);
    }

    #[test]
    fn constants_are_annihilated(
        grid in arb_grid(),
        c in -5.0..5.0f64,
        beta in 0.2..2.0f64,
    ) {
        let out = frac_laplacian_apply(&Field::constant(grid, c), beta).unwrap();
        prop_assert!(out.sup_abs() <= 1.0e-12 * (1.0 + c.abs()));
    }

    #[test]
    fn semigroup_composes_contracts_and_conserves_mass(
        f in arb_field(),
        beta in 0.2..2.0f64,
        t in 0.01..1.0f64,
        s in 0.01..1.0f64,
    ) {
        let prop = Propagator::new(f.grid(), beta).unwrap();
        let whole = prop.semigroup_apply(&f, t + s).unwrap();
        let stepped = prop
            .semigroup_apply(&prop.semigroup_apply(&f, t).unwrap(), s)
            .unwrap();
        let diff = whole.zip_map(&stepped, |x, y| x - y).unwrap().sup_abs();
        prop_assert!(diff <= 1.0e-12 * (1.0 + f.sup_abs()));
        prop_assert!(whole.sup_abs() <= f.sup_abs() * (1.0 + 1.0e-12));
        let drift = (whole.mass() - f.mass()).abs();
        prop_assert!(drift <= 1.0e-12 * (1.0 + f.mass().abs()));
    }

    #[test]
    fn the_exponent_ladder_is_ordered(
        dim in 1usize..3,
        beta in 0.05..2.0f64,
        frac in 0.05..0.95f64,
        p in 1.01..20.0f64,
    ) {
        let n = dim as f64;
        let alpha = frac * n;
        let exps = CriticalExponents::new(dim, beta, alpha).unwrap();
        let p_local = exps.local_existence();
        let p_sc = exps.scaling();
        let p_fuj = exps.fujita();
        prop_assert!(1.0 < p_local && p_local < p_fuj);
        prop_assert!(1.0 < p_sc && p_sc < p_fuj);

        // the critical Lebesgue exponent ties the ladder together: it is 1
        // exactly at the scaling exponent and the local-existence exponent
        // exactly at the blow-up threshold
        prop_assert!((exps.critical_lebesgue(p_sc).unwrap() - 1.0).abs() <= 1.0e-9);
        let at_fuj = exps.critical_lebesgue(p_fuj).unwrap();
        prop_assert!((at_fuj - p_local).abs() <= 1.0e-9 * p_local);

        prop_assume!((p - p_fuj).abs() > 1.0e-6 * p_fuj);
        let interval = exps.admissible_weight_interval(p);
        prop_assert_eq!(interval.is_ok(), p > p_fuj);
        if let Ok((lo, hi)) = interval {
            prop_assert!(lo < hi);
            prop_assert!(lo >= p);
            prop_assert!(lo + 1.0e-12 >= exps.critical_lebesgue(p).unwrap());
        }
    }

    #[test]
    fn rescaling_preserves_the_critical_quasinorm(
        f in arb_field(),
        lambda_pow in 1u32..3,
        p in 1.5..9.0f64,
    ) {
        let lambda = 2.0f64.powi(lambda_pow as i32);
        let kernel = RieszKernel::new(1, 0.5).unwrap();
        let params = EquationParams::new(1, 2.0, p, Nonlinearity::Riesz(kernel)).unwrap();
        let g = scaling_transform(&f, lambda, &params).unwrap();

        let q_sc = (p - 1.0) / 2.5;
        let quasi = |u: &Field| {
            let h = u.grid().spacing();
            let sum: f64 = u.values().iter().map(|v| v.abs().powf(q_sc)).sum();
            (h * sum).powf(1.0 / q_sc)
        };
        let qf = quasi(&f);
        prop_assume!(qf > 1.0e-9);
        prop_assert!((quasi(&g) - qf).abs() <= 1.0e-12 * qf);

        // amplitudes scale by exactly lambda^{(beta+alpha)/(p-1)}
        let gain = lambda.powf(2.5 / (p - 1.0));
        prop_assert!((g.sup_abs() - gain * f.sup_abs()).abs() <= 1.0e-13 * gain * f.sup_abs());
    }

    #[test]
    fn dealias_mask_is_idempotent(f in arb_field(), fraction in 0.1..1.0f64) {
        let mut once = f.forward().unwrap();
        once.dealias(fraction);
        let mut twice = once.clone();
        twice.dealias(fraction);
        for (a, b) in once.coeffs().iter().zip(twice.coeffs()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn window_profile_is_a_plateau_cutoff(
        r in 1.0..4.0f64,
        p in 1.5..6.0f64,
        beta in 0.2..2.0f64,
    ) {
        let grid = Grid::new(1, 32.0, 128).unwrap();
        let tf = build_test_function(grid, beta, p, r, 1.0).unwrap();
        let phi = tf.phi_r();
        // plateau out to r/2, support out to r
        for i in 0..grid.len() {
            let v = phi.values()[i];
            prop_assert!((-1.0e-12..=1.0 + 1.0e-12).contains(&v));
            let radius = grid.radius(i);
            if radius <= 0.49 * r {
                prop_assert!((v - 1.0).abs() <= 1.0e-12);
            }
            if radius >= r {
                prop_assert!(v.abs() <= 1.0e-12);
            }
        }
        prop_assert!(tf.ell() > 2.0);
    }

    #[test]
    fn cutoff_profile_is_monotone_and_clamped(a in 0.0..2.0f64, b in 0.0..2.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(cutoff_profile(lo) >= cutoff_profile(hi));
        prop_assert!((0.0..=1.0).contains(&cutoff_profile(a)));
    }

    #[test]
    fn config_toml_round_trips(
        seed in any::<u64>(),
        points in prop_oneof![Just(8usize), Just(16), Just(32)],
        box_length in 5.0..200.0f64,
        t_end in 0.1..50.0f64,
        p in 1.01..12.0f64,
    ) {
        let text = format!(
            "version = 1\n\
             seed = {seed}\n\
             [equation]\n\
             dim = 1\n\
             beta = 2.0\n\
             p = {p}\n\
             source = \"riesz\"\n\
             alpha = 0.5\n\
             [grid]\n\
             box_length = {box_length}\n\
             points_per_axis = {points}\n\
             [initial]\n\
             family = \"gaussian\"\n\
             amplitude = 0.5\n\
             width = 1.0\n\
             [solver]\n\
             t_end = {t_end}\n"
        );
        let config = ExperimentConfig::from_toml_str(&text).unwrap();
        let round = ExperimentConfig::from_toml_str(&config.canonical_toml().unwrap()).unwrap();
        prop_assert_eq!(config, round);
    }
}
