//! Scratch calibration probe; not part of the library surface.

use std::time::Instant;

use fujita_lab::capacity::{
    capacity_report, critical_points, grid_points, ju_audit, subcritical_points,
    verify_capacity_inequality, CapacityMode,
};
use fujita_lab::dynamics::{evolve, RunResult, SolverConfig};
use fujita_lab::fitting::fit_power_law;
use fujita_lab::operators::{frac_laplacian_apply, pv_on_grid, PvParams, RieszKernel};
use fujita_lab::picard::picard_solve_local;
use fujita_lab::propagator::Propagator;
use fujita_lab::{EquationParams, Field, Grid, Nonlinearity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mollifier(x: f64, r: f64) -> f64 {
    if x.abs() < r {
        (-x * x).exp()
    } else {
        0.0
    }
}

/// Proper integral `(1/pi) int f(y) / (x - y)^2 dy` for `x` outside the
/// support; the far-field form of the half Laplacian, no principal value
/// needed.
fn far_field(x: f64, r: f64) -> f64 {
    let panels = 800;
    let h = 2.0 * r / panels as f64;
    let mut acc = 0.0;
    for i in 0..=panels {
        let y = -r + i as f64 * h;
        let w = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let d = x - y;
        acc += w * mollifier(y, r) / (d * d);
    }
    acc * h / 3.0 / std::f64::consts::PI
}

fn probe_operator() {
    let r = 6.0;
    for (l, n, images) in [(40.0, 256usize, 30i64), (40.0, 256, 0), (64.0, 256, 30)] {
        let grid = Grid::new(1, l, n).unwrap();
        let u = Field::from_fn(grid, |[x, _]| mollifier(x, r));
        let spectral = frac_laplacian_apply(&u, 1.0).unwrap();
        let t0 = Instant::now();
        let pv_params = PvParams {
            epsilon: 5.0e-4,
            panels_per_decade: 400,
            ..PvParams::default()
        };
        let mut pv = pv_on_grid(&|x| mollifier(x, r), 0.5, grid, &pv_params).unwrap();
        for (i, v) in pv.values_mut().iter_mut().enumerate() {
            let [x, _] = grid.position(i);
            for m in 1..=images {
                *v -= far_field(x + m as f64 * l, r) + far_field(x - m as f64 * l, r);
            }
        }
        let wall = t0.elapsed().as_secs_f64();
        let diff = spectral.zip_map(&pv, |a, b| a - b).unwrap();
        let rel = diff.lp_norm(2.0).unwrap() / pv.lp_norm(2.0).unwrap();
        println!("L={l} N={n} images={images}: rel L2 = {rel:.3e}  wall = {wall:.2}s");
    }
}

fn probe_slopes() {
    let cases = [
        (1usize, 1.0f64, 400.0f64, 2048usize, 4.0f64, 16.0f64),
        (1, 2.0, 100.0, 512, 4.0, 16.0),
        (2, 2.0, 100.0, 512, 4.0, 16.0),
    ];
    for (dim, beta, l, n, t0, t1) in cases {
        let grid = Grid::new(dim, l, n).unwrap();
        let u0 = if dim == 1 {
            Field::from_fn(grid, |[x, _]| (-x * x / 0.2).exp())
        } else {
            Field::from_fn(grid, |[x, y]| (-(x * x + y * y) / 0.2).exp())
        };
        let prop = Propagator::new(grid, beta).unwrap();
        let m = 8;
        let mut ts = Vec::new();
        let mut sups = Vec::new();
        let t_start = Instant::now();
        for i in 0..m {
            let t = t0 * (t1 / t0).powf(i as f64 / (m - 1) as f64);
            let ut = prop.semigroup_apply(&u0, t).unwrap();
            ts.push(t);
            sups.push(ut.sup_abs());
        }
        let fit = fit_power_law(&ts, &sups).unwrap();
        let predicted = -(dim as f64) / beta;
        println!(
            "(n,beta)=({dim},{beta}): slope {:.4} predicted {predicted:.4} rel err {:.3}% res {:.2e} wall {:.2}s",
            fit.slope,
            100.0 * (fit.slope - predicted).abs() / predicted.abs(),
            fit.rms_residual,
            t_start.elapsed().as_secs_f64()
        );
    }
}

fn probe_hls() {
    let grid = Grid::new(1, 20.0, 256).unwrap();
    let kernel = RieszKernel::new(1, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut ratios = Vec::new();
    let t0 = Instant::now();
    for _ in 0..200 {
        let raw: Vec<f64> = (0..grid.len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        let f = Field::new(grid, raw.iter().map(|&v| v - mean).collect()).unwrap();
        let out = kernel.apply(&f).unwrap();
        let num = out.lp_norm(4.0).unwrap();
        let den = f.lp_norm(4.0 / 3.0).unwrap();
        ratios.push(num / den);
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let max = ratios[ratios.len() - 1];
    let median = ratios[ratios.len() / 2];
    println!(
        "ratios: min {:.4} median {median:.4} max {max:.4} max/median {:.4} wall {:.2}s",
        ratios[0],
        max / median,
        t0.elapsed().as_secs_f64()
    );
}

fn probe_picard() {
    let grid = Grid::new(1, 30.0, 128).unwrap();
    let u0 = Field::from_fn(grid, |[x, _]| 0.2 * (-x * x / 4.0).exp());
    let kernel = RieszKernel::new(1, 0.5).unwrap();
    let params = EquationParams::new(1, 2.0, 3.0, Nonlinearity::Riesz(kernel)).unwrap();
    for horizon in [0.1, 0.05, 0.025] {
        let sol = picard_solve_local(&u0, horizon, &params, 3.0, 2.0 / 3.0).unwrap();
        let prop = Propagator::new(grid, 2.0).unwrap();
        for steps in [256usize, 1024, 4096] {
            let h = sol.report.horizon;
            let etd = prop
                .evolve_fixed_steps(&u0, h / steps as f64, steps, &params, 2.0 / 3.0)
                .unwrap();
            let last = sol.fields.last().unwrap();
            let diff = last.zip_map(&etd, |a, b| a - b).unwrap().sup_abs();
            println!(
                "horizon {horizon} steps {steps}: rel {:.3e} ratios {:?}",
                diff / etd.sup_abs(),
                sol.report
                    .ratios
                    .iter()
                    .map(|r| (r * 1e3).round() / 1e3)
                    .collect::<Vec<_>>()
            );
        }
    }
}

fn probe_trajectory() {
    let grid = Grid::new(1, 40.0, 2048).unwrap();
    let kernel = RieszKernel::new(1, 0.5).unwrap();
    let params = EquationParams::new(1, 2.0, 3.0, Nonlinearity::Riesz(kernel)).unwrap();
    let u0 = Field::from_fn(grid, |[x, _]| 0.35 * (-x * x / (1.5 * 1.5)).exp());
    let solver = SolverConfig {
        t_end: 8.0,
        snapshot_interval: 0.125,
        history_stride: 8,
        boundary_mass_fraction: 0.05,
        ..SolverConfig::default()
    };
    let t0 = Instant::now();
    let run = evolve(&u0, &params, &solver).unwrap();
    println!(
        "classification {:?} steps {} final_t {:.4} wall {:.2}s snapshots {}",
        run.classification,
        run.steps,
        run.final_time,
        t0.elapsed().as_secs_f64(),
        run.snapshots.len()
    );

    let json = run.to_json().unwrap();
    let stored = RunResult::from_json(&json).unwrap();
    println!("round trip bytes: {}", json.len());

    let times = [2.0, 3.0, 4.5];
    let t0 = Instant::now();
    let sub = capacity_report(&stored, &params, &subcritical_points(2.0, &times)).unwrap();
    let sub_verdict = verify_capacity_inequality(&sub, &params, CapacityMode::Subcritical).unwrap();
    println!("subcritical wall {:.2}s verdict {:?}", t0.elapsed().as_secs_f64(), sub_verdict);
    for row in &sub.rows {
        println!(
            "  R {:.4} T {:.2}: lhs {:.4e} rhs {:.4e} master {} I {:.3e}",
            row.r, row.t, row.lhs, row.rhs, row.master_ok, row.i_int
        );
    }

    let t0 = Instant::now();
    let crit = capacity_report(&stored, &params, &critical_points(2.0, &[1.0, 2.0], &times)).unwrap();
    let crit_verdict = verify_capacity_inequality(&crit, &params, CapacityMode::Critical).unwrap();
    println!("critical wall {:.2}s verdict {:?}", t0.elapsed().as_secs_f64(), crit_verdict);

    let t0 = Instant::now();
    let scaling = capacity_report(&stored, &params, &grid_points(&[2.0, 4.0, 8.0], &times)).unwrap();
    println!("scaling wall {:.2}s", t0.elapsed().as_secs_f64());
    for (name, fit) in [
        ("j2_radius", &scaling.j2_radius_fit),
        ("j1_time", &scaling.j1_time_fit),
        ("j1_radius", &scaling.j1_radius_fit),
    ] {
        match fit {
            Some(f) => println!(
                "  {name}: exponent {:.4} predicted {:.4} rel err {:.3}% res {:.2e}",
                f.exponent,
                f.predicted,
                100.0 * (f.exponent - f.predicted).abs() / f.predicted.abs(),
                f.rms_residual
            ),
            None => println!("  {name}: no fit"),
        }
    }

    let ju = ju_audit(grid, 2.0, 3.0, 1.414).unwrap();
    println!(
        "ju at r=1.414: min {:.3e} tol {:.3e} ok {}",
        ju.min_residual, ju.tolerance, ju.ok
    );
}

fn probe_amplitudes() {
    let kernel = RieszKernel::new(1, 0.5).unwrap();
    let params = EquationParams::new(1, 2.0, 3.0, Nonlinearity::Riesz(kernel)).unwrap();
    for (n, amp) in [
        (2048usize, 0.35),
        (2048, 0.45),
        (2048, 0.6),
        (512, 0.35),
    ] {
        let grid = Grid::new(1, 40.0, n).unwrap();
        let u0 = Field::from_fn(grid, |[x, _]| amp * (-x * x / (1.5 * 1.5)).exp());
        let solver = SolverConfig {
            t_end: 10.0,
            history_stride: 16,
            boundary_mass_fraction: 0.05,
            ..SolverConfig::default()
        };
        let t0 = Instant::now();
        let run = evolve(&u0, &params, &solver).unwrap();
        let hist: Vec<String> = run
            .history
            .iter()
            .step_by((run.history.len() / 8).max(1))
            .map(|row| format!("({:.2},{:.3e})", row.t, row.linf))
            .collect();
        println!(
            "N={n} amp={amp}: {:?} final_t {:.3} wall {:.2}s sup path {}",
            run.classification,
            run.final_time,
            t0.elapsed().as_secs_f64(),
            hist.join(" ")
        );
    }
}

fn probe_dichotomy() {
    let kernel = RieszKernel::new(1, 0.5).unwrap();

    // (a) p = 3, unit-mass gaussian at a few widths.
    let grid = Grid::new(1, 40.0, 512).unwrap();
    let params = EquationParams::new(1, 2.0, 3.0, Nonlinearity::Riesz(kernel.clone())).unwrap();
    let solver = SolverConfig {
        t_end: 20.0,
        history_stride: 1,
        boundary_mass_fraction: 0.05,
        ..SolverConfig::default()
    };
    for w in [0.5, 1.0, 1.5] {
        let amp_unit = 1.0 / (w * std::f64::consts::PI.sqrt());
        let u0 = Field::from_fn(grid, |[x, _]| amp_unit * (-(x / w) * (x / w)).exp());
        let t0 = Instant::now();
        let run = evolve(&u0, &params, &solver).unwrap();
        println!(
            "(a) w {w} mass {:.4}: {:?} final_t {:.4} wall {:.2}s",
            u0.lp_norm(1.0).unwrap(),
            run.classification,
            run.final_time,
            t0.elapsed().as_secs_f64()
        );
    }

    // (b) p = 4.5 at two amplitudes.
    let params = EquationParams::new(1, 2.0, 4.5, Nonlinearity::Riesz(kernel.clone())).unwrap();
    for amp in [1.0, 0.5] {
        let u0 = Field::from_fn(grid, |[x, _]| amp * (-x * x / 9.0).exp());
        let t0 = Instant::now();
        let run = evolve(&u0, &params, &solver).unwrap();
        println!(
            "(b) amp {amp}: {:?} final_t {:.4} wall {:.2}s",
            run.classification,
            run.final_time,
            t0.elapsed().as_secs_f64()
        );
    }

    // (c) p = 8 small datum, weighted tracking.
    let grid = Grid::new(1, 160.0, 512).unwrap();
    let params = EquationParams::new(1, 2.0, 8.0, Nonlinearity::Riesz(kernel)).unwrap();
    let u0 = Field::from_fn(grid, |[x, _]| 0.1 * (-x * x / (1.5 * 1.5)).exp());
    let qsc = 1.0 * (8.0 - 1.0) / (2.0 + 0.5);
    println!("(c) datum q_sc norm: {:.6e}", u0.lp_norm(qsc).unwrap());
    let solver = SolverConfig {
        t_end: 50.0,
        history_stride: 4,
        weight_exponent_q: Some(8.5),
        ..SolverConfig::default()
    };
    let t0 = Instant::now();
    let run = evolve(&u0, &params, &solver).unwrap();
    let track = run.weighted_track().unwrap();
    println!(
        "(c) {:?} wall {:.2}s sup {:.4e} at t {:.3} last_q_max {:.4e} non_growing {}",
        run.classification,
        t0.elapsed().as_secs_f64(),
        track.sup,
        track.sup_time,
        track.last_quartile_max,
        track.non_growing
    );
}

fn probe_constant() {
    let grid = Grid::new(1, 10.0, 16).unwrap();
    let params = EquationParams::new(1, 2.0, 2.0, Nonlinearity::Local).unwrap();
    let u0 = Field::from_fn(grid, |_| 1.0);
    let solver = SolverConfig {
        t_end: 2.0,
        history_stride: 1,
        ..SolverConfig::default()
    };
    let t0 = Instant::now();
    let run = evolve(&u0, &params, &solver).unwrap();
    println!(
        "constant: {:?} final_t {:.6} wall {:.2}s",
        run.classification,
        run.final_time,
        t0.elapsed().as_secs_f64()
    );
}

fn probe_kernels() {
    use fujita_lab::capacity::kernel_limit_conditions;
    use fujita_lab::operators::{ConvolutionKernel, KernelProfile, KernelTable};

    let riesz = ConvolutionKernel::new(1, KernelProfile::Riesz { alpha: 0.5 }, 1.0).unwrap();
    for p in [5.7, 6.0, 6.3] {
        let rep = kernel_limit_conditions(&riesz, 2.0, p, None).unwrap();
        println!(
            "riesz p {p}: growth {:?} fitted {:?} threshold {:?}",
            rep.growth.verdict, rep.growth.fitted_exponent, rep.riesz_threshold
        );
    }
    let radii: Vec<f64> = (0..200)
        .map(|i| 1.0e-2 * (700.0f64 / 1.0e-2).powf(i as f64 / 199.0))
        .collect();
    let values: Vec<f64> = radii.iter().map(|r| (-r).exp()).collect();
    let table = KernelTable::new(&radii, &values).unwrap();
    let exp_kernel = ConvolutionKernel::new(1, KernelProfile::Table(table), 1.0).unwrap();
    let rep = kernel_limit_conditions(&exp_kernel, 2.0, 6.0, None).unwrap();
    println!(
        "exp table p 6: growth {:?} monotone_orders {:.1}",
        rep.growth.verdict, rep.growth.monotone_orders
    );
    for p in [3.0, 4.0] {
        let rep = kernel_limit_conditions(&riesz, 2.0, p, Some(1.0)).unwrap();
        let tail = rep.tail.unwrap();
        println!(
            "riesz tail p {p}: {:?} threshold {:?}",
            tail.verdict, rep.riesz_tail_threshold
        );
    }
}

fn main() {
    let mode = std::env::args().nth(1).unwrap_or_else(|| "op".into());
    match mode.as_str() {
        "op" => probe_operator(),
        "slopes" => probe_slopes(),
        "hls" => probe_hls(),
        "pic" => probe_picard(),
        "c5" => probe_trajectory(),
        "amps" => probe_amplitudes(),
        "six" => probe_dichotomy(),
        "seven" => probe_constant(),
        "ten" => probe_kernels(),
        other => eprintln!("unknown probe {other}"),
    }
}
