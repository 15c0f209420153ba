//! Parallel map against the sequential fallback on the two workloads that
//! dominate real sessions: batched source evaluations (sweep cells) and
//! window construction (capacity audits).
//!
//! With `--no-default-features` the parallel path degrades to the
//! sequential one, so the comparison collapses; run with defaults to see
//! the spread.

use criterion::{criterion_group, criterion_main, Criterion};

use fujita_lab::capacity::build_test_function;
use fujita_lab::grid::{Field, Grid};
use fujita_lab::operators::RieszKernel;
use fujita_lab::par;

fn source_batch(c: &mut Criterion) {
    let grid = Grid::new(1, 40.0, 512).unwrap();
    let kernel = RieszKernel::new(1, 0.5).unwrap();
    let fields: Vec<Field> = (0..32)
        .map(|k| {
            let shift = k as f64 * 0.1;
            Field::from_fn(grid, |[x, _]| (-(x - shift) * (x - shift) / 4.0).exp())
        })
        .collect();
    let work = |f: &Field| {
        let u3 = f.map(|v| v * v * v);
        kernel.apply(&u3).unwrap().sup_abs()
    };

    let mut group = c.benchmark_group("source-batch");
    group.bench_function("parallel", |b| b.iter(|| par::map(&fields, work)));
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_sequential(&fields, work))
    });
    group.finish();
}

fn window_batch(c: &mut Criterion) {
    let grid = Grid::new(1, 256.0, 2048).unwrap();
    let radii: Vec<f64> = (0..16).map(|k| 4.0 + 3.5 * k as f64).collect();
    let work = |&r: &f64| build_test_function(grid, 1.4, 3.0, r, 1.0).unwrap().j1();

    let mut group = c.benchmark_group("window-batch");
    group.sample_size(20);
    group.bench_function("parallel", |b| b.iter(|| par::map(&radii, work)));
    group.bench_function("sequential", |b| {
        b.iter(|| par::map_sequential(&radii, work))
    });
    group.finish();
}

criterion_group!(benches, source_batch, window_batch);
criterion_main!(benches);
