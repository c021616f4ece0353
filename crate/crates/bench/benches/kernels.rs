//! Criterion benchmarks for the hot kernels: fractional assembly, the
//! smallest-eigenpair solve, IMEX stepping, and the branching bisection.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use dispersal_core::dynamics::{Stepper, SystemState};
use dispersal_core::linalg::{smallest_eigenpair, EigenOptions};
use dispersal_core::mesh::{ball_nodes, Field, Grid, NodeSet};
use dispersal_core::operators::{assemble_classical, assemble_fractional};
use dispersal_core::spectral;

fn bench_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("assemble_fractional_1d");
    for n in [128usize, 256, 512] {
        let grid = Grid::interval(-1.0, 1.0, n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &grid, |b, grid| {
            b.iter(|| assemble_fractional(grid, 0.5).unwrap());
        });
    }
    group.finish();
}

fn bench_eigensolve(c: &mut Criterion) {
    let mut group = c.benchmark_group("smallest_eigenpair");
    for n in [128usize, 256] {
        let grid = Grid::interval(-1.0, 1.0, n).unwrap();
        let dense = assemble_fractional(&grid, 0.5).unwrap();
        group.bench_with_input(BenchmarkId::new("fractional", n), &dense, |b, op| {
            b.iter(|| smallest_eigenpair(op.matrix(), EigenOptions::default()).unwrap());
        });
        let tri = assemble_classical(&grid);
        group.bench_with_input(BenchmarkId::new("classical", n), &tri, |b, op| {
            b.iter(|| smallest_eigenpair(op.matrix(), EigenOptions::default()).unwrap());
        });
    }
    group.finish();
}

fn bench_imex_step(c: &mut Criterion) {
    let grid = Grid::interval(-1.0, 1.0, 256).unwrap();
    let sigma = Field::from_fn(&grid, |x| 2.0 * (1.0 - x[0] * x[0]));
    let stepper = Stepper::new(&grid, 0.5, 0.02).unwrap();
    let state = SystemState {
        t: 0.0,
        u: Field::from_fn(&grid, |x| (1.0 - x[0] * x[0]).max(0.0)),
        v: Field::from_fn(&grid, |x| 0.1 * (1.0 - x[0].abs())),
    };
    c.bench_function("imex_step_256", |b| {
        b.iter(|| stepper.step(&state, &sigma).unwrap());
    });
}

fn bench_branching(c: &mut Criterion) {
    let grid = Grid::interval(-1.0, 1.0, 128).unwrap();
    let ball = ball_nodes(&grid, [0.0, 0.0], 0.5).unwrap();
    c.bench_function("branching_threshold_128", |b| {
        b.iter(|| spectral::branching_threshold(&grid, &ball, 1e-4).unwrap());
    });
    let whole = NodeSet::whole_domain(&grid);
    c.bench_function("excess_whole_domain_128", |b| {
        b.iter(|| spectral::excess(&grid, 3.0, &whole).unwrap());
    });
}

criterion_group!(
    benches,
    bench_assembly,
    bench_eigensolve,
    bench_imex_step,
    bench_branching
);
criterion_main!(benches);
