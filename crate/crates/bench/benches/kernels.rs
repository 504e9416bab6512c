use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use hormander::ccmetric::{heisenberg_lattice, MetricGraph};
use hormander::eigen::{principal_eigenpair, zero_potential};
use hormander::operators::{assemble_stiffness, mass_matrix};
use hormander::{GridDomain, VectorFieldFamily};

fn assembly(c: &mut Criterion) {
    let fam = VectorFieldFamily::heisenberg();
    let grid = Arc::new(GridDomain::build(&[-1.0; 3], &[1.0; 3], 1.0 / 16.0).unwrap());
    c.bench_function("stiffness heisenberg 33^3", |b| {
        b.iter(|| assemble_stiffness(black_box(&fam), &grid).unwrap())
    });
}

fn eigen(c: &mut Criterion) {
    let fam = VectorFieldFamily::euclidean(2);
    let grid = Arc::new(GridDomain::build(&[0.0; 2], &[1.0; 2], 1.0 / 64.0).unwrap());
    let k = assemble_stiffness(&fam, &grid).unwrap();
    let m = mass_matrix(&grid);
    let v = zero_potential(&grid);
    let mut g = c.benchmark_group("eigen");
    g.sample_size(10);
    g.bench_function("principal unit square h=1/64", |b| {
        b.iter(|| principal_eigenpair(black_box(&k), &v, &m, 1e-8).unwrap())
    });
    g.finish();
}

fn dijkstra(c: &mut Criterion) {
    let fam = VectorFieldFamily::heisenberg();
    let grid = heisenberg_lattice(0.5, (-0.02, 0.02), 0.05).unwrap();
    let graph = MetricGraph::new(&fam, &grid, 32).unwrap();
    let src = grid.nearest_node(&[0.0; 3]).unwrap();
    let mut g = c.benchmark_group("ccmetric");
    g.sample_size(10);
    g.bench_function("heisenberg ball tree", |b| {
        b.iter(|| graph.shortest_paths(black_box(src), None, 0.4))
    });
    g.finish();
}

criterion_group!(benches, assembly, eigen, dijkstra);
criterion_main!(benches);
