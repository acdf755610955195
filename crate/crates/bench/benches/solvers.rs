use criterion::{criterion_group, criterion_main, Criterion};
use rbstab::RbOption;
use rbstab_bench::{navier_stokes_p2p2, stokes_p1p1, train};

fn finite_elements(c: &mut Criterion) {
    c.bench_function("assemble stokes P1P1 32x16", |b| b.iter(|| stokes_p1p1(32, 16)));
    let fom = stokes_p1p1(32, 16);
    c.bench_function("solve stokes P1P1 32x16", |b| b.iter(|| fom.solve([0.6, 2.0]).unwrap()));
    let ns = navier_stokes_p2p2(8, 4);
    c.bench_function("newton navier-stokes P2P2 8x4", |b| b.iter(|| ns.solve([120.0, 2.0]).unwrap()));
}

fn offline(c: &mut Criterion) {
    let fom = stokes_p1p1(16, 8);
    let mut g = c.benchmark_group("offline");
    g.sample_size(10);
    g.bench_function("greedy stokes P1P1 16x8 N=8", |b| b.iter(|| train(&fom, 8, 25)));
    g.finish();
}

fn online(c: &mut Criterion) {
    let fom = stokes_p1p1(16, 8);
    let model = train(&fom, 10, 25).model;
    for option in [RbOption::I, RbOption::II, RbOption::III] {
        c.bench_function(&format!("online stokes N=10 option {option}"), |b| {
            b.iter(|| model.solve_option(option, [0.6, 2.0]).unwrap())
        });
    }
    let ns = navier_stokes_p2p2(8, 4);
    let model = train(&ns, 4, 9).model;
    c.bench_function("online navier-stokes N=4 option i", |b| {
        b.iter(|| model.solve_option(RbOption::I, [120.0, 2.0]).unwrap())
    });
}

criterion_group!(benches, finite_elements, offline, online);
criterion_main!(benches);
