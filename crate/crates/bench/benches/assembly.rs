use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use dpglab::dpg::{Discretization, LocalSystem, ProblemKind, TrialSpaceKind};
use dpglab::DpgOptions;

fn local_assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("local_system");
    let corners = [[0.0, 0.0], [0.5, 0.1], [0.2, 0.4]];
    let f = |x: [f64; 2]| x[0] * x[1] + 1.0;
    for p in 0..=3 {
        let disc =
            Discretization::new(TrialSpaceKind::Augmented(p), ProblemKind::ReactionDiffusion, &DpgOptions::default())
                .unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(p), &p, |b, _| {
            b.iter(|| LocalSystem::assemble(&disc, black_box(corners), [false, true, false], &f).unwrap())
        });
    }
    group.finish();
}

fn refinement(c: &mut Criterion) {
    let mesh = dpglab_bench::lshape_mesh(5);
    c.bench_function("refine_uniform_lshape", |b| b.iter(|| black_box(&mesh).refine_uniform().unwrap()));
}

criterion_group!(benches, local_assembly, refinement);
criterion_main!(benches);
