use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dpglab::dpg::{assemble_solve, TrialSpaceKind};
use dpglab::problems::ManufacturedProblem;
use dpglab::DpgOptions;

fn square_solve(c: &mut Criterion) {
    let problem = ManufacturedProblem::square_smooth();
    let mut group = c.benchmark_group("square_solve");
    group.sample_size(10);
    for levels in [2, 3, 4] {
        let mesh = dpglab_bench::square_mesh(levels);
        group.bench_with_input(BenchmarkId::from_parameter(mesh.num_elements()), &mesh, |b, mesh| {
            b.iter(|| {
                assemble_solve(
                    mesh,
                    TrialSpaceKind::Standard(1),
                    problem.kind,
                    &problem.source,
                    None,
                    &DpgOptions::default(),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, square_solve);
criterion_main!(benches);
