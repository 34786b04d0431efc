use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use udg_core::assembly::{SpaceKind, Stabilisation};
use udg_core::harness::{solve_level, CaseDefinition, RunOptions};

fn bench_solve(c: &mut Criterion) {
    let case = CaseDefinition::example1();
    let mut group = c.benchmark_group("example1_n32");
    group.sample_size(10);
    for k in [2, 4] {
        for (space, stab) in [
            (SpaceKind::Dg, Stabilisation::Gp),
            (SpaceKind::Trefftz, Stabilisation::Gp),
            (SpaceKind::Trefftz, Stabilisation::Ag),
        ] {
            let opts = RunOptions::new(space, stab, k, 1);
            group.bench_function(BenchmarkId::new(format!("{space}-{stab}"), k), |b| {
                b.iter(|| solve_level(&case, &opts, 32).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, bench_solve);
criterion_main!(benches);
