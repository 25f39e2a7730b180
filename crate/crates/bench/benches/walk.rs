use std::hint::black_box;

use clawsim_bench::{detection_walk, planted};
use criterion::{criterion_group, criterion_main, Criterion};

fn walk_operator(c: &mut Criterion) {
    let mut group = c.benchmark_group("walk");
    for (n, l) in [(6, 2), (8, 3), (10, 3)] {
        let inst = planted(n, n, 1);
        let (dw, params) = detection_walk(&inst, &[l, l]);
        let mut v = dw.walk().uniform_edges();
        group.bench_function(format!("apply_w J({n},{l})^2"), |b| {
            b.iter(|| dw.walk().apply_w(black_box(&mut v)))
        });
        group.bench_function(
            format!("success_profile J({n},{l})^2 T={}", params.t_max),
            |b| b.iter(|| dw.walk().success_profile(black_box(params.t_max))),
        );
    }
    group.finish();
}

criterion_group!(benches, walk_operator);
criterion_main!(benches);
