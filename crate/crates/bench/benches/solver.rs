use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use ptpbe_core::control::ControllerConfig;
use ptpbe_core::driver::{demo_config, kirkwood_config};
use ptpbe_core::stepping::{step, Reaction, StepScheme, Workspace};

fn time_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("step");
    group.sample_size(20);
    for n in [33usize, 65] {
        let h = 16.0 / (n - 1) as f64;
        for scheme in [StepScheme::Adi, StepScheme::Lod] {
            let p = kirkwood_config(h, scheme, ControllerConfig::constant(0.001)).problem().unwrap();
            let mut u = p.zero_state();
            let mut ws = Workspace::default();
            group.bench_with_input(BenchmarkId::new(scheme.to_string(), n), &n, |b, _| {
                b.iter(|| step(&p, scheme, &mut u, 0.001, Reaction::Sinh, &mut ws).unwrap())
            });
        }
    }
    group.finish();
}

fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("setup");
    group.sample_size(10);
    let sphere = kirkwood_config(0.25, StepScheme::Adi, ControllerConfig::default());
    group.bench_function("sphere h=0.25", |b| b.iter(|| sphere.problem().unwrap()));
    let demo = demo_config(StepScheme::Adi, ControllerConfig::default());
    group.bench_function("multi-sphere ses h=0.5", |b| b.iter(|| demo.problem().unwrap()));
    group.finish();
}

criterion_group!(benches, time_step, assembly);
criterion_main!(benches);
