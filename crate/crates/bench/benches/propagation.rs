use criterion::{black_box, criterion_group, criterion_main, Criterion};
use dccsim_core::propagation::{pathloss_db, sample_fading_gain, PathLoss};
use dccsim_core::rng::{stream, StreamPurpose};
use dccsim_core::RadioEnvironment;

fn pathloss(c: &mut Criterion) {
    let env = RadioEnvironment::default();
    let cached = PathLoss::new(&env).unwrap();
    c.bench_function("pathloss_db", |b| b.iter(|| pathloss_db(black_box(137.0), &env).unwrap()));
    c.bench_function("pathloss_linear_from_squared", |b| {
        b.iter(|| cached.linear_from_squared(black_box(137.0 * 137.0)))
    });
}

fn fading(c: &mut Criterion) {
    let env = RadioEnvironment::default();
    let mut rng = stream(1, 0, StreamPurpose::Fading);
    c.bench_function("rician_gain", |b| b.iter(|| sample_fading_gain(&env, &mut rng)));
}

criterion_group!(benches, pathloss, fading);
criterion_main!(benches);
