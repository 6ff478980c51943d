use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use gpmap::fixtures::{random_values, spread_points, wall_batch};
use gpmap::{point, EnsembleConfig, Ensemble, SparseGp, ThinPlate};

fn sparse_ops(c: &mut Criterion) {
    let kernel = ThinPlate::new(20.0).unwrap();
    let pis = spread_points(100, 15.0, 0.3, 1);
    let batch = random_values(&spread_points(400, 15.0, 0.02, 2), 0.2, 3);
    let gp = SparseGp::fit(pis, &batch, kernel, 0.01).unwrap();
    let xs = spread_points(1000, 15.0, 0.0, 4);

    c.bench_function("sparse/update_100pi", |b| {
        b.iter_batched(|| gp.clone(), |mut g| g.update(&point(7.0, 7.0), 0.1).unwrap(), BatchSize::SmallInput)
    });
    c.bench_function("sparse/insert_remove_100pi", |b| {
        b.iter_batched(
            || gp.clone(),
            |mut g| {
                g.insert(point(7.03, 7.01)).unwrap();
                g.remove(g.len() - 1).unwrap();
            },
            BatchSize::SmallInput,
        )
    });
    c.bench_function("sparse/predict_mean_1000", |b| b.iter(|| gp.predict_mean(&xs)));
}

fn ensemble_step(c: &mut Criterion) {
    let first = wall_batch(0.0, 6.0, 0.05, 0.01, 0.1, 1);
    let mut ens = Ensemble::init(&first, EnsembleConfig::default()).unwrap();
    for s in 0..3 {
        ens.step(&wall_batch(0.0, 10.0, 0.05, 0.01, 0.1, 10 + s)).unwrap();
    }
    let next = wall_batch(0.0, 12.0, 0.05, 0.01, 0.1, 99);
    c.bench_function("ensemble/step_wall", |b| {
        b.iter_batched(|| ens.clone(), |mut e| e.step(&next).unwrap(), BatchSize::LargeInput)
    });
    let xs = spread_points(1000, 12.0, 0.0, 5);
    c.bench_function("ensemble/predict_mixture_1000", |b| b.iter(|| ens.predict_mixture(&xs)));
}

criterion_group!(benches, sparse_ops, ensemble_step);
criterion_main!(benches);
