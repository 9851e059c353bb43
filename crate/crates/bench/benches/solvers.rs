use std::hint::black_box;

use barycenter_core::{
    barycenter_fixed_support, barycenter_free_support, build_cost_matrix, gaussian_mixture, solve_exact,
    solve_smoothed, CostMatrix, DiscreteMeasure, FixedBarycenterProblem, FreeBarycenterProblem, Initialization,
    MixtureSpec, Regularization, SinkhornOptions, SinkhornVariant,
};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(n: usize, seed: u64) -> (Array1<f64>, Array1<f64>, CostMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut simplex = || {
        let a: Array1<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let s = a.sum();
        a / s
    };
    let (a, b) = (simplex(), simplex());
    let x = Array2::from_shape_fn((2, n), |_| rng.random_range(0.0..1.0));
    let y = Array2::from_shape_fn((2, n), |_| rng.random_range(0.0..1.0));
    (a, b, build_cost_matrix(x.view(), y.view(), 2.0).unwrap())
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    for n in [20, 50, 100] {
        let (a, b, cost) = instance(n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| solve_exact(black_box(a.view()), b.view(), &cost).unwrap())
        });
    }
    group.finish();
}

fn sinkhorn(c: &mut Criterion) {
    let mut group = c.benchmark_group("sinkhorn");
    let (a, b, cost) = instance(200, 2);
    let lambda = 50.0 / cost.max();
    for (name, variant) in [("plain", SinkhornVariant::Plain), ("log", SinkhornVariant::LogDomain)] {
        let opts = SinkhornOptions::default().with_variant(variant);
        group.bench_function(name, |bench| {
            bench.iter(|| solve_smoothed(black_box(a.view()), b.view(), &cost, lambda, &opts).unwrap())
        });
    }
    group.finish();
}

fn barycenters(c: &mut Criterion) {
    let mut group = c.benchmark_group("barycenter");
    group.sample_size(10);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let measures: Vec<DiscreteMeasure> = (0..4)
        .map(|_| {
            let support = Array2::from_shape_fn((2, 30), |_| rng.random_range(0.0..1.0));
            DiscreteMeasure::new(support, Array1::from_elem(30, 1.0)).unwrap()
        })
        .collect();
    let grid = Array2::from_shape_fn((2, 100), |(r, i)| {
        if r == 0 {
            (i % 10) as f64 / 9.0
        } else {
            (i / 10) as f64 / 9.0
        }
    });
    let fixed = FixedBarycenterProblem::new(grid, measures.clone()).with_max_outer(20);
    group.bench_function("fixed_support", |bench| {
        bench.iter(|| barycenter_fixed_support(black_box(&fixed)).unwrap())
    });

    let points = gaussian_mixture(&MixtureSpec::default(), 0).unwrap();
    let free = FreeBarycenterProblem::new(vec![points], 8)
        .with_regularization(Regularization::AUTO)
        .with_init(Initialization::RandomSubset { seed: 0 })
        .with_max_outer(10);
    group.bench_function("free_support_mixture", |bench| {
        bench.iter(|| barycenter_free_support(black_box(&free)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, exact, sinkhorn, barycenters);
criterion_main!(benches);
