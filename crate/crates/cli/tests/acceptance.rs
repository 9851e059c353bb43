//! Acceptance checks, one PASS/FAIL line each. Exits nonzero if any fails.

use std::time::{Duration, Instant};

use barycenter_cli::{demo_barycenter, Command, RunConfig, Shape};
use barycenter_core::free::{compare_constraints, PlanMode, StepRule};
use barycenter_core::sinkhorn::smoothed_dual_objective;
use barycenter_core::{
    barycenter_fixed_support, barycenter_free_support, brute_force_cost, build_cost_matrix, gaussian_mixture,
    sinkhorn_scaling, smoothed_dual_alpha, solve_exact, solve_exact_dual, solve_exact_primal, solve_smoothed,
    BarycenterTrace, CostMatrix, DiscreteMeasure, Error, FixedBarycenterProblem, FreeBarycenterProblem, Initialization,
    MixtureSpec, Regularization, SinkhornOptions, SinkhornVariant, WeightConstraintSet,
};
use ndarray::{array, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Traces of every barycenter run, for the feasibility check.
#[derive(Default)]
struct Runs {
    traces: Vec<(String, WeightConstraintSet, BarycenterTrace)>,
}

impl Runs {
    fn record(&mut self, label: impl Into<String>, theta: WeightConstraintSet, trace: &BarycenterTrace) {
        self.traces.push((label.into(), theta, trace.clone()));
    }
}

struct Check {
    name: &'static str,
    budget: Option<Duration>,
    run: fn(&mut Runs) -> Outcome,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    let a: Array1<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s = a.sum();
    a / s
}

fn random_points(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Array2<f64> {
    Array2::from_shape_fn((d, n), |_| rng.random_range(0.0..1.0))
}

fn l1(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum()
}

fn exact_solver_matches_brute_force(_: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_cost, mut worst_gap) = (0.0_f64, 0.0_f64);
    for i in 0..50 {
        let (n, m) = (rng.random_range(1..=5), rng.random_range(1..=5));
        let (a, b) = (random_simplex(&mut rng, n), random_simplex(&mut rng, m));
        let cost = CostMatrix::precomputed(Array2::from_shape_fn((n, m), |_| rng.random_range(0.0..1.0))).unwrap();
        let (primal, plan) = solve_exact_primal(a.view(), b.view(), &cost).map_err(|e| format!("instance {i}: {e}"))?;
        let brute = brute_force_cost(a.view(), b.view(), &cost).map_err(|e| format!("instance {i}: {e}"))?;
        let duals = solve_exact_dual(a.view(), b.view(), &cost).map_err(|e| format!("instance {i}: {e}"))?;
        let gap = (primal - duals.objective(a.view(), b.view())).abs();
        ensure(duals.max_violation(&cost) <= 1e-9, || {
            format!("instance {i}: dual infeasible")
        })?;
        ensure((plan.cost(&cost) - primal).abs() <= 1e-12, || {
            format!("instance {i}: plan does not price to cost")
        })?;
        worst_cost = worst_cost.max((primal - brute).abs());
        worst_gap = worst_gap.max(gap);
    }
    let fixture = solve_exact(
        array![0.3, 0.7].view(),
        array![0.6, 0.4].view(),
        &CostMatrix::precomputed(array![[0.0, 2.0], [1.0, 4.0]]).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    ensure((fixture.cost - 1.6).abs() <= 1e-12, || {
        format!("2x2 fixture cost {}", fixture.cost)
    })?;
    ensure(worst_cost <= 1e-6, || {
        format!("cost differs from brute force by {worst_cost:e}")
    })?;
    ensure(worst_gap <= 1e-8, || format!("duality gap {worst_gap:e}"))?;
    Ok(format!(
        "50 instances, max |primal - brute| {worst_cost:.1e}, max gap {worst_gap:.1e}"
    ))
}

fn tight(variant: SinkhornVariant) -> SinkhornOptions {
    SinkhornOptions::default()
        .with_tol(1e-11)
        .with_max_iter(500_000)
        .with_variant(variant)
}

fn entropic_gap_is_bounded(_: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut tightest = f64::INFINITY;
    let mut lowest = f64::INFINITY;
    for i in 0..20 {
        let (n, m) = (rng.random_range(2..=10), rng.random_range(2..=10));
        let (a, b) = (random_simplex(&mut rng, n), random_simplex(&mut rng, m));
        let cost = build_cost_matrix(
            random_points(&mut rng, 2, n).view(),
            random_points(&mut rng, 2, m).view(),
            2.0,
        )
        .unwrap();
        let exact = solve_exact(a.view(), b.view(), &cost).map_err(|e| e.to_string())?.cost;
        for c in [10.0, 100.0, 1000.0] {
            let lambda = c / cost.max();
            let sol = solve_smoothed(a.view(), b.view(), &cost, lambda, &tight(SinkhornVariant::LogDomain))
                .map_err(|e| format!("instance {i}, lambda*max(M)={c}: {e}"))?;
            // the rounded plan is exactly feasible, so its cost bounds the exact one
            let gap = sol.plan.rounded().cost(&cost) - exact;
            let bound = ((n * m) as f64).ln() / lambda + 1e-8;
            ensure(gap >= 0.0 && gap <= bound, || {
                format!("instance {i}, lambda*max(M)={c}: gap {gap:e}, bound {bound:e}")
            })?;
            tightest = tightest.min((bound - gap) / bound);
            lowest = lowest.min(gap);
        }
    }
    Ok(format!(
        "60 solves, min gap {lowest:.1e}, min slack to bound {:.0}%",
        100.0 * tightest
    ))
}

fn dual_gradient_matches_finite_differences(_: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let opts = tight(SinkhornVariant::Plain);
    let eps = 1e-5;
    let mut worst = 0.0_f64;
    for i in 0..5 {
        let (n, m) = (rng.random_range(2..=6), rng.random_range(2..=6));
        let (a, b) = (random_simplex(&mut rng, n), random_simplex(&mut rng, m));
        let cost = build_cost_matrix(
            random_points(&mut rng, 2, n).view(),
            random_points(&mut rng, 2, m).view(),
            2.0,
        )
        .unwrap();
        let lambda = 50.0 / cost.max();
        let pair = sinkhorn_scaling(a.view(), b.view(), &cost, lambda, &opts, None).map_err(|e| e.to_string())?;
        let alpha = smoothed_dual_alpha(&pair, lambda).map_err(|e| e.to_string())?;
        let f = |p: &Array1<f64>| {
            smoothed_dual_objective(p.view(), b.view(), &cost, lambda, &opts).map_err(|e| e.to_string())
        };
        for _ in 0..10 {
            let mut dir: Array1<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mean = dir.mean().unwrap();
            dir.mapv_inplace(|v| v - mean);
            let fd = (f(&(&a + &(eps * &dir)))? - f(&(&a - &(eps * &dir)))?) / (2.0 * eps);
            let err = (fd - alpha.dot(&dir)).abs();
            ensure(err <= 1e-4, || {
                format!("instance {i}: derivative {fd} vs alpha {}", alpha.dot(&dir))
            })?;
            worst = worst.max(err);
        }
    }
    Ok(format!("50 directions, max error {worst:.1e}"))
}

fn marginals(plan: ArrayView2<f64>, a: ArrayView1<f64>, b: ArrayView1<f64>) -> (f64, f64) {
    (
        l1(plan.sum_axis(ndarray::Axis(1)).view(), a),
        l1(plan.sum_axis(ndarray::Axis(0)).view(), b),
    )
}

fn sinkhorn_plans_meet_marginals(_: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0_f64;
    let mut solves = 0;
    for i in 0..20 {
        let (n, m) = (rng.random_range(1..=10), rng.random_range(1..=10));
        let (a, b) = (random_simplex(&mut rng, n), random_simplex(&mut rng, m));
        let cost = build_cost_matrix(
            random_points(&mut rng, 2, n).view(),
            random_points(&mut rng, 2, m).view(),
            2.0,
        )
        .unwrap();
        for c in [1.0, 10.0, 100.0] {
            let lambda = c / cost.max().max(f64::MIN_POSITIVE);
            for variant in [SinkhornVariant::Plain, SinkhornVariant::LogDomain] {
                let opts = SinkhornOptions::default().with_variant(variant).with_max_iter(100_000);
                let sol = solve_smoothed(a.view(), b.view(), &cost, lambda, &opts)
                    .map_err(|e| format!("instance {i}, {variant:?}, lambda*max(M)={c}: {e}"))?;
                let (row, col) = marginals(sol.plan.matrix(), a.view(), b.view());
                ensure(row <= 1e-6 && col <= 1e-6, || {
                    format!("instance {i}, {variant:?}: marginal errors {row:e}, {col:e}")
                })?;
                worst = worst.max(row).max(col);
                solves += 1;
            }
        }
    }

    // well-separated clouds: every row of exp(-lambda M) underflows
    for i in 0..5 {
        let (n, m) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let (a, b) = (random_simplex(&mut rng, n), random_simplex(&mut rng, m));
        let x = Array2::from_shape_fn((2, n), |(r, _)| {
            if r == 0 {
                rng.random_range(0.0..0.2)
            } else {
                rng.random_range(0.0..0.3)
            }
        });
        let y = Array2::from_shape_fn((2, m), |(r, _)| {
            if r == 0 {
                rng.random_range(0.8..1.0)
            } else {
                rng.random_range(0.0..0.3)
            }
        });
        let cost = build_cost_matrix(x.view(), y.view(), 2.0).unwrap();
        let lambda = 5000.0 / cost.max();
        let plain = solve_smoothed(a.view(), b.view(), &cost, lambda, &SinkhornOptions::default());
        ensure(
            matches!(
                plain,
                Err(Error::KernelUnderflow { .. } | Error::NumericalBreakdown { .. })
            ),
            || {
                format!(
                    "separated instance {i}: plain variant returned {:?} instead of an underflow error",
                    plain.map(|s| s.transport_cost)
                )
            },
        )?;
        let opts = SinkhornOptions::default()
            .with_variant(SinkhornVariant::LogDomain)
            .with_max_iter(5_000_000);
        let sol = solve_smoothed(a.view(), b.view(), &cost, lambda, &opts)
            .map_err(|e| format!("separated instance {i}: {e}"))?;
        let (row, col) = marginals(sol.plan.matrix(), a.view(), b.view());
        ensure(sol.converged && row <= 1e-6 && col <= 1e-6, || {
            format!("separated instance {i}: errors {row:e}, {col:e}")
        })?;
        worst = worst.max(row).max(col);
        solves += 1;
    }

    // generic data at the same lambda: plain either errors cleanly or returns a
    // valid plan; where it errors the log-domain variant must converge
    let mut plain_errors = 0;
    for i in 0..10 {
        let (n, m) = (rng.random_range(2..=10), rng.random_range(2..=10));
        let (a, b) = (random_simplex(&mut rng, n), random_simplex(&mut rng, m));
        let cost = build_cost_matrix(
            random_points(&mut rng, 2, n).view(),
            random_points(&mut rng, 2, m).view(),
            2.0,
        )
        .unwrap();
        let lambda = 5000.0 / cost.max();
        match solve_smoothed(
            a.view(),
            b.view(),
            &cost,
            lambda,
            &SinkhornOptions::default().with_max_iter(100_000),
        ) {
            Ok(sol) => {
                let (row, col) = marginals(sol.plan.matrix(), a.view(), b.view());
                ensure(
                    sol.plan.matrix().iter().all(|v| v.is_finite()) && row <= 1e-6 && col <= 1e-6,
                    || format!("generic instance {i}: plain variant returned an invalid plan"),
                )?;
            }
            Err(Error::KernelUnderflow { .. } | Error::NumericalBreakdown { .. }) => {
                plain_errors += 1;
                let log = SinkhornOptions::default()
                    .with_variant(SinkhornVariant::LogDomain)
                    .with_max_iter(5_000_000);
                let sol = solve_smoothed(a.view(), b.view(), &cost, lambda, &log)
                    .map_err(|e| format!("generic instance {i}: {e}"))?;
                let (row, col) = marginals(sol.plan.matrix(), a.view(), b.view());
                ensure(row <= 1e-6 && col <= 1e-6, || {
                    format!("generic instance {i}: errors {row:e}, {col:e}")
                })?;
                solves += 1;
            }
            Err(e) => return Err(format!("generic instance {i}: plain variant failed with {e}")),
        }
    }
    Ok(format!("{solves} plans, max marginal error {worst:.1e}; plain errored on 5 separated and {plain_errors} generic instances"))
}

/// Exact barycenter objective of the three-point problem at `a`.
fn collinear_objective(a: &Array1<f64>, x: ArrayView2<f64>, measures: &[DiscreteMeasure]) -> f64 {
    measures
        .iter()
        .map(|m| {
            let cost = build_cost_matrix(x, m.support(), 2.0).unwrap();
            solve_exact(a.view(), m.weights(), &cost).unwrap().cost
        })
        .sum::<f64>()
        / measures.len() as f64
}

fn collinear_barycenter_concentrates(runs: &mut Runs) -> Outcome {
    let x = array![[0.0, 1.0, 2.0]];
    let measures = vec![
        DiscreteMeasure::dirac(&[0.0]).unwrap(),
        DiscreteMeasure::dirac(&[2.0]).unwrap(),
    ];
    let problem =
        FixedBarycenterProblem::new(x.clone(), measures.clone()).with_regularization(Regularization::OverMax(400.0));
    let res = barycenter_fixed_support(&problem).map_err(|e| e.to_string())?;
    runs.record("collinear fixed support", problem.theta, &res.trace);
    ensure(res.weights[1] >= 0.9, || format!("middle weight {}", res.weights[1]))?;

    let mut best = (f64::INFINITY, Array1::zeros(3));
    let mut runner_up = f64::INFINITY;
    for i in 0..=50 {
        for j in 0..=(50 - i) {
            let a = array![i as f64 / 50.0, j as f64 / 50.0, (50 - i - j) as f64 / 50.0];
            let f = collinear_objective(&a, x.view(), &measures);
            if f < best.0 {
                runner_up = best.0;
                best = (f, a);
            } else {
                runner_up = runner_up.min(f);
            }
        }
    }
    ensure((best.0 - 1.0).abs() <= 1e-12 && best.1 == array![0.0, 1.0, 0.0], || {
        format!("grid optimum {} at {}", best.0, best.1)
    })?;
    ensure(runner_up > 1.0, || format!("grid optimum is not unique: {runner_up}"))?;
    Ok(format!(
        "middle weight {:.4}; grid optimum f=1 at the middle atom",
        res.weights[1]
    ))
}

/// Best 2-partition of a 1-D point set by enumeration, as sorted centroids.
fn best_two_partition(points: &[f64], w: &[f64]) -> Vec<f64> {
    let n = points.len();
    let mut best = (f64::INFINITY, vec![]);
    for mask in 1..(1u32 << (n - 1)) {
        let mut cost = 0.0;
        let mut centroids = vec![];
        for side in [true, false] {
            let idx: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1 == 1) == side).collect();
            let mass: f64 = idx.iter().map(|&i| w[i]).sum();
            let c = idx.iter().map(|&i| w[i] * points[i]).sum::<f64>() / mass;
            cost += idx.iter().map(|&i| w[i] * (points[i] - c).powi(2)).sum::<f64>();
            centroids.push(c);
        }
        if cost < best.0 {
            centroids.sort_by(f64::total_cmp);
            best = (cost, centroids);
        }
    }
    best.1
}

/// One Lloyd iteration: nearest centroid (lowest index on ties), then
/// weighted means. Centroids with no mass stay put.
fn lloyd_iteration(y: ArrayView2<f64>, b: ArrayView1<f64>, x: ArrayView2<f64>) -> Array2<f64> {
    let (d, k) = x.dim();
    let mut sums = Array2::<f64>::zeros((d, k));
    let mut mass = vec![0.0; k];
    for (j, p) in y.columns().into_iter().enumerate() {
        let dist = |c: usize| {
            x.column(c)
                .iter()
                .zip(p.iter())
                .map(|(u, v)| (u - v).powi(2))
                .sum::<f64>()
        };
        let nearest = (0..k).fold(0, |best, c| if dist(c) < dist(best) { c } else { best });
        mass[nearest] += b[j];
        for r in 0..d {
            sums[[r, nearest]] += b[j] * p[r];
        }
    }
    Array2::from_shape_fn((d, k), |(r, c)| {
        if mass[c] > 0.0 {
            sums[[r, c]] / mass[c]
        } else {
            x[[r, c]]
        }
    })
}

fn exact_free_support_is_lloyd(runs: &mut Runs) -> Outcome {
    let points = [0.0, 1.0, 5.0, 6.0];
    let oracle = best_two_partition(&points, &[0.25; 4]);
    let nu = DiscreteMeasure::on_line(&points, &[0.25; 4]).unwrap();
    for seed in 0..6 {
        let problem = FreeBarycenterProblem::new(vec![nu.clone()], 2)
            .with_plan_mode(PlanMode::Exact)
            .with_init(Initialization::RandomSubset { seed });
        let res = barycenter_free_support(&problem).map_err(|e| e.to_string())?;
        runs.record(format!("lloyd seed {seed}"), problem.theta, &res.trace);
        let mut got: Vec<f64> = res.support.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        ensure(got.iter().zip(&oracle).all(|(g, o)| (g - o).abs() <= 1e-6), || {
            format!("seed {seed}: {got:?} vs {oracle:?}")
        })?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0_f64;
    for i in 0..10 {
        let (m, k) = (rng.random_range(6..=20), rng.random_range(2..=5));
        let y = random_points(&mut rng, 2, m);
        let b = random_simplex(&mut rng, m);
        let nu = DiscreteMeasure::new(y.clone(), b.clone()).unwrap();
        let x0 = random_points(&mut rng, 2, k);
        let problem = FreeBarycenterProblem::new(vec![nu], k)
            .with_plan_mode(PlanMode::Exact)
            .with_step(StepRule::Fixed(1.0))
            .with_max_outer(1)
            .with_init(Initialization::Points(x0.clone()));
        let res = barycenter_free_support(&problem).map_err(|e| format!("instance {i}: {e}"))?;
        runs.record(format!("lloyd step {i}"), problem.theta, &res.trace);
        let expected = lloyd_iteration(y.view(), b.view(), x0.view());
        let err = res
            .support
            .iter()
            .zip(expected.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        ensure(err <= 1e-10, || {
            format!("instance {i}: one iteration differs from Lloyd by {err:e}")
        })?;
        worst = worst.max(err);
    }
    Ok(format!(
        "centroids {oracle:?} from 6 starts; 10 single steps, max deviation {worst:.1e}"
    ))
}

fn uniform_barycenter_matches_quantile_averages(runs: &mut Runs) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0_f64;
    for i in 0..3 {
        let supports: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let mut s: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..10.0)).collect();
                s.sort_by(f64::total_cmp);
                s
            })
            .collect();
        let expected: Vec<f64> = (0..5)
            .map(|j| supports.iter().map(|s| s[j]).sum::<f64>() / 3.0)
            .collect();
        let measures: Vec<_> = supports
            .iter()
            .map(|s| DiscreteMeasure::on_line(s, &[0.2; 5]).unwrap())
            .collect();
        let problem = FreeBarycenterProblem::new(measures, 5)
            .with_theta(WeightConstraintSet::UniformSingleton)
            .with_regularization(Regularization::OverMax(1000.0))
            .with_init(Initialization::RandomSubset { seed: i });
        let res = barycenter_free_support(&problem).map_err(|e| format!("instance {i}: {e}"))?;
        runs.record(format!("quantile instance {i}"), problem.theta, &res.trace);
        let mut got: Vec<f64> = res.support.iter().copied().collect();
        got.sort_by(f64::total_cmp);
        let err = got
            .iter()
            .zip(&expected)
            .map(|(g, e)| (g - e).abs())
            .fold(0.0, f64::max);
        ensure(err <= 1e-2, || format!("instance {i}: {got:?} vs {expected:?}"))?;
        worst = worst.max(err);
    }
    Ok(format!("3 instances, max deviation {worst:.1e}"))
}

fn uniform_weights_never_beat_free_weights(runs: &mut Runs) -> Outcome {
    let mut details = vec![];
    for seed in 0..5 {
        let points = gaussian_mixture(&MixtureSpec::default(), seed).map_err(|e| e.to_string())?;
        let template = FreeBarycenterProblem::new(vec![points], 8).with_init(Initialization::RandomSubset { seed });
        let cmp = compare_constraints(&template).map_err(|e| format!("seed {seed}: {e}"))?;
        runs.record(
            format!("mixture {seed} free"),
            WeightConstraintSet::FullSimplex,
            &cmp.free.trace,
        );
        runs.record(
            format!("mixture {seed} uniform"),
            WeightConstraintSet::UniformSingleton,
            &cmp.uniform.trace,
        );
        let (free, uniform) = (cmp.free.objective, cmp.uniform.objective);
        ensure(uniform >= free - 1e-8, || {
            format!("seed {seed}: uniform {uniform} < free {free}")
        })?;
        details.push(format!("{uniform:.3}/{free:.3}"));
    }
    Ok(format!("uniform/free objectives {}", details.join(" ")))
}

fn ellipse_barycenter_improves_on_uniform(runs: &mut Runs) -> Outcome {
    let config = RunConfig::new(
        Command::EllipsesDemo {
            size: 20,
            count: 10,
            shape: Shape::Ellipses,
        },
        "unused",
    );
    let run = || demo_barycenter(&config, 20, 10, Shape::Ellipses).map_err(|e| e.to_string());
    let (_, first) = run()?;
    let (_, second) = run()?;
    runs.record("ellipses", WeightConstraintSet::FullSimplex, &first.trace);
    ensure(first.iterations == 60, || {
        format!("stopped after {} iterations", first.iterations)
    })?;
    ensure(
        first.weights == second.weights && first.objective.to_bits() == second.objective.to_bits(),
        || "two runs differ".into(),
    )?;
    let initial = first.trace.records()[0].objective;
    let ratio = first.objective / initial;
    ensure(ratio <= 0.5, || {
        format!(
            "objective {} vs uniform start {initial}: ratio {ratio}",
            first.objective
        )
    })?;
    Ok(format!(
        "objective {:.4} vs uniform start {initial:.4} (ratio {ratio:.3}); repeat run identical",
        first.objective
    ))
}

fn feasible(theta: WeightConstraintSet, a: ArrayView1<f64>) -> bool {
    let n = a.len() as f64;
    let simplex = || a.iter().all(|&v| v >= 0.0 && v.is_finite()) && (a.sum() - 1.0).abs() <= 1e-10;
    match theta {
        WeightConstraintSet::UniformSingleton => a.iter().all(|&v| v == 1.0 / n),
        WeightConstraintSet::FullSimplex => simplex(),
        WeightConstraintSet::EntropyLevelSet(tau) => {
            simplex() && -a.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>() >= tau - 1e-10
        }
    }
}

fn logged_weights_stay_feasible(runs: &mut Runs) -> Outcome {
    let mut iterates = 0;
    for (label, theta, trace) in &runs.traces {
        for r in trace.records() {
            ensure(feasible(*theta, r.weights.view()), || {
                format!("{label}, iteration {}: {} outside {theta:?}", r.iter, r.weights)
            })?;
            iterates += 1;
        }
    }
    ensure(iterates > 0, || "no barycenter iterates were logged".into())?;
    Ok(format!("{iterates} iterates across {} runs", runs.traces.len()))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    let secs = |s| Some(Duration::from_secs(s));
    let checks = [
        Check {
            name: "exact solver agrees with brute force",
            budget: secs(5),
            run: exact_solver_matches_brute_force,
        },
        Check {
            name: "entropic cost gap within log(nm)/lambda",
            budget: secs(30),
            run: entropic_gap_is_bounded,
        },
        Check {
            name: "smoothed dual gradient vs finite differences",
            budget: secs(30),
            run: dual_gradient_matches_finite_differences,
        },
        Check {
            name: "Sinkhorn plans meet both marginals",
            budget: None,
            run: sinkhorn_plans_meet_marginals,
        },
        Check {
            name: "collinear fixed-support barycenter",
            budget: secs(10),
            run: collinear_barycenter_concentrates,
        },
        Check {
            name: "exact free support equals Lloyd",
            budget: None,
            run: exact_free_support_is_lloyd,
        },
        Check {
            name: "1-D uniform barycenter matches quantiles",
            budget: secs(30),
            run: uniform_barycenter_matches_quantile_averages,
        },
        Check {
            name: "uniform-weight objective >= free objective",
            budget: None,
            run: uniform_weights_never_beat_free_weights,
        },
        Check {
            name: "ellipse barycenter halves the uniform objective",
            budget: secs(300),
            run: ellipse_barycenter_improves_on_uniform,
        },
        Check {
            name: "logged weights stay in the constraint set",
            budget: None,
            run: logged_weights_stay_feasible,
        },
    ];
    if args.iter().any(|a| a == "--list") {
        for check in &checks {
            println!("{}: test", check.name);
        }
        return;
    }
    let mut runs = Runs::default();
    let mut failed = 0;
    let selected: Vec<&Check> = checks
        .iter()
        .filter(|c| filters.is_empty() || filters.iter().any(|f| c.name.contains(f.as_str())))
        .collect();
    for check in &selected {
        let start = Instant::now();
        let mut outcome = (check.run)(&mut runs);
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(budget)) = (&outcome, check.budget) {
            if elapsed > budget {
                outcome = Err(format!("{detail}; took longer than {}s", budget.as_secs()));
            }
        }
        let (status, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{status} {:<48} {:>7.2}s  {detail}", check.name, elapsed.as_secs_f64());
    }
    println!("{} of {} checks passed", selected.len() - failed, selected.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
