use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use barycenter_core::datasets::{nested_ellipse_images, square_image};
use barycenter_core::free::pooled_atoms;
use barycenter_core::io::{
    normalize_for_display, read_measure_csv, read_pgm, round_sig, write_measure_csv, write_pgm, write_points_csv,
};
use barycenter_core::measures::grid_support;
use barycenter_core::{
    barycenter_fixed_support, barycenter_free_support, build_cost_matrix, compare_constraints, gaussian_mixture,
    grid_measure_from_intensities, solve_exact, solve_smoothed, BarycenterTrace, DiscreteMeasure, Error,
    FixedBarycenterProblem, FixedBarycenterResult, FreeBarycenterProblem, Initialization, SinkhornOptions,
    SinkhornVariant, StepRule,
};
use ndarray::{Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{ClusterInput, Command, InitSource, RunConfig, Shape};

/// Exit status for a failed run: 1 bad input, 2 beyond the solver's
/// capabilities, 3 numerical failure or non-convergence.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(mut core) = err.chain().find_map(|e| e.downcast_ref::<Error>()) else {
        return 1;
    };
    while let Error::Subproblem { source, .. } = core {
        core = source;
    }
    match core {
        Error::InstanceTooLarge { .. } | Error::Unsupported(_) => 2,
        Error::NotConverged { .. }
        | Error::NumericalBreakdown { .. }
        | Error::KernelUnderflow { .. }
        | Error::PivotLimit(_)
        | Error::ProxOverflow => 3,
        _ => 1,
    }
}

/// Runs the configured subcommand, writes its outputs and `report.json`
/// under `config.out`, and returns the report.
pub fn run(config: &RunConfig) -> Result<Value> {
    fs::create_dir_all(&config.out).with_context(|| format!("creating {}", config.out.display()))?;
    let report = match &config.command {
        Command::Emd { source, target } => run_emd(config, source, target)?,
        Command::Sinkhorn { source, target } => run_sinkhorn(config, source, target)?,
        Command::BaryFixed { inputs, support } => run_bary_fixed(config, inputs, support.as_deref())?,
        Command::BaryFree { inputs, k, init } => run_bary_free(config, inputs, *k, init)?,
        Command::Cluster { input, k, init } => run_cluster(config, input, *k, init)?,
        Command::EllipsesDemo { size, count, shape } => run_ellipses_demo(config, *size, *count, *shape)?,
    };
    write_json(&config.out.join("report.json"), &report)?;
    Ok(report)
}

/// Reads a point cloud from CSV, or a grid histogram from PGM.
pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    if is_pgm(path) {
        let image = read_pgm(path)?;
        Ok(grid_measure_from_intensities(image.view(), true).with_context(|| format!("{}", path.display()))?)
    } else {
        Ok(read_measure_csv(path)?)
    }
}

fn is_pgm(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn sig(x: f64) -> Value {
    json!(round_sig(x))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn write_trace(path: &Path, trace: &BarycenterTrace) -> Result<()> {
    let file = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    trace
        .write_json_lines(BufWriter::new(file))
        .with_context(|| format!("writing {}", path.display()))
}

fn sinkhorn_options(config: &RunConfig) -> SinkhornOptions {
    let mut opts = SinkhornOptions::default();
    if let Some(tol) = config.tol {
        opts = opts.with_tol(tol);
    }
    if let Some(max_iter) = config.max_iter {
        opts = opts.with_max_iter(max_iter);
    }
    if config.log_domain {
        opts = opts.with_variant(SinkhornVariant::LogDomain);
    }
    opts
}

/// Inner solver settings for the barycenter loops.
fn inner_options(config: &RunConfig) -> SinkhornOptions {
    let opts = barycenter_core::fixed::inner_sinkhorn_options();
    if config.log_domain {
        opts.with_variant(SinkhornVariant::LogDomain)
    } else {
        opts
    }
}

pub fn run_emd(config: &RunConfig, source: &Path, target: &Path) -> Result<Value> {
    let (mu, nu) = (load_measure(source)?, load_measure(target)?);
    let cost = build_cost_matrix(mu.support(), nu.support(), config.p)?;
    let sol = match solve_exact(mu.weights(), nu.weights(), &cost) {
        Err(e @ Error::InstanceTooLarge { .. }) => {
            return Err(anyhow::Error::new(e).context("use the `sinkhorn` subcommand for instances this large"))
        }
        other => other?,
    };
    Ok(json!({
        "cost": sig(sol.cost),
        "plan_nnz": sol.plan.nnz(0.0),
        "dual_gap": sig(sol.duality_gap()),
        "pivots": sol.pivots,
    }))
}

pub fn run_sinkhorn(config: &RunConfig, source: &Path, target: &Path) -> Result<Value> {
    let (mu, nu) = (load_measure(source)?, load_measure(target)?);
    let cost = build_cost_matrix(mu.support(), nu.support(), config.p)?;
    let lambda = config.lambda.resolve([&cost])?;
    let opts = sinkhorn_options(config);
    let sol = solve_smoothed(mu.weights(), nu.weights(), &cost, lambda, &opts)?;
    Ok(json!({
        "lambda": sig(lambda),
        "transport_cost": sig(sol.transport_cost),
        "regularized_cost": sig(sol.regularized_cost),
        "dual_objective": sig(sol.dual_objective),
        "iterations": sol.iterations,
        "marginal_error": sig(sol.marginal_error),
        "variant": if config.log_domain { "log-domain" } else { "plain" },
    }))
}

/// Image height and width.
type Grid = (usize, usize);

/// Support for `bary-fixed`: a CSV file, the shared pixel grid of PGM
/// inputs, or the pooled atoms of CSV inputs. Also returns the grid shape.
fn fixed_support(
    inputs: &[&Path],
    measures: &[DiscreteMeasure],
    support: Option<&Path>,
) -> Result<(Array2<f64>, Option<Grid>)> {
    if let Some(path) = support {
        return Ok((read_measure_csv(path)?.support().to_owned(), None));
    }
    if inputs.iter().all(|p| is_pgm(p)) {
        let mut shape = None;
        for path in inputs {
            let dim = read_pgm(path)?.dim();
            if shape.is_some_and(|s| s != dim) {
                bail!(
                    "{}: image is {}x{}, expected the shared grid of the other inputs",
                    path.display(),
                    dim.0,
                    dim.1
                );
            }
            shape = Some(dim);
        }
        let (h, w) = shape.expect("at least one input");
        return Ok((grid_support(h, w), Some((h, w))));
    }
    Ok((pooled_atoms(measures).0, None))
}

fn fixed_problem(config: &RunConfig, support: Array2<f64>, measures: Vec<DiscreteMeasure>) -> FixedBarycenterProblem {
    let mut problem = FixedBarycenterProblem::new(support, measures)
        .with_theta(config.constraint)
        .with_regularization(config.lambda)
        .with_p(config.p)
        .with_sinkhorn(inner_options(config));
    if let Some(tol) = config.tol {
        problem = problem.with_tol(tol);
    }
    if let Some(max_iter) = config.max_iter {
        problem = problem.with_max_outer(max_iter);
    }
    if let Some(t0) = config.t0 {
        problem = problem.with_t0(t0);
    }
    problem
}

/// Writes the weights as a PGM on the grid, scaled to a maximum of 1.
fn write_weight_image(path: &Path, weights: ArrayView1<f64>, (h, w): Grid) -> Result<()> {
    let image = weights.to_owned().into_shape_with_order((h, w))?;
    Ok(write_pgm(path, normalize_for_display(image.view()).view())?)
}

pub fn run_bary_fixed(config: &RunConfig, inputs: &[PathBuf], support: Option<&Path>) -> Result<Value> {
    if inputs.is_empty() {
        bail!("bary-fixed needs at least one input measure");
    }
    let paths: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let measures = paths.iter().map(|p| load_measure(p)).collect::<Result<Vec<_>>>()?;
    let (support, grid) = fixed_support(&paths, &measures, support)?;
    let result = barycenter_fixed_support(&fixed_problem(config, support.clone(), measures))?;

    write_points_csv(
        config.out.join("barycenter.csv"),
        support.view(),
        &result.weights.to_vec(),
    )?;
    if let Some(grid) = grid {
        write_weight_image(&config.out.join("barycenter.pgm"), result.weights.view(), grid)?;
    }
    write_trace(&config.out.join("trace.jsonl"), &result.trace)?;
    Ok(json!({
        "objective": sig(result.objective),
        "initial_objective": sig(result.trace.records()[0].objective),
        "lambda": sig(result.lambda),
        "iterations": result.iterations,
        "t0": sig(result.t0),
        "support_size": support.ncols(),
        "measures": inputs.len(),
    }))
}

fn initialization(init: &InitSource, seed: u64) -> Result<Initialization> {
    Ok(match init {
        InitSource::Random => Initialization::RandomSubset { seed },
        InitSource::File(path) => Initialization::Points(read_measure_csv(path)?.support().to_owned()),
    })
}

fn free_problem(
    config: &RunConfig,
    measures: Vec<DiscreteMeasure>,
    k: usize,
    init: &InitSource,
) -> Result<FreeBarycenterProblem> {
    if config.p != 2.0 {
        return Err(Error::Unsupported(format!("free-support barycenters need p = 2, got {}", config.p)).into());
    }
    let mut problem = FreeBarycenterProblem::new(measures, k)
        .with_theta(config.constraint)
        .with_regularization(config.lambda)
        .with_init(initialization(init, config.seed)?)
        .with_sinkhorn(inner_options(config));
    if let Some(tol) = config.tol {
        problem = problem.with_tol(tol);
    }
    if let Some(max_iter) = config.max_iter {
        problem = problem.with_max_outer(max_iter);
    }
    if let Some(t0) = config.t0 {
        problem = problem.with_t0(t0);
    }
    if let Some(theta) = config.step {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::InvalidArgument(format!("step {theta} outside [0, 1]")).into());
        }
        problem = problem.with_step(StepRule::Fixed(theta));
    }
    Ok(problem)
}

pub fn run_bary_free(config: &RunConfig, inputs: &[PathBuf], k: usize, init: &InitSource) -> Result<Value> {
    if inputs.is_empty() {
        bail!("bary-free needs at least one input measure");
    }
    let measures = inputs.iter().map(|p| load_measure(p)).collect::<Result<Vec<_>>>()?;
    let result = barycenter_free_support(&free_problem(config, measures, k, init)?)?;
    write_points_csv(
        config.out.join("barycenter.csv"),
        result.support.view(),
        &result.weights.to_vec(),
    )?;
    write_trace(&config.out.join("trace.jsonl"), &result.trace)?;
    Ok(json!({
        "objective": sig(result.objective),
        "lambda": sig(result.lambda),
        "iterations": result.iterations,
        "k": k,
        "measures": inputs.len(),
    }))
}

pub fn run_cluster(config: &RunConfig, input: &ClusterInput, k: usize, init: &InitSource) -> Result<Value> {
    let points = match input {
        ClusterInput::File(path) => load_measure(path)?,
        ClusterInput::Synthetic(spec) => {
            let m = gaussian_mixture(spec, config.seed)?;
            write_measure_csv(config.out.join("points.csv"), &m)?;
            m
        }
    };
    let template = free_problem(config, vec![points], k, init)?;
    let cmp = compare_constraints(&template)?;
    let (free, uniform) = (&cmp.free, &cmp.uniform);
    write_points_csv(
        config.out.join("free_centroids.csv"),
        free.support.view(),
        &free.weights.to_vec(),
    )?;
    write_points_csv(
        config.out.join("uniform_centroids.csv"),
        uniform.support.view(),
        &uniform.weights.to_vec(),
    )?;
    Ok(json!({
        "lambda": sig(cmp.lambda),
        "k": k,
        "free_objective": sig(free.objective),
        "uniform_objective": sig(uniform.objective),
        "free_iterations": free.iterations,
        "uniform_iterations": uniform.iterations,
        "free_wall_ms": sig(cmp.free_wall_ms),
        "uniform_wall_ms": sig(cmp.uniform_wall_ms),
        "uniform_objective_geq_free": uniform.objective >= free.objective,
    }))
}

/// `count` same-size squares at seeded positions.
fn square_images(size: usize, count: usize, seed: u64) -> Vec<Array2<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.15;
    (0..count)
        .map(|_| {
            let center = (rng.random_range(half..1.0 - half), rng.random_range(half..1.0 - half));
            square_image(size, center, half)
        })
        .collect()
}

pub fn demo_images(size: usize, count: usize, shape: Shape, seed: u64) -> Result<Vec<Array2<f64>>> {
    if count == 0 {
        bail!("ellipses-demo needs at least one image");
    }
    Ok(match shape {
        Shape::Ellipses => nested_ellipse_images(size, count, seed)?,
        Shape::Squares => square_images(size, count, seed),
    })
}

/// Default outer iterations for the demo.
pub const DEMO_OUTER_ITERATIONS: usize = 60;

/// Generates the demo images and computes their fixed-support barycenter on
/// the shared grid.
pub fn demo_barycenter(
    config: &RunConfig,
    size: usize,
    count: usize,
    shape: Shape,
) -> Result<(Vec<Array2<f64>>, FixedBarycenterResult)> {
    let images = demo_images(size, count, shape, config.seed)?;
    let measures = images
        .iter()
        .map(|image| grid_measure_from_intensities(image.view(), true))
        .collect::<barycenter_core::Result<Vec<_>>>()?;
    let mut config = config.clone();
    config.max_iter = config.max_iter.or(Some(DEMO_OUTER_ITERATIONS));
    let result = barycenter_fixed_support(&fixed_problem(&config, grid_support(size, size), measures))?;
    Ok((images, result))
}

pub fn run_ellipses_demo(config: &RunConfig, size: usize, count: usize, shape: Shape) -> Result<Value> {
    let (images, result) = demo_barycenter(config, size, count, shape)?;
    for (i, image) in images.iter().enumerate() {
        write_pgm(
            config.out.join(format!("input_{i:02}.pgm")),
            normalize_for_display(image.view()).view(),
        )?;
    }
    write_weight_image(&config.out.join("barycenter.pgm"), result.weights.view(), (size, size))?;
    write_points_csv(
        config.out.join("barycenter.csv"),
        grid_support(size, size).view(),
        &result.weights.to_vec(),
    )?;
    write_trace(&config.out.join("trace.jsonl"), &result.trace)?;
    let initial = result.trace.records()[0].objective;
    Ok(json!({
        "objective": sig(result.objective),
        "initial_objective": sig(initial),
        "ratio": sig(result.objective / initial),
        "lambda": sig(result.lambda),
        "iterations": result.iterations,
        "images": count,
        "grid": size,
    }))
}
