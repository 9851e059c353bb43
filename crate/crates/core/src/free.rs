//! Free-support 2-Wasserstein barycenters with at most `k` atoms.
//!
//! Each outer iteration re-optimizes the weights on the current support,
//! then moves the atoms by a relaxed Newton step towards the barycenters of
//! their transported mass. With one input measure, exact plans and the full
//! simplex this is Lloyd's algorithm; with uniform weights it is balanced
//! k-means.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exact::solve_exact;
use crate::fixed::{evaluate, inner_sinkhorn_options, optimize_weights, BarycenterTrace, TraceRecord, WeightSearch};
use crate::measures::{build_cost_matrix, CostMatrix, DiscreteMeasure, WeightConstraintSet};
use crate::sinkhorn::{Regularization, SinkhornOptions, TransportBatch};

/// Atoms with less mass than this keep their location during a Newton step.
pub const FROZEN_WEIGHT: f64 = 1e-9;

/// Step sizes tried, in order, by the line search.
const LINE_SEARCH_STEPS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// First of 1, 1/2, 1/4, 1/8 that does not increase the objective;
    /// 1/8 if none does.
    LineSearch,
    Fixed(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initialization {
    /// Starting support, `d x k`.
    Points(Array2<f64>),
    /// `k` distinct atoms of the pooled inputs, drawn without replacement
    /// with probability proportional to pooled mass.
    RandomSubset { seed: u64 },
}

/// How the transport plans of an outer iteration are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanMode {
    Smoothed,
    /// Exact plans. Weights come in closed form, so only one input measure
    /// with the full simplex, or the uniform singleton, is supported.
    Exact,
}

#[derive(Clone, Debug)]
pub struct FreeBarycenterProblem {
    pub measures: Vec<DiscreteMeasure>,
    pub k: usize,
    pub theta: WeightConstraintSet,
    pub regularization: Regularization,
    pub step: StepRule,
    pub init: Initialization,
    /// Starting weights; the constraint set's center when `None`.
    pub init_weights: Option<Array1<f64>>,
    pub max_outer: usize,
    /// Relative objective change over 3 outer iterations that ends the run.
    pub tol: f64,
    /// Weight iterations per outer iteration.
    pub inner_iters: usize,
    pub t0: f64,
    pub sinkhorn: SinkhornOptions,
    pub plan_mode: PlanMode,
}

impl FreeBarycenterProblem {
    pub fn new(measures: Vec<DiscreteMeasure>, k: usize) -> Self {
        Self {
            measures,
            k,
            theta: WeightConstraintSet::FullSimplex,
            regularization: Regularization::AUTO,
            step: StepRule::LineSearch,
            init: Initialization::RandomSubset { seed: 0 },
            init_weights: None,
            max_outer: 100,
            tol: 1e-5,
            inner_iters: 50,
            t0: 1.0,
            sinkhorn: inner_sinkhorn_options(),
            plan_mode: PlanMode::Smoothed,
        }
    }

    pub fn with_theta(mut self, theta: WeightConstraintSet) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_regularization(mut self, regularization: Regularization) -> Self {
        self.regularization = regularization;
        self
    }

    pub fn with_step(mut self, step: StepRule) -> Self {
        self.step = step;
        self
    }

    pub fn with_init(mut self, init: Initialization) -> Self {
        self.init = init;
        self
    }

    pub fn with_max_outer(mut self, max_outer: usize) -> Self {
        self.max_outer = max_outer;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_t0(mut self, t0: f64) -> Self {
        self.t0 = t0;
        self
    }

    pub fn with_plan_mode(mut self, plan_mode: PlanMode) -> Self {
        self.plan_mode = plan_mode;
        self
    }

    pub fn with_sinkhorn(mut self, sinkhorn: SinkhornOptions) -> Self {
        self.sinkhorn = sinkhorn;
        self
    }

    fn validate(&self) -> Result<usize> {
        let first = self
            .measures
            .first()
            .ok_or_else(|| Error::InvalidArgument("at least one input measure is required".into()))?;
        let d = first.dim();
        if let Some(i) = self.measures.iter().position(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch(format!(
                "measure {i} lives in R^{}, measure 0 in R^{d}",
                self.measures[i].dim()
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if let StepRule::Fixed(theta) = self.step {
            if !(0.0..=1.0).contains(&theta) {
                return Err(Error::InvalidArgument(format!("step {theta} outside [0, 1]")));
            }
        }
        if self.max_outer == 0 || self.inner_iters == 0 {
            return Err(Error::InvalidArgument("iteration budgets must be positive".into()));
        }
        if self.plan_mode == PlanMode::Exact {
            let closed_form = matches!(
                (self.theta, self.measures.len()),
                (WeightConstraintSet::UniformSingleton, _) | (WeightConstraintSet::FullSimplex, 1)
            );
            if !closed_form {
                return Err(Error::Unsupported(
                    "exact plans need the uniform constraint, or one measure with the full simplex".into(),
                ));
            }
        }
        self.theta.validate(self.k)?;
        Ok(d)
    }
}

#[derive(Clone, Debug)]
pub struct FreeBarycenterResult {
    /// Barycenter atoms, `d x k`.
    pub support: Array2<f64>,
    pub weights: Array1<f64>,
    /// `(1/N) sum_i <T_i, M_i>` at `(support, weights)`, from cold-started
    /// solves so that equal inputs give equal values.
    pub objective: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub initial_support: Array2<f64>,
    pub trace: BarycenterTrace,
}

/// `X_new = (1 - theta) X + theta (1/N) sum_i Y_i T_i^T diag(1/a)`.
///
/// `plans` holds `(T_i, Y_i)` with `T_i` of size `k x m_i` and `Y_i` of
/// size `d x m_i`.
pub fn newton_location_update(
    x: ArrayView2<f64>,
    a: ArrayView1<f64>,
    plans: &[(ArrayView2<f64>, ArrayView2<f64>)],
    theta: f64,
) -> Result<Array2<f64>> {
    if let Some(i) = a.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::InvalidArgument(format!("weight {i} is not positive")));
    }
    newton_step(x, a, plans, theta, 0.0)
}

fn newton_step(
    x: ArrayView2<f64>,
    a: ArrayView1<f64>,
    plans: &[(ArrayView2<f64>, ArrayView2<f64>)],
    theta: f64,
    frozen_below: f64,
) -> Result<Array2<f64>> {
    let (d, k) = x.dim();
    if a.len() != k {
        return Err(Error::DimensionMismatch(format!("{} weights for {k} atoms", a.len())));
    }
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidArgument(format!("step {theta} outside [0, 1]")));
    }
    if plans.is_empty() {
        return Err(Error::InvalidArgument("no transport plans".into()));
    }
    let mut target = Array2::<f64>::zeros((d, k));
    for (i, (plan, y)) in plans.iter().enumerate() {
        if plan.nrows() != k || y.nrows() != d || plan.ncols() != y.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "plan {i} is {}x{}, points are {}x{}",
                plan.nrows(),
                plan.ncols(),
                y.nrows(),
                y.ncols()
            )));
        }
        target += &y.dot(&plan.t());
    }
    let n = plans.len() as f64;
    let mut out = x.to_owned();
    for j in 0..k {
        if a[j] < frozen_below {
            continue;
        }
        for r in 0..d {
            out[[r, j]] = (1.0 - theta) * x[[r, j]] + theta * target[[r, j]] / (n * a[j]);
        }
    }
    Ok(out)
}

/// Pools the atoms of all measures with mass `b_i / N`, merging identical
/// points. Returns points (`d x m`) and masses.
pub fn pooled_atoms(measures: &[DiscreteMeasure]) -> (Array2<f64>, Vec<f64>) {
    let d = measures.first().map_or(0, |m| m.dim());
    let n = measures.len() as f64;
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut coords: Vec<f64> = Vec::new();
    let mut mass: Vec<f64> = Vec::new();
    for m in measures {
        for (col, &w) in m.support().columns().into_iter().zip(m.weights()) {
            if w <= 0.0 {
                continue;
            }
            // +0.0 and -0.0 are the same point
            let key: Vec<u64> = col.iter().map(|&v| (v + 0.0).to_bits()).collect();
            match index.get(&key) {
                Some(&i) => mass[i] += w / n,
                None => {
                    index.insert(key, mass.len());
                    coords.extend(col.iter());
                    mass.push(w / n);
                }
            }
        }
    }
    let m = mass.len();
    let points = Array2::from_shape_vec((m, d), coords)
        .expect("consistent dims")
        .reversed_axes();
    (points.as_standard_layout().to_owned(), mass)
}

/// `k` distinct columns of `points`, sampled without replacement with
/// probability proportional to `mass`, in index order.
pub fn sample_support(points: ArrayView2<f64>, mass: &[f64], k: usize, seed: u64) -> Result<Array2<f64>> {
    let m = points.ncols();
    if k > m {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the {m} distinct input points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample_weighted(&mut rng, m, |i| mass[i], k)
        .map_err(|e| Error::InvalidArgument(format!("cannot sample initial support: {e}")))?
        .into_vec();
    picked.sort_unstable();
    Ok(points.select(Axis(1), &picked))
}

fn initial_support(problem: &FreeBarycenterProblem, d: usize) -> Result<Array2<f64>> {
    match &problem.init {
        Initialization::Points(x) => {
            if x.dim() != (d, problem.k) {
                return Err(Error::DimensionMismatch(format!(
                    "initial support is {}x{}, expected {d}x{}",
                    x.nrows(),
                    x.ncols(),
                    problem.k
                )));
            }
            Ok(x.clone())
        }
        Initialization::RandomSubset { seed } => {
            let (points, mass) = pooled_atoms(&problem.measures);
            sample_support(points.view(), &mass, problem.k, *seed)
        }
    }
}

/// Computes objective, weights and plans for a given support.
struct Oracle<'a> {
    problem: &'a FreeBarycenterProblem,
    measures: Vec<DiscreteMeasure>,
    lambda: f64,
    batch: Option<TransportBatch>,
    /// Step size kept from the last weight step, so halvings are not redone.
    t0: f64,
}

struct Step {
    weights: Array1<f64>,
    objective: f64,
    inner_iters: usize,
    plans: Vec<Array2<f64>>,
}

impl<'a> Oracle<'a> {
    fn new(problem: &'a FreeBarycenterProblem, x0: ArrayView2<f64>) -> Result<Self> {
        let measures: Vec<DiscreteMeasure> = problem.measures.iter().map(DiscreteMeasure::pruned).collect();
        let costs = costs_for(x0, &measures)?;
        let lambda = match problem.plan_mode {
            PlanMode::Smoothed => problem.regularization.resolve(costs.iter())?,
            // unused by exact plans; still reported
            PlanMode::Exact => problem.regularization.resolve(costs.iter()).unwrap_or(f64::INFINITY),
        };
        let batch = match problem.plan_mode {
            PlanMode::Smoothed => {
                let items = measures
                    .iter()
                    .zip(costs)
                    .map(|(m, c)| (m.weights().to_owned(), c))
                    .collect();
                Some(TransportBatch::new(items, lambda, problem.sinkhorn.clone())?)
            }
            PlanMode::Exact => None,
        };
        Ok(Self {
            problem,
            measures,
            lambda,
            batch,
            t0: problem.t0,
        })
    }

    fn set_support(&mut self, x: ArrayView2<f64>) -> Result<Vec<CostMatrix>> {
        let costs = costs_for(x, &self.measures)?;
        if let Some(batch) = &mut self.batch {
            batch.set_costs(costs.clone())?;
        }
        Ok(costs)
    }

    /// Weight step at support `x`, starting from `a`.
    fn optimize_weights(&mut self, x: ArrayView2<f64>, a: &Array1<f64>, clock: Instant) -> Result<Step> {
        let costs = self.set_support(x)?;
        match &mut self.batch {
            Some(batch) => {
                let search = WeightSearch {
                    theta: self.problem.theta,
                    t0: self.t0,
                    max_iter: self.problem.inner_iters,
                    tol: 1e-6,
                    max_halvings: 10,
                };
                let mut scratch = BarycenterTrace::new();
                let out = optimize_weights(batch, a, &search, &mut scratch, clock)?;
                self.t0 = out.t0;
                Ok(Step {
                    weights: out.weights,
                    objective: out.evaluation.objective,
                    inner_iters: out.evaluation.inner_iters,
                    plans: out.evaluation.plans,
                })
            }
            None => {
                let weights = match self.problem.theta {
                    WeightConstraintSet::UniformSingleton => self.problem.theta.prox_center(x.ncols()),
                    _ => nearest_pushforward(&costs[0], self.measures[0].weights()),
                };
                self.exact_at(&costs, weights)
            }
        }
    }

    /// Objective and plans at `(x, a)` with `a` held fixed.
    fn evaluate(&mut self, x: ArrayView2<f64>, a: &Array1<f64>) -> Result<Step> {
        let costs = self.set_support(x)?;
        match &mut self.batch {
            Some(batch) => {
                let e = evaluate(batch, a.view())?;
                Ok(Step {
                    weights: a.clone(),
                    objective: e.objective,
                    inner_iters: e.inner_iters,
                    plans: e.plans,
                })
            }
            None => self.exact_at(&costs, a.clone()),
        }
    }

    fn exact_at(&self, costs: &[CostMatrix], weights: Array1<f64>) -> Result<Step> {
        let mut objective = 0.0;
        let mut plans = Vec::with_capacity(costs.len());
        for (i, (m, c)) in self.measures.iter().zip(costs).enumerate() {
            let sol = solve_exact(weights.view(), m.weights(), c).map_err(|e| Error::subproblem(i, e))?;
            objective += sol.cost;
            plans.push(sol.plan.into_matrix());
        }
        Ok(Step {
            weights,
            objective: objective / costs.len() as f64,
            inner_iters: 0,
            plans,
        })
    }

    /// Objective from cold starts, so equal inputs give bitwise equal values.
    fn cold_objective(&self, x: ArrayView2<f64>, a: &Array1<f64>) -> Result<f64> {
        let costs = costs_for(x, &self.measures)?;
        match self.problem.plan_mode {
            PlanMode::Smoothed => {
                let items = self
                    .measures
                    .iter()
                    .zip(costs)
                    .map(|(m, c)| (m.weights().to_owned(), c))
                    .collect();
                let mut batch = TransportBatch::new(items, self.lambda, self.problem.sinkhorn.clone())?;
                Ok(evaluate(&mut batch, a.view())?.objective)
            }
            PlanMode::Exact => Ok(self.exact_at(&costs, a.clone())?.objective),
        }
    }

    fn newton_target(
        &self,
        x: ArrayView2<f64>,
        a: &Array1<f64>,
        plans: &[Array2<f64>],
        theta: f64,
    ) -> Result<Array2<f64>> {
        let pairs: Vec<_> = plans
            .iter()
            .zip(&self.measures)
            .map(|(t, m)| (t.view(), m.support()))
            .collect();
        newton_step(x, a.view(), &pairs, theta, FROZEN_WEIGHT)
    }
}

fn costs_for(x: ArrayView2<f64>, measures: &[DiscreteMeasure]) -> Result<Vec<CostMatrix>> {
    measures
        .iter()
        .map(|m| build_cost_matrix(x, m.support(), 2.0))
        .collect()
}

/// Mass of `b` carried to each row's nearest atom (lowest index on ties).
fn nearest_pushforward(cost: &CostMatrix, b: ArrayView1<f64>) -> Array1<f64> {
    let m = cost.entries();
    let mut a = Array1::zeros(m.nrows());
    for (j, &bj) in b.iter().enumerate() {
        a[argmin(m.column(j))] += bj;
    }
    a
}

fn argmin(v: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Alternating weight and location optimization.
pub fn barycenter_free_support(problem: &FreeBarycenterProblem) -> Result<FreeBarycenterResult> {
    let d = problem.validate()?;
    let clock = Instant::now();
    let x0 = initial_support(problem, d)?;
    let a0 = match &problem.init_weights {
        Some(a) => {
            if a.len() != problem.k || !problem.theta.contains(a.view(), 1e-10) || a.iter().any(|&w| !(w > 0.0)) {
                return Err(Error::InvalidArgument(
                    "initial weights must be positive and inside the constraint set".into(),
                ));
            }
            a.clone()
        }
        None => problem.theta.prox_center(problem.k),
    };
    let mut oracle = Oracle::new(problem, x0.view())?;

    let mut x = x0.clone();
    let mut a = a0.clone();
    let mut trace = BarycenterTrace::new();
    let mut history: Vec<f64> = Vec::new();
    let mut best: Option<(Array2<f64>, Array1<f64>, f64)> = None;
    let mut iterations = 0;

    // evaluation accepted by the previous location step, at the current (x, a)
    let mut carried: Option<Step> = None;

    for it in 1..=problem.max_outer {
        iterations = it;
        let mut step = oracle.optimize_weights(x.view(), &a, clock)?;
        // inexact inner solves can make the weight step look worse than its start
        if let Some(prev) = carried.take() {
            if prev.objective < step.objective {
                step = prev;
            }
        }
        a = step.weights.clone();
        let mut inner_iters = step.inner_iters;

        let accepted = match problem.step {
            StepRule::Fixed(theta) => {
                let x_try = oracle.newton_target(x.view(), &a, &step.plans, theta)?;
                let e = oracle.evaluate(x_try.view(), &a)?;
                inner_iters += e.inner_iters;
                Some((x_try, e))
            }
            StepRule::LineSearch => {
                let mut accepted = None;
                for theta in LINE_SEARCH_STEPS {
                    let x_try = oracle.newton_target(x.view(), &a, &step.plans, theta)?;
                    let e = oracle.evaluate(x_try.view(), &a)?;
                    inner_iters += e.inner_iters;
                    if e.objective <= step.objective {
                        accepted = Some((x_try, e));
                        break;
                    }
                }
                accepted
            }
        };
        // a rejected line search leaves the support in place
        let next = match accepted {
            Some((x_next, e)) => {
                x = x_next;
                e
            }
            None => step,
        };
        let objective = next.objective;
        carried = Some(next);

        trace.push(TraceRecord {
            iter: it,
            objective,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            inner_iters,
            step_norm: 0.0,
            weights: a.clone(),
        });
        if best.as_ref().is_none_or(|b| objective < b.2) {
            best = Some((x.clone(), a.clone(), objective));
        }
        history.push(objective);
        if it > 3 {
            let old = history[it - 4];
            if (objective - old).abs() <= problem.tol * old.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }

    let (mut support, mut weights, _) = best.expect("at least one outer iteration");
    let mut objective = oracle.cold_objective(support.view(), &weights)?;
    // never return something worse than the starting point
    let start = oracle.cold_objective(x0.view(), &a0)?;
    if start < objective {
        support = x0.clone();
        weights = a0;
        objective = start;
    }
    Ok(FreeBarycenterResult {
        support,
        weights,
        objective,
        lambda: oracle.lambda,
        iterations,
        initial_support: x0,
        trace,
    })
}

/// Free and uniform-weight barycenters of the same data from the same
/// starting support and `lambda`.
#[derive(Clone, Debug)]
pub struct ConstraintComparison {
    pub free: FreeBarycenterResult,
    pub uniform: FreeBarycenterResult,
    pub lambda: f64,
    pub free_wall_ms: f64,
    pub uniform_wall_ms: f64,
}

/// Runs `template` with the uniform constraint and with the full simplex.
///
/// The uniform optimum is feasible for the simplex problem, so the simplex
/// run is also restarted from it and the better of the two simplex runs is
/// kept; the free objective therefore never exceeds the uniform one.
pub fn compare_constraints(template: &FreeBarycenterProblem) -> Result<ConstraintComparison> {
    let d = template.validate()?;
    let x0 = initial_support(template, d)?;
    let lambda = Oracle::new(template, x0.view())?.lambda;
    let base = FreeBarycenterProblem {
        regularization: Regularization::Fixed(lambda),
        init_weights: None,
        ..template.clone()
    };

    let clock = Instant::now();
    let uniform = barycenter_free_support(&FreeBarycenterProblem {
        theta: WeightConstraintSet::UniformSingleton,
        init: Initialization::Points(x0.clone()),
        ..base.clone()
    })?;
    let uniform_wall_ms = clock.elapsed().as_secs_f64() * 1e3;

    let clock = Instant::now();
    let simplex = FreeBarycenterProblem {
        theta: WeightConstraintSet::FullSimplex,
        ..base
    };
    let from_start = barycenter_free_support(&FreeBarycenterProblem {
        init: Initialization::Points(x0),
        ..simplex.clone()
    })?;
    let from_uniform = barycenter_free_support(&FreeBarycenterProblem {
        init: Initialization::Points(uniform.support.clone()),
        ..simplex
    })?;
    let free = if from_uniform.objective < from_start.objective {
        from_uniform
    } else {
        from_start
    };
    Ok(ConstraintComparison {
        free,
        uniform,
        lambda,
        free_wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        uniform_wall_ms,
    })
}

/// Result of weighted k-means.
#[derive(Clone, Debug)]
pub struct KMeans {
    /// Centroids, `d x k`.
    pub centroids: Array2<f64>,
    /// Centroid index of every input point.
    pub assignment: Vec<usize>,
    /// `sum_j b_j |y_j - c(j)|^2`.
    pub cost: f64,
    pub iterations: usize,
}

/// Nearest-centroid assignment (lowest index on ties).
pub fn assign_nearest(y: ArrayView2<f64>, centroids: ArrayView2<f64>) -> Vec<usize> {
    y.columns()
        .into_iter()
        .map(|p| {
            let dist: Array1<f64> = centroids.columns().into_iter().map(|c| sq_dist(p, c)).collect();
            argmin(dist.view())
        })
        .collect()
}

fn sq_dist(p: ArrayView1<f64>, q: ArrayView1<f64>) -> f64 {
    p.iter().zip(q.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// One Lloyd iteration: assign every point to its nearest centroid, then
/// move each centroid to the weighted mean of its points. A centroid left
/// without mass is moved to the point farthest from its own centroid.
pub fn lloyd_step(y: ArrayView2<f64>, b: ArrayView1<f64>, centroids: ArrayView2<f64>) -> (Array2<f64>, Vec<usize>) {
    let (d, k) = centroids.dim();
    let assignment = assign_nearest(y, centroids);
    let mut sums = Array2::<f64>::zeros((d, k));
    let mut mass = vec![0.0; k];
    for (j, (p, &c)) in y.columns().into_iter().zip(&assignment).enumerate() {
        sums.column_mut(c).scaled_add(b[j], &p);
        mass[c] += b[j];
    }
    let mut out = centroids.to_owned();
    let mut taken = vec![false; y.ncols()];
    for (c, &mc) in mass.iter().enumerate() {
        if mc > 0.0 {
            out.column_mut(c).assign(&(&sums.column(c) / mc));
        } else {
            let far = (0..y.ncols()).filter(|&j| !taken[j]).max_by(|&i, &j| {
                let di = sq_dist(y.column(i), centroids.column(assignment[i]));
                let dj = sq_dist(y.column(j), centroids.column(assignment[j]));
                di.total_cmp(&dj).then(j.cmp(&i))
            });
            if let Some(j) = far {
                taken[j] = true;
                out.column_mut(c).assign(&y.column(j));
            }
        }
    }
    (out, assignment)
}

/// Weighted Lloyd iterations from `init` until the assignment is stable.
pub fn lloyd_from(y: ArrayView2<f64>, b: ArrayView1<f64>, init: ArrayView2<f64>, max_iter: usize) -> KMeans {
    let mut centroids = init.to_owned();
    let mut assignment = assign_nearest(y, centroids.view());
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (next, _) = lloyd_step(y, b, centroids.view());
        let moved = next != centroids;
        centroids = next;
        let new_assignment = assign_nearest(y, centroids.view());
        let stable = new_assignment == assignment;
        assignment = new_assignment;
        if stable && !moved {
            break;
        }
    }
    let cost = y
        .columns()
        .into_iter()
        .zip(&assignment)
        .zip(b.iter())
        .map(|((p, &c), &w)| w * sq_dist(p, centroids.column(c)))
        .sum();
    KMeans {
        centroids,
        assignment,
        cost,
        iterations,
    }
}

/// Weighted k-means seeded with `k` distinct points sampled by mass.
pub fn lloyd_kmeans(y: ArrayView2<f64>, b: ArrayView1<f64>, k: usize, seed: u64) -> Result<KMeans> {
    if y.ncols() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} points, {} weights",
            y.ncols(),
            b.len()
        )));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let measure = DiscreteMeasure::new(y.to_owned(), b.to_owned())?;
    let (points, mass) = pooled_atoms(std::slice::from_ref(&measure));
    let init = sample_support(points.view(), &mass, k, seed)?;
    Ok(lloyd_from(y, b, init.view(), 1000))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn newton_fixed_point_and_noop() {
        let x = array![[0.0, 1.0, 3.0]];
        let a = array![0.2, 0.5, 0.3];
        let t = Array2::from_diag(&a);
        let plans = [(t.view(), x.view())];
        let same = newton_location_update(x.view(), a.view(), &plans, 1.0).unwrap();
        for (p, q) in same.iter().zip(x.iter()) {
            assert!((p - q).abs() < 1e-15);
        }
        let moved = newton_location_update(array![[7.0, 8.0, 9.0]].view(), a.view(), &plans, 0.0).unwrap();
        assert_eq!(moved, array![[7.0, 8.0, 9.0]]);
    }

    #[test]
    fn newton_midpoint_of_two_diracs() {
        let x = array![[5.0]];
        let a = array![1.0];
        let t = array![[1.0]];
        let (y1, y2) = (array![[0.0]], array![[2.0]]);
        let plans = [(t.view(), y1.view()), (t.view(), y2.view())];
        assert_eq!(
            newton_location_update(x.view(), a.view(), &plans, 1.0).unwrap(),
            array![[1.0]]
        );
    }

    #[test]
    fn newton_rejects_zero_weight() {
        let x = array![[0.0, 1.0]];
        let t = array![[0.0], [1.0]];
        let y = array![[1.0]];
        assert!(newton_location_update(x.view(), array![0.0, 1.0].view(), &[(t.view(), y.view())], 1.0).is_err());
    }

    #[test]
    fn lloyd_examples() {
        let y = array![[0.0, 1.0, 5.0, 6.0]];
        let b = Array1::from_elem(4, 0.25);
        for seed in 0..10 {
            let km = lloyd_kmeans(y.view(), b.view(), 2, seed).unwrap();
            let mut c = km.centroids.row(0).to_vec();
            c.sort_by(f64::total_cmp);
            assert_eq!(c, vec![0.5, 5.5], "seed {seed}");
        }
        let km = lloyd_kmeans(y.view(), b.view(), 4, 1).unwrap();
        assert_eq!(km.cost, 0.0);
        let mut c = km.centroids.row(0).to_vec();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 1.0, 5.0, 6.0]);

        let rep = array![[2.5, 2.5, 2.5]];
        let km = lloyd_kmeans(rep.view(), Array1::from_elem(3, 1.0 / 3.0).view(), 1, 0).unwrap();
        assert_eq!(km.centroids, array![[2.5]]);
    }

    #[test]
    fn lloyd_rejects_too_many_clusters() {
        let rep = array![[2.5, 2.5, 1.0]];
        assert!(lloyd_kmeans(rep.view(), Array1::from_elem(3, 1.0 / 3.0).view(), 3, 0).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded_at_farthest_point() {
        let y = array![[0.0, 1.0, 10.0]];
        let b = Array1::from_elem(3, 1.0 / 3.0);
        // the centroid at 100 attracts nothing
        let (c, _) = lloyd_step(y.view(), b.view(), array![[0.5, 100.0]].view());
        assert_eq!(c, array![[11.0 / 3.0, 10.0]]);
    }

    #[test]
    fn pooled_atoms_merge_duplicates() {
        let m1 = DiscreteMeasure::on_line(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let m2 = DiscreteMeasure::on_line(&[1.0, -0.0], &[0.25, 0.75]).unwrap();
        let (p, w) = pooled_atoms(&[m1, m2]);
        assert_eq!(p, array![[0.0, 1.0]]);
        assert_eq!(w, vec![0.625, 0.375]);
    }

    #[test]
    fn sampled_support_is_deterministic_and_distinct() {
        let y = array![[0.0, 1.0, 2.0, 3.0, 4.0, 5.0]];
        let mass = vec![1.0; 6];
        let s1 = sample_support(y.view(), &mass, 4, 9).unwrap();
        let s2 = sample_support(y.view(), &mass, 4, 9).unwrap();
        assert_eq!(s1, s2);
        let mut v = s1.row(0).to_vec();
        v.dedup();
        assert_eq!(v.len(), 4);
    }

    #[test]
    fn exact_mode_rejects_general_constraints() {
        let m = DiscreteMeasure::on_line(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        let problem = FreeBarycenterProblem::new(vec![m.clone(), m], 1).with_plan_mode(PlanMode::Exact);
        assert!(matches!(barycenter_free_support(&problem), Err(Error::Unsupported(_))));
    }
}
