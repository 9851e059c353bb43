//! Fixed-support barycenters: minimize `f(a) = (1/N) sum_i W(a, b_i)` over
//! weights `a` in a constraint set, with the support `X` held fixed.
//!
//! The smoothed objective is convex in `a` and its gradient is the average
//! of the zero-sum smoothed dual optima. It is minimized with an accelerated
//! entropic mirror-descent scheme: a query point `a` mixes the running
//! average `a_hat` with the mirror iterate `a_tilde`, and `a_tilde` takes a
//! KL-proximal step of size `t0 * beta`, with `beta = (t + 1) / 2`.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{build_cost_matrix, entropy, CostMatrix, DiscreteMeasure, WeightConstraintSet};
use crate::sinkhorn::{Regularization, SinkhornOptions, SinkhornVariant, SmoothedSolution, TransportBatch};

/// Floor applied after multiplicative updates so weights stay positive.
pub const WEIGHT_FLOOR: f64 = 1e-300;

/// Entropy tolerance of the level-set projection when the constraint is active.
const ENTROPY_TOL: f64 = 1e-8;

/// One logged iteration.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub wall_ms: f64,
    pub inner_iters: usize,
    /// `|a_t - a_{t-1}|_1` between consecutive query points.
    #[serde(skip)]
    pub step_norm: f64,
    /// Weights at which `objective` was evaluated.
    #[serde(skip)]
    pub weights: Array1<f64>,
}

/// Per-iteration log of a barycenter run.
#[derive(Clone, Debug, Default)]
pub struct BarycenterTrace {
    records: Vec<TraceRecord>,
}

impl BarycenterTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; iteration numbers must increase strictly.
    pub fn push(&mut self, record: TraceRecord) {
        if let Some(last) = self.records.last() {
            assert!(record.iter > last.iter, "trace iterations must increase");
        }
        self.records.push(record);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    fn truncate(&mut self, len: usize) {
        self.records.truncate(len);
    }

    /// One JSON object per line with keys `iter`, `objective`, `wall_ms`,
    /// `inner_iters`.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.records {
            let line = serde_json::json!({
                "iter": r.iter,
                "objective": crate::io::round_sig(r.objective),
                "wall_ms": crate::io::round_sig(r.wall_ms),
                "inner_iters": r.inner_iters,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Weights for a fixed support and a set of input measures.
#[derive(Clone, Debug)]
pub struct FixedBarycenterProblem {
    /// Barycenter support, `d x n`.
    pub support: Array2<f64>,
    pub measures: Vec<DiscreteMeasure>,
    pub p: f64,
    pub theta: WeightConstraintSet,
    pub regularization: Regularization,
    pub t0: f64,
    pub max_outer: usize,
    /// Relative objective change over 5 iterations that ends the run.
    pub tol: f64,
    /// How often `t0` may be halved when iteration 5 is worse than iteration 1.
    pub max_halvings: usize,
    pub sinkhorn: SinkhornOptions,
    /// Starting weights; the uniform vector when `None`.
    pub init: Option<Array1<f64>>,
}

impl FixedBarycenterProblem {
    pub fn new(support: Array2<f64>, measures: Vec<DiscreteMeasure>) -> Self {
        Self {
            support,
            measures,
            p: 2.0,
            theta: WeightConstraintSet::FullSimplex,
            regularization: Regularization::AUTO,
            t0: 1.0,
            max_outer: 300,
            tol: 1e-6,
            max_halvings: 10,
            sinkhorn: inner_sinkhorn_options(),
            init: None,
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

    pub fn with_p(mut self, p: f64) -> Self {
        self.p = p;
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

    pub fn with_sinkhorn(mut self, sinkhorn: SinkhornOptions) -> Self {
        self.sinkhorn = sinkhorn;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.measures.is_empty() {
            return Err(Error::InvalidArgument("at least one input measure is required".into()));
        }
        let d = self.support.nrows();
        if self.support.ncols() == 0 {
            return Err(Error::InvalidArgument("empty barycenter support".into()));
        }
        if let Some(i) = self.measures.iter().position(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch(format!(
                "measure {i} lives in R^{}, support in R^{d}",
                self.measures[i].dim()
            )));
        }
        if !(self.t0 > 0.0) || !self.t0.is_finite() {
            return Err(Error::InvalidArgument(format!("t0 must be positive, got {}", self.t0)));
        }
        if self.max_outer == 0 {
            return Err(Error::InvalidArgument("max_outer must be positive".into()));
        }
        self.theta.validate(self.support.ncols())
    }

    /// `M_i = M(X, Y_i)` for every input measure.
    pub fn cost_matrices(&self) -> Result<Vec<CostMatrix>> {
        self.measures
            .iter()
            .map(|m| build_cost_matrix(self.support.view(), m.support(), self.p))
            .collect()
    }
}

/// Sinkhorn settings for solves inside barycenter loops. A solve that stalls
/// or hits `max_iter` returns its last scaling instead of failing; its plan
/// is rounded onto the marginals before it is priced. Problems the plain
/// variant cannot handle move to the log domain.
pub fn inner_sinkhorn_options() -> SinkhornOptions {
    SinkhornOptions {
        require_convergence: false,
        variant: SinkhornVariant::Auto,
        stall_checks: Some(10),
        ..SinkhornOptions::default()
    }
}

#[derive(Clone, Debug)]
pub struct FixedBarycenterResult {
    /// Best weights found.
    pub weights: Array1<f64>,
    /// `(1/N) sum_i <T_i, M_i>` at `weights`.
    pub objective: f64,
    pub lambda: f64,
    /// Step size after any automatic halving.
    pub t0: f64,
    pub iterations: usize,
    pub trace: BarycenterTrace,
}

/// KL-proximal step from `a` along the scaled gradient `g`, onto `theta`.
///
/// On the simplex this is the multiplicative update `a * exp(-g)`,
/// renormalized. On an entropy level set the update is tempered,
/// `c ~ exp((log a - g) / (1 + nu))`, with the smallest `nu >= 0` such that
/// `H(c) >= tau`.
pub fn bregman_proximal_step(
    a: ArrayView1<f64>,
    g: ArrayView1<f64>,
    theta: WeightConstraintSet,
) -> Result<Array1<f64>> {
    let n = a.len();
    if g.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights, {} gradient entries",
            n,
            g.len()
        )));
    }
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument(
            "proximal center must be strictly positive".into(),
        ));
    }
    theta.validate(n)?;
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::ProxOverflow);
    }
    let logits: Array1<f64> = a.iter().zip(g.iter()).map(|(&x, &gi)| x.ln() - gi).collect();
    match theta {
        WeightConstraintSet::UniformSingleton => Ok(Array1::from_elem(n, 1.0 / n as f64)),
        WeightConstraintSet::FullSimplex => softmax_floored(&logits, 1.0),
        WeightConstraintSet::EntropyLevelSet(tau) => {
            let c = softmax_floored(&logits, 1.0)?;
            if entropy(c.view()) >= tau {
                return Ok(c);
            }
            // H(softmax(s * logits)) decreases in s; keep the feasible end
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            let mut best = Array1::from_elem(n, 1.0 / n as f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let c = softmax_floored(&logits, mid)?;
                let h = entropy(c.view());
                if h >= tau {
                    lo = mid;
                    best = c;
                    if h - tau <= ENTROPY_TOL {
                        break;
                    }
                } else {
                    hi = mid;
                }
            }
            Ok(best)
        }
    }
}

fn softmax_floored(logits: &Array1<f64>, scale: f64) -> Result<Array1<f64>> {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(scale * x));
    let mut c = logits.mapv(|x| (scale * x - max).exp().max(WEIGHT_FLOOR));
    let total = c.sum();
    if !total.is_finite() || !(total > 0.0) {
        return Err(Error::ProxOverflow);
    }
    c /= total;
    Ok(c)
}

/// Smoothed objective, its gradient, and solver bookkeeping at one point.
#[derive(Clone, Debug)]
pub struct Evaluation {
    /// `(1/N) sum_i <T_i, M_i>` over the rounded plans.
    pub objective: f64,
    /// `(1/N) sum_i (<T_i, M_i> - h(T_i) / lambda)`.
    pub regularized: f64,
    /// Average of the zero-sum smoothed dual optima.
    pub alpha_bar: Array1<f64>,
    pub inner_iters: usize,
    /// Smoothed plans rounded onto their exact marginals; `objective` is
    /// measured on these, so a solve stopped at `max_iter` still prices a
    /// feasible coupling.
    pub plans: Vec<Array2<f64>>,
    pub solutions: Vec<SmoothedSolution>,
}

pub(crate) fn evaluate(batch: &mut TransportBatch, a: ArrayView1<f64>) -> Result<Evaluation> {
    let solutions = batch.solve(a)?;
    let n_measures = solutions.len() as f64;
    let mut alpha_bar = Array1::zeros(a.len());
    let mut objective = 0.0;
    let mut regularized = 0.0;
    let mut inner_iters = 0;
    let mut plans = Vec::with_capacity(solutions.len());
    for (s, cost) in solutions.iter().zip(batch.costs()) {
        let plan = s.plan.rounded();
        objective += plan.cost(cost);
        plans.push(plan.into_matrix());
        alpha_bar += &s.alpha;
        regularized += s.regularized_cost;
        inner_iters += s.iterations;
    }
    alpha_bar /= n_measures;
    // re-center: the average of zero-sum vectors is zero-sum up to round-off
    let mean = alpha_bar.mean().unwrap_or(0.0);
    alpha_bar.mapv_inplace(|x| x - mean);
    if !objective.is_finite() || !alpha_bar.iter().all(|x| x.is_finite()) {
        return Err(Error::NumericalBreakdown {
            iterations: inner_iters,
        });
    }
    Ok(Evaluation {
        objective: objective / n_measures,
        regularized: regularized / n_measures,
        alpha_bar,
        inner_iters,
        plans,
        solutions,
    })
}

fn build_batch(
    support: ArrayView2<f64>,
    measures: &[DiscreteMeasure],
    p: f64,
    lambda: f64,
    opts: &SinkhornOptions,
) -> Result<TransportBatch> {
    let problems = measures
        .iter()
        .map(|m| {
            let m = m.pruned();
            let cost = build_cost_matrix(support, m.support(), p)?;
            Ok((m.weights().to_owned(), cost))
        })
        .collect::<Result<Vec<_>>>()?;
    TransportBatch::new(problems, lambda, opts.clone())
}

/// `(1/N) sum_i alpha_i` at weights `a`: the gradient of the smoothed
/// objective in the tangent space of the simplex.
pub fn subgradient_alpha_bar(
    a: ArrayView1<f64>,
    support: ArrayView2<f64>,
    measures: &[DiscreteMeasure],
    p: f64,
    lambda: f64,
    opts: &SinkhornOptions,
) -> Result<Array1<f64>> {
    check_positive_weights(a, support.ncols())?;
    let mut batch = build_batch(support, measures, p, lambda, opts)?;
    Ok(evaluate(&mut batch, a)?.alpha_bar)
}

/// Smoothed objective at weights `a`.
pub fn smoothed_objective(
    a: ArrayView1<f64>,
    support: ArrayView2<f64>,
    measures: &[DiscreteMeasure],
    p: f64,
    lambda: f64,
    opts: &SinkhornOptions,
) -> Result<Evaluation> {
    check_positive_weights(a, support.ncols())?;
    let mut batch = build_batch(support, measures, p, lambda, opts)?;
    evaluate(&mut batch, a)
}

fn check_positive_weights(a: ArrayView1<f64>, n: usize) -> Result<()> {
    if a.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {n} support points",
            a.len()
        )));
    }
    if a.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::InvalidArgument("weights must be strictly positive".into()));
    }
    Ok(())
}

/// Settings of one weight optimization on a prepared batch.
pub(crate) struct WeightSearch {
    pub theta: WeightConstraintSet,
    pub t0: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub max_halvings: usize,
}

pub(crate) struct WeightOutcome {
    pub weights: Array1<f64>,
    pub evaluation: Evaluation,
    pub iterations: usize,
    pub t0: f64,
}

enum Attempt {
    Done(WeightOutcome),
    Restart,
}

/// Accelerated mirror descent on a batch whose costs are fixed.
pub(crate) fn optimize_weights(
    batch: &mut TransportBatch,
    init: &Array1<f64>,
    search: &WeightSearch,
    trace: &mut BarycenterTrace,
    clock: Instant,
) -> Result<WeightOutcome> {
    if search.theta == WeightConstraintSet::UniformSingleton {
        let n = init.len();
        let a = Array1::from_elem(n, 1.0 / n as f64);
        let evaluation = evaluate(batch, a.view())?;
        let iter = trace.last().map_or(1, |r| r.iter + 1);
        trace.push(TraceRecord {
            iter,
            objective: evaluation.objective,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            inner_iters: evaluation.inner_iters,
            step_norm: 0.0,
            weights: a.clone(),
        });
        return Ok(WeightOutcome {
            weights: a,
            evaluation,
            iterations: 1,
            t0: search.t0,
        });
    }

    let mut t0 = search.t0;
    let trace_start = trace.len();
    for attempt in 0..=search.max_halvings {
        let allow_restart = attempt < search.max_halvings;
        match weight_attempt(batch, init, search, t0, allow_restart, trace, clock)? {
            Attempt::Done(outcome) => return Ok(outcome),
            Attempt::Restart => {
                trace.truncate(trace_start);
                t0 *= 0.5;
            }
        }
    }
    unreachable!("the last attempt never restarts")
}

fn weight_attempt(
    batch: &mut TransportBatch,
    init: &Array1<f64>,
    search: &WeightSearch,
    t0: f64,
    allow_restart: bool,
    trace: &mut BarycenterTrace,
    clock: Instant,
) -> Result<Attempt> {
    let mut a_hat = init.clone();
    let mut a_tilde = init.clone();
    let mut prev_query: Option<Array1<f64>> = None;
    let mut history: Vec<f64> = Vec::with_capacity(search.max_iter);
    let mut best: Option<(Array1<f64>, Evaluation)> = None;
    let first_iter = trace.last().map_or(1, |r| r.iter + 1);
    let mut iterations = 0;

    for t in 1..=search.max_iter {
        iterations = t;
        let beta = (t as f64 + 1.0) / 2.0;
        let a = if t == 1 {
            a_tilde.clone()
        } else {
            (1.0 - 1.0 / beta) * &a_hat + (1.0 / beta) * &a_tilde
        };
        let evaluation = evaluate(batch, a.view())?;
        let step_norm = prev_query
            .as_ref()
            .map_or(0.0, |p| p.iter().zip(a.iter()).map(|(x, y)| (x - y).abs()).sum());
        trace.push(TraceRecord {
            iter: first_iter + t - 1,
            objective: evaluation.objective,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            inner_iters: evaluation.inner_iters,
            step_norm,
            weights: a.clone(),
        });
        history.push(evaluation.objective);

        if t == 5 && allow_restart && evaluation.objective > history[0] {
            return Ok(Attempt::Restart);
        }

        let g = (t0 * beta) * &evaluation.alpha_bar;
        a_tilde = bregman_proximal_step(a_tilde.view(), g.view(), search.theta)?;
        a_hat = (1.0 - 1.0 / beta) * &a_hat + (1.0 / beta) * &a_tilde;

        let improved = best.as_ref().is_none_or(|(_, e)| evaluation.objective < e.objective);
        if improved {
            best = Some((a.clone(), evaluation));
        }
        prev_query = Some(a);

        if t > 5 {
            let old = history[t - 6];
            let new = history[t - 1];
            if (new - old).abs() <= search.tol * old.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
    }
    let (weights, evaluation) = best.expect("at least one iteration");
    Ok(Attempt::Done(WeightOutcome {
        weights,
        evaluation,
        iterations,
        t0,
    }))
}

/// Minimizes the smoothed barycenter objective over the weights of a fixed
/// support. Returns the best iterate seen.
pub fn barycenter_fixed_support(problem: &FixedBarycenterProblem) -> Result<FixedBarycenterResult> {
    problem.validate()?;
    let clock = Instant::now();
    let n = problem.support.ncols();
    let costs = problem.cost_matrices()?;
    let lambda = problem.regularization.resolve(costs.iter())?;
    let mut batch = build_batch(
        problem.support.view(),
        &problem.measures,
        problem.p,
        lambda,
        &problem.sinkhorn,
    )?;

    let init = match &problem.init {
        Some(a) => {
            check_positive_weights(a.view(), n)?;
            if !problem.theta.contains(a.view(), 1e-10) {
                return Err(Error::InvalidArgument(
                    "initial weights are outside the constraint set".into(),
                ));
            }
            a.clone()
        }
        None => problem.theta.prox_center(n),
    };
    let search = WeightSearch {
        theta: problem.theta,
        t0: problem.t0,
        max_iter: problem.max_outer,
        tol: problem.tol,
        max_halvings: problem.max_halvings,
    };
    let mut trace = BarycenterTrace::new();
    let outcome = optimize_weights(&mut batch, &init, &search, &mut trace, clock)?;
    Ok(FixedBarycenterResult {
        weights: outcome.weights,
        objective: outcome.evaluation.objective,
        lambda,
        t0: outcome.t0,
        iterations: outcome.iterations,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn prox_identity_and_shift_invariance() {
        let a = array![0.2, 0.3, 0.5];
        let same = bregman_proximal_step(a.view(), Array1::zeros(3).view(), WeightConstraintSet::FullSimplex).unwrap();
        let shifted = bregman_proximal_step(
            a.view(),
            Array1::from_elem(3, 4.2).view(),
            WeightConstraintSet::FullSimplex,
        )
        .unwrap();
        for i in 0..3 {
            assert!((same[i] - a[i]).abs() < 1e-15);
            assert!((shifted[i] - a[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn prox_hand_example() {
        let c = bregman_proximal_step(
            array![0.5, 0.5].view(),
            array![3f64.ln(), 0.0].view(),
            WeightConstraintSet::FullSimplex,
        )
        .unwrap();
        assert!((c[0] - 0.25).abs() < 1e-15);
        assert!((c[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn prox_uniform_singleton_ignores_gradient() {
        let c = bregman_proximal_step(
            array![0.7, 0.2, 0.1].view(),
            array![5.0, -3.0, 1.0].view(),
            WeightConstraintSet::UniformSingleton,
        )
        .unwrap();
        assert_eq!(c, Array1::from_elem(3, 1.0 / 3.0));
    }

    #[test]
    fn prox_entropy_level_set() {
        let a = Array1::from_elem(4, 0.25);
        let g = array![-6.0, 0.0, 0.0, 0.0];
        let tau = 1.0;
        let free = bregman_proximal_step(a.view(), g.view(), WeightConstraintSet::FullSimplex).unwrap();
        assert!(entropy(free.view()) < tau);
        let c = bregman_proximal_step(a.view(), g.view(), WeightConstraintSet::EntropyLevelSet(tau)).unwrap();
        let h = entropy(c.view());
        assert!(h >= tau && h - tau <= 1e-8, "H = {h}");
        assert!((c.sum() - 1.0).abs() < 1e-12);
        // ordering of the free update is kept
        assert!(c[0] > c[1] && (c[1] - c[2]).abs() < 1e-15);

        // inactive constraint: same as the simplex update
        let loose = bregman_proximal_step(a.view(), g.view(), WeightConstraintSet::EntropyLevelSet(0.01)).unwrap();
        assert_eq!(loose, free);
    }

    #[test]
    fn prox_rejects_non_finite_gradient() {
        let err = bregman_proximal_step(
            array![0.5, 0.5].view(),
            array![f64::INFINITY, 0.0].view(),
            WeightConstraintSet::FullSimplex,
        );
        assert!(matches!(err, Err(Error::ProxOverflow)));
    }

    #[test]
    fn prox_floor_keeps_weights_positive() {
        let c = bregman_proximal_step(
            array![0.5, 0.5].view(),
            array![1e4, 0.0].view(),
            WeightConstraintSet::FullSimplex,
        )
        .unwrap();
        assert!(c[0] > 0.0);
        assert!((c[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_constraint_returns_uniform_in_one_iteration() {
        let x = array![[0.0, 1.0, 2.0]];
        let problem = FixedBarycenterProblem::new(x, vec![DiscreteMeasure::dirac(&[0.0]).unwrap()])
            .with_theta(WeightConstraintSet::UniformSingleton);
        let res = barycenter_fixed_support(&problem).unwrap();
        assert_eq!(res.weights, Array1::from_elem(3, 1.0 / 3.0));
        assert_eq!(res.iterations, 1);
        assert_eq!(res.trace.len(), 1);
    }

    #[test]
    fn trace_json_lines_have_expected_keys() {
        let mut trace = BarycenterTrace::new();
        trace.push(TraceRecord {
            iter: 1,
            objective: 0.123456789012345,
            wall_ms: 2.5,
            inner_iters: 40,
            step_norm: 0.0,
            weights: array![1.0],
        });
        let mut buf = Vec::new();
        trace.write_json_lines(&mut buf).unwrap();
        let line: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let obj = line.as_object().unwrap();
        let mut keys: Vec<_> = obj.keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["inner_iters", "iter", "objective", "wall_ms"]);
        assert_eq!(obj["objective"].as_f64().unwrap(), 0.123456789012);
    }

    #[test]
    #[should_panic(expected = "increase")]
    fn trace_rejects_non_increasing_iterations() {
        let rec = TraceRecord {
            iter: 3,
            objective: 0.0,
            wall_ms: 0.0,
            inner_iters: 0,
            step_norm: 0.0,
            weights: array![1.0],
        };
        let mut trace = BarycenterTrace::new();
        trace.push(rec.clone());
        trace.push(rec);
    }
}
