//! Entropically smoothed transport by Sinkhorn matrix scaling.
//!
//! For `K = exp(-lambda M)` the smoothed primal optimum is
//! `T = diag(u) K diag(v)` for a positive pair `(u, v)`, unique up to
//! `(u, v) -> (c u, v / c)`. The smoothed dual optimum in `alpha` is
//! `log(u) / lambda`, centered to sum to zero so that it lies in the tangent
//! space of the simplex; it is the gradient of the smoothed transport cost
//! with respect to the first marginal.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{frobenius, TransportPlan};
use crate::measures::{lower_median_positive, CostMatrix};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SinkhornVariant {
    /// Multiplicative updates on `K = exp(-lambda M)`.
    #[default]
    Plain,
    /// Log-sum-exp updates on `log u`, `log v`; safe for large `lambda`.
    LogDomain,
    /// Plain, switching to log-domain for a problem whose kernel underflows
    /// or whose scalings overflow.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinkhornOptions {
    /// Bound on `|T 1 - a|_1`.
    pub tol: f64,
    pub max_iter: usize,
    /// The marginal error is evaluated every `check_every` iterations.
    pub check_every: usize,
    pub variant: SinkhornVariant,
    /// When set, non-converged runs are errors in [`solve_smoothed`] and
    /// [`TransportBatch::solve`].
    pub require_convergence: bool,
    /// Stop early, unconverged, once the error is below `100 tol` and has
    /// dropped by less than 1% over this many checks. Nearly block-diagonal
    /// kernels stall this way just above `tol`.
    #[serde(default)]
    pub stall_checks: Option<usize>,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iter: 10_000,
            check_every: 10,
            variant: SinkhornVariant::Plain,
            require_convergence: true,
            stall_checks: None,
        }
    }
}

/// Sliding window over recent marginal errors.
struct StallGuard {
    window: Option<usize>,
    ceiling: f64,
    history: VecDeque<f64>,
}

impl StallGuard {
    fn new(opts: &SinkhornOptions) -> Self {
        Self {
            window: opts.stall_checks,
            ceiling: 100.0 * opts.tol,
            history: VecDeque::new(),
        }
    }

    fn stalled(&mut self, error: f64) -> bool {
        let Some(window) = self.window else {
            return false;
        };
        self.history.push_back(error);
        if self.history.len() <= window {
            return false;
        }
        let oldest = self.history.pop_front().expect("window is nonempty");
        error <= self.ceiling && error > 0.99 * oldest
    }
}

impl SinkhornOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_variant(mut self, variant: SinkhornVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_stall_checks(mut self, checks: usize) -> Self {
        self.stall_checks = Some(checks);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 || self.check_every == 0 || self.stall_checks == Some(0) {
            return Err(Error::InvalidArgument(
                "max_iter and check_every must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// How the smoothing strength `lambda` is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regularization {
    Fixed(f64),
    /// `c / median(M)` over the strictly positive entries (lower median).
    OverMedian(f64),
    /// `c / max(M)`.
    OverMax(f64),
}

impl Regularization {
    /// `60 / median(M)`.
    pub const AUTO: Regularization = Regularization::OverMedian(60.0);

    /// Resolves `lambda`, pooling entries of all `costs`.
    pub fn resolve<'a>(&self, costs: impl IntoIterator<Item = &'a CostMatrix>) -> Result<f64> {
        let lambda = match *self {
            Regularization::Fixed(l) => l,
            Regularization::OverMedian(c) => {
                let median = lower_median_positive(
                    costs
                        .into_iter()
                        .flat_map(|m| m.entries().iter().copied().collect::<Vec<_>>()),
                )
                .ok_or_else(|| Error::InvalidArgument("cost matrices have no positive entry".into()))?;
                c / median
            }
            Regularization::OverMax(c) => {
                let max = costs.into_iter().map(CostMatrix::max).fold(0.0, f64::max);
                if max <= 0.0 {
                    return Err(Error::InvalidArgument("cost matrices have no positive entry".into()));
                }
                c / max
            }
        };
        check_lambda(lambda)?;
        Ok(lambda)
    }
}

impl std::str::FromStr for Regularization {
    type Err = Error;

    /// Parses `auto`, a positive number, `<c>/median` or `<c>/max`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad lambda `{s}` (expected auto, <x>, <c>/median or <c>/max)"));
        let positive = |t: &str| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v > 0.0)
                .ok_or_else(bad)
        };
        if s == "auto" {
            return Ok(Self::AUTO);
        }
        match s.split_once('/') {
            Some((c, "median")) => positive(c).map(Self::OverMedian),
            Some((c, "max")) => positive(c).map(Self::OverMax),
            Some(_) => Err(bad()),
            None => positive(s).map(Self::Fixed),
        }
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `K = exp(-lambda M)`, with no all-zero row or column.
#[derive(Clone, Debug)]
pub struct GibbsKernel {
    k: Array2<f64>,
    lambda: f64,
}

impl GibbsKernel {
    pub fn new(cost: &CostMatrix, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        let k = cost.entries().mapv(|c| (-lambda * c).exp());
        for (i, row) in k.rows().into_iter().enumerate() {
            if row.iter().all(|&x| x == 0.0) {
                return Err(Error::KernelUnderflow {
                    axis: "row",
                    index: i,
                    lambda,
                });
            }
        }
        for (j, col) in k.columns().into_iter().enumerate() {
            if col.iter().all(|&x| x == 0.0) {
                return Err(Error::KernelUnderflow {
                    axis: "column",
                    index: j,
                    lambda,
                });
            }
        }
        Ok(Self { k, lambda })
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.k.view()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Positive scaling vectors with `diag(u) K diag(v)` in `U(a, b)` up to `tol`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingPair {
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `|T 1 - a|_1` at the last check.
    pub marginal_error: f64,
}

impl ScalingPair {
    /// `(c u, v / c)`: the same plan.
    pub fn rescaled(&self, c: f64) -> Self {
        Self {
            u: &self.u * c,
            v: &self.v / c,
            ..self.clone()
        }
    }
}

fn check_marginals(a: ArrayView1<f64>, b: ArrayView1<f64>, rows: usize, cols: usize) -> Result<()> {
    if a.len() != rows || b.len() != cols {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix is {rows}x{cols}, marginals have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(w) = a.iter().chain(b.iter()).find(|&&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Sinkhorn needs strictly positive marginals (found {w}); prune zero-weight atoms"
        )));
    }
    Ok(())
}

/// `out_j = sum_i K_ij x_i`.
fn kt_mul(k: ArrayView2<f64>, x: &Array1<f64>, out: &mut Array1<f64>) {
    out.fill(0.0);
    let out = out.as_slice_mut().expect("owned vector is contiguous");
    for (row, &xi) in k.rows().into_iter().zip(x.iter()) {
        match row.as_slice() {
            Some(row) => {
                for (o, &kij) in out.iter_mut().zip(row) {
                    *o += kij * xi;
                }
            }
            None => {
                for (o, &kij) in out.iter_mut().zip(row.iter()) {
                    *o += kij * xi;
                }
            }
        }
    }
}

/// `out_i = sum_j K_ij x_j`.
fn k_mul(k: ArrayView2<f64>, x: &Array1<f64>, out: &mut Array1<f64>) {
    let x = x.as_slice().expect("owned vector is contiguous");
    for (o, row) in out.iter_mut().zip(k.rows()) {
        *o = match row.as_slice() {
            Some(row) => dot(row, x),
            None => row.iter().zip(x).map(|(&kij, &xj)| kij * xj).sum(),
        };
    }
}

/// Four running sums, so the loop vectorizes without reassociation.
fn dot(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (pc, qc) = (p.chunks_exact(4), q.chunks_exact(4));
    let tail: f64 = pc.remainder().iter().zip(qc.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in pc.zip(qc) {
        for l in 0..4 {
            acc[l] += a[l] * b[l];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn all_positive_finite(x: &Array1<f64>) -> bool {
    x.iter().all(|&v| v > 0.0 && v.is_finite())
}

/// Sinkhorn scaling on `K = exp(-lambda M)`.
///
/// Starts from `warm_u` when given, else `1/n`, and iterates
/// `u <- 1 / (Kt (b / (K^T u)))` with `Kt = diag(1/a) K`.
pub fn sinkhorn_scaling(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    lambda: f64,
    opts: &SinkhornOptions,
    warm_u: Option<&Array1<f64>>,
) -> Result<ScalingPair> {
    check_marginals(a, b, cost.rows(), cost.cols())?;
    let kernel = GibbsKernel::new(cost, lambda)?;
    sinkhorn_with_kernel(a, b, &kernel, opts, warm_u)
}

/// [`sinkhorn_scaling`] on a precomputed kernel.
pub fn sinkhorn_with_kernel(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    kernel: &GibbsKernel,
    opts: &SinkhornOptions,
    warm_u: Option<&Array1<f64>>,
) -> Result<ScalingPair> {
    opts.validate()?;
    let k = kernel.matrix();
    let (n, m) = k.dim();
    check_marginals(a, b, n, m)?;

    let mut k_tilde = k.to_owned();
    for (mut row, &ai) in k_tilde.rows_mut().into_iter().zip(a.iter()) {
        row.mapv_inplace(|x| x / ai);
    }

    let mut u = match warm_u {
        Some(w) if w.len() == n && all_positive_finite(w) => w.clone(),
        _ => Array1::from_elem(n, 1.0 / n as f64),
    };
    let mut ktu = Array1::zeros(m);
    let mut w = Array1::zeros(m);
    let mut kw = Array1::zeros(n);
    let mut converged = false;
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    let mut guard = StallGuard::new(opts);

    while iterations < opts.max_iter {
        iterations += 1;
        kt_mul(k, &u, &mut ktu);
        for j in 0..m {
            w[j] = b[j] / ktu[j];
        }
        k_mul(k_tilde.view(), &w, &mut kw);
        u.zip_mut_with(&kw, |ui, &x| *ui = 1.0 / x);
        if !all_positive_finite(&u) {
            return Err(Error::NumericalBreakdown { iterations });
        }

        if iterations % opts.check_every == 0 || iterations == opts.max_iter {
            kt_mul(k, &u, &mut ktu);
            let v = &b / &ktu;
            k_mul(k, &v, &mut kw);
            error = (0..n).map(|i| (u[i] * kw[i] - a[i]).abs()).sum();
            if error <= opts.tol {
                converged = true;
                break;
            }
            if guard.stalled(error) {
                break;
            }
        }
    }

    kt_mul(k, &u, &mut ktu);
    let v = &b / &ktu;
    if !all_positive_finite(&v) {
        return Err(Error::NumericalBreakdown { iterations });
    }
    Ok(ScalingPair {
        u,
        v,
        a: a.to_owned(),
        b: b.to_owned(),
        iterations,
        converged,
        marginal_error: error,
    })
}

/// `T = diag(u) K diag(v)`. Non-converged pairs are rejected unless `force`.
pub fn smoothed_primal(pair: &ScalingPair, kernel: &GibbsKernel, force: bool) -> Result<TransportPlan> {
    if !pair.converged && !force {
        return Err(Error::NotConverged {
            iterations: pair.iterations,
            error: pair.marginal_error,
        });
    }
    let k = kernel.matrix();
    if k.dim() != (pair.u.len(), pair.v.len()) {
        return Err(Error::DimensionMismatch("kernel does not match scaling pair".into()));
    }
    // u_i v_j alone can overflow where K_ij is tiny
    let mut t = k.to_owned();
    for ((i, j), x) in t.indexed_iter_mut() {
        *x = pair.u[i] * (*x * pair.v[j]);
    }
    if !t.iter().all(|x| x.is_finite()) {
        return Err(Error::NumericalBreakdown {
            iterations: pair.iterations,
        });
    }
    TransportPlan::new(t, pair.a.clone(), pair.b.clone())
}

/// Zero-sum smoothed dual optimum `alpha = (log u - mean(log u)) / lambda`.
pub fn smoothed_dual_alpha(pair: &ScalingPair, lambda: f64) -> Result<Array1<f64>> {
    check_lambda(lambda)?;
    if !all_positive_finite(&pair.u) {
        return Err(Error::InvalidArgument(
            "scaling vector u must be positive and finite".into(),
        ));
    }
    Ok(alpha_from_log_u(pair.u.mapv(f64::ln), lambda))
}

pub fn alpha_from_log_u(log_u: Array1<f64>, lambda: f64) -> Array1<f64> {
    let mean = log_u.mean().unwrap_or(0.0);
    log_u.mapv(|x| (x - mean) / lambda)
}

/// Log-domain scaling pair: `T_ij = exp(log_u_i + log_v_j - lambda m_ij)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogScalingPair {
    pub log_u: Array1<f64>,
    pub log_v: Array1<f64>,
    pub a: Array1<f64>,
    pub b: Array1<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_error: f64,
}

impl LogScalingPair {
    pub fn plan(&self, cost: &CostMatrix, lambda: f64) -> Result<TransportPlan> {
        let mut t = cost.entries().to_owned();
        for ((i, j), x) in t.indexed_iter_mut() {
            *x = (self.log_u[i] + self.log_v[j] - lambda * *x).exp();
        }
        TransportPlan::new(t, self.a.clone(), self.b.clone())
    }

    pub fn alpha(&self, lambda: f64) -> Array1<f64> {
        alpha_from_log_u(self.log_u.clone(), lambda)
    }
}

/// `log sum_j exp(row_j + x_j)`.
fn lse_row(row: ArrayView1<f64>, x: &Array1<f64>) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (&r, &xj) in row.iter().zip(x.iter()) {
        max = max.max(r + xj);
    }
    if max == f64::NEG_INFINITY {
        return max;
    }
    let mut s = 0.0;
    for (&r, &xj) in row.iter().zip(x.iter()) {
        s += (r + xj - max).exp();
    }
    max + s.ln()
}

/// `out_j = log sum_i exp(L_ij + x_i)`.
fn lse_cols(l: ArrayView2<f64>, x: &Array1<f64>, max: &mut Array1<f64>, out: &mut Array1<f64>) {
    max.fill(f64::NEG_INFINITY);
    for (row, &xi) in l.rows().into_iter().zip(x.iter()) {
        for (mj, &lij) in max.iter_mut().zip(row.iter()) {
            *mj = mj.max(lij + xi);
        }
    }
    out.fill(0.0);
    for (row, &xi) in l.rows().into_iter().zip(x.iter()) {
        for ((o, &mj), &lij) in out.iter_mut().zip(max.iter()).zip(row.iter()) {
            *o += (lij + xi - mj).exp();
        }
    }
    out.zip_mut_with(max, |o, &mj| *o = mj + o.ln());
}

/// Scalings are folded into the log potentials once they leave
/// `[1/ABSORB, ABSORB]`.
const ABSORB: f64 = 1e50;

/// Log-domain state `log u = f + ln(u~)`, `log v = g + ln(v~)` with the
/// rescaled kernel `K~_ij = exp(f_i + g_j - lambda m_ij)`.
struct Stabilized<'a> {
    neg_lm: ArrayView2<'a, f64>,
    log_a: Array1<f64>,
    log_b: Array1<f64>,
    f: Array1<f64>,
    g: Array1<f64>,
    kernel: Array2<f64>,
    col_max: Array1<f64>,
    col_lse: Array1<f64>,
}

impl Stabilized<'_> {
    /// Exact half-steps from `log u`, then a fresh kernel. Returns false if
    /// the kernel has an all-zero row or column.
    fn absorb(&mut self, log_u: &Array1<f64>) -> bool {
        lse_cols(self.neg_lm, log_u, &mut self.col_max, &mut self.col_lse);
        self.g = &self.log_b - &self.col_lse;
        for (i, row) in self.neg_lm.rows().into_iter().enumerate() {
            self.f[i] = self.log_a[i] - lse_row(row, &self.g);
        }
        for ((i, j), k) in self.kernel.indexed_iter_mut() {
            *k = (self.f[i] + self.g[j] + self.neg_lm[[i, j]]).exp();
        }
        let rows_ok = self.kernel.rows().into_iter().all(|r| r.iter().any(|&x| x > 0.0));
        let cols_ok = self.kernel.columns().into_iter().all(|c| c.iter().any(|&x| x > 0.0));
        rows_ok && cols_ok
    }
}

fn in_range(x: &Array1<f64>) -> bool {
    x.iter().all(|&v| v.is_finite() && v > 1.0 / ABSORB && v < ABSORB)
}

/// Sinkhorn iterations in the log domain: same fixed point as
/// [`sinkhorn_scaling`], without underflow for any `lambda`.
///
/// Multiplicative updates run on a rescaled kernel whose scalings are
/// absorbed into the log potentials when they grow; if even the rescaled
/// kernel underflows, log-sum-exp updates take over.
pub fn sinkhorn_log_domain(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    lambda: f64,
    opts: &SinkhornOptions,
    warm_log_u: Option<&Array1<f64>>,
) -> Result<LogScalingPair> {
    opts.validate()?;
    check_lambda(lambda)?;
    let (n, m) = (cost.rows(), cost.cols());
    check_marginals(a, b, n, m)?;
    let neg_lm = cost.entries().mapv(|c| -lambda * c);

    let mut log_u = match warm_log_u {
        Some(w) if w.len() == n && w.iter().all(|x| x.is_finite()) => w.clone(),
        _ => Array1::from_elem(n, -(n as f64).ln()),
    };
    let mut st = Stabilized {
        neg_lm: neg_lm.view(),
        log_a: a.mapv(f64::ln),
        log_b: b.mapv(f64::ln),
        f: Array1::zeros(n),
        g: Array1::zeros(m),
        kernel: Array2::zeros((n, m)),
        col_max: Array1::zeros(m),
        col_lse: Array1::zeros(m),
    };
    let mut stable = st.absorb(&log_u);
    let mut u = Array1::<f64>::ones(n);
    let mut v = Array1::<f64>::ones(m);
    let mut ktu = Array1::zeros(m);
    let mut kv = Array1::zeros(n);
    let mut converged = false;
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    let mut guard = StallGuard::new(opts);

    while iterations < opts.max_iter {
        iterations += 1;
        if stable {
            kt_mul(st.kernel.view(), &u, &mut ktu);
            v.assign(&(&b / &ktu));
            k_mul(st.kernel.view(), &v, &mut kv);
            u.assign(&(&a / &kv));
            if !in_range(&u) || !in_range(&v) {
                // v came from the valid u of the previous step
                log_u = &st.f + &u.mapv(f64::ln);
                if !log_u.iter().all(|x| x.is_finite()) {
                    return Err(Error::NumericalBreakdown { iterations });
                }
                stable = st.absorb(&log_u);
                u.fill(1.0);
                v.fill(1.0);
            }
        } else {
            st.absorb(&log_u);
            log_u.assign(&st.f);
        }
        if st.f.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalBreakdown { iterations });
        }

        if iterations % opts.check_every == 0 || iterations == opts.max_iter {
            if stable {
                kt_mul(st.kernel.view(), &u, &mut ktu);
                v.assign(&(&b / &ktu));
                k_mul(st.kernel.view(), &v, &mut kv);
                error = (0..n).map(|i| (u[i] * kv[i] - a[i]).abs()).sum();
            } else {
                lse_cols(neg_lm.view(), &log_u, &mut st.col_max, &mut st.col_lse);
                let log_v = &st.log_b - &st.col_lse;
                error = neg_lm
                    .rows()
                    .into_iter()
                    .enumerate()
                    .map(|(i, row)| ((log_u[i] + lse_row(row, &log_v)).exp() - a[i]).abs())
                    .sum();
            }
            if error <= opts.tol {
                converged = true;
                break;
            }
            if guard.stalled(error) {
                break;
            }
        }
    }
    if stable {
        log_u = &st.f + &u.mapv(f64::ln);
    }
    if log_u.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalBreakdown { iterations });
    }
    lse_cols(neg_lm.view(), &log_u, &mut st.col_max, &mut st.col_lse);
    let log_v = &st.log_b - &st.col_lse;
    Ok(LogScalingPair {
        log_u,
        log_v,
        a: a.to_owned(),
        b: b.to_owned(),
        iterations,
        converged,
        marginal_error: error,
    })
}

/// Smoothed primal and dual optima of one transport problem.
#[derive(Clone, Debug)]
pub struct SmoothedSolution {
    pub plan: TransportPlan,
    /// Zero-sum smoothed dual optimum.
    pub alpha: Array1<f64>,
    /// `<T, M>`.
    pub transport_cost: f64,
    /// `<T, M> - h(T) / lambda`.
    pub regularized_cost: f64,
    /// Smoothed dual objective
    /// `alpha^T a + beta^T b - sum_ij exp(-lambda (m_ij - alpha_i - beta_j)) / lambda`
    /// at `alpha = log(u) / lambda`, `beta = log(v) / lambda`. At the optimum it
    /// equals `regularized_cost - 1 / lambda`.
    pub dual_objective: f64,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub marginal_error: f64,
}

impl SmoothedSolution {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        plan: TransportPlan,
        log_u: Array1<f64>,
        log_v: ArrayView1<f64>,
        cost: &CostMatrix,
        lambda: f64,
        iterations: usize,
        converged: bool,
        marginal_error: f64,
    ) -> Self {
        let transport_cost = frobenius(plan.matrix(), cost.entries());
        let regularized_cost = transport_cost - plan.entropy() / lambda;
        let mass: f64 = plan.matrix().sum();
        let dual_objective = (log_u.dot(&plan.row_marginal()) + log_v.dot(&plan.col_marginal()) - mass) / lambda;
        Self {
            alpha: alpha_from_log_u(log_u, lambda),
            plan,
            transport_cost,
            regularized_cost,
            dual_objective,
            lambda,
            iterations,
            converged,
            marginal_error,
        }
    }
}

/// Warm-start state: `u` for the plain variant, `log u` for the log-domain one.
#[derive(Clone, Debug, PartialEq)]
pub enum WarmStart {
    Plain(Array1<f64>),
    Log(Array1<f64>),
}

fn solve_plain(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    kernel: Option<&GibbsKernel>,
    lambda: f64,
    opts: &SinkhornOptions,
    warm_u: Option<&Array1<f64>>,
) -> Result<(SmoothedSolution, WarmStart)> {
    let owned;
    let kernel = match kernel {
        Some(k) => k,
        None => {
            owned = GibbsKernel::new(cost, lambda)?;
            &owned
        }
    };
    let pair = sinkhorn_with_kernel(a, b, kernel, opts, warm_u)?;
    let plan = smoothed_primal(&pair, kernel, true)?;
    let sol = SmoothedSolution::assemble(
        plan,
        pair.u.mapv(f64::ln),
        pair.v.mapv(f64::ln).view(),
        cost,
        lambda,
        pair.iterations,
        pair.converged,
        pair.marginal_error,
    );
    Ok((sol, WarmStart::Plain(pair.u)))
}

fn solve_log(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    lambda: f64,
    opts: &SinkhornOptions,
    warm_log_u: Option<&Array1<f64>>,
) -> Result<(SmoothedSolution, WarmStart)> {
    let pair = sinkhorn_log_domain(a, b, cost, lambda, opts, warm_log_u)?;
    let plan = pair.plan(cost, lambda)?;
    let sol = SmoothedSolution::assemble(
        plan,
        pair.log_u.clone(),
        pair.log_v.view(),
        cost,
        lambda,
        pair.iterations,
        pair.converged,
        pair.marginal_error,
    );
    Ok((sol, WarmStart::Log(pair.log_u)))
}

fn solve_one(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    kernel: Option<&GibbsKernel>,
    lambda: f64,
    opts: &SinkhornOptions,
    warm: Option<&WarmStart>,
) -> Result<(SmoothedSolution, WarmStart)> {
    let (plain_warm, log_warm) = match warm {
        Some(WarmStart::Plain(u)) => (Some(u), None),
        Some(WarmStart::Log(u)) => (None, Some(u)),
        None => (None, None),
    };
    let out = match opts.variant {
        SinkhornVariant::Plain => solve_plain(a, b, cost, kernel, lambda, opts, plain_warm)?,
        SinkhornVariant::LogDomain => solve_log(a, b, cost, lambda, opts, log_warm)?,
        SinkhornVariant::Auto => {
            // once a problem needed the log domain it stays there
            let plain = match (kernel, log_warm) {
                (Some(k), None) => Some(solve_plain(a, b, cost, Some(k), lambda, opts, plain_warm)),
                _ => None,
            };
            match plain {
                Some(Ok(out)) => out,
                Some(Err(Error::KernelUnderflow { .. } | Error::NumericalBreakdown { .. })) | None => {
                    solve_log(a, b, cost, lambda, opts, log_warm)?
                }
                Some(Err(e)) => return Err(e),
            }
        }
    };
    if opts.require_convergence && !out.0.converged {
        return Err(Error::NotConverged {
            iterations: out.0.iterations,
            error: out.0.marginal_error,
        });
    }
    Ok(out)
}

/// Smoothed plan, dual optimum and costs, using the variant in `opts`.
pub fn solve_smoothed(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    lambda: f64,
    opts: &SinkhornOptions,
) -> Result<SmoothedSolution> {
    solve_one(a, b, cost, None, lambda, opts, None).map(|(s, _)| s)
}

/// Value of the smoothed transport problem as a function of the marginals.
pub fn smoothed_dual_objective(
    a: ArrayView1<f64>,
    b: ArrayView1<f64>,
    cost: &CostMatrix,
    lambda: f64,
    opts: &SinkhornOptions,
) -> Result<f64> {
    Ok(solve_smoothed(a, b, cost, lambda, opts)?.dual_objective)
}

struct BatchItem {
    b: Array1<f64>,
    cost: CostMatrix,
    kernel: Option<GibbsKernel>,
    warm: Option<WarmStart>,
}

/// `N` transport problems sharing a first marginal `a`, with per-measure
/// kernels and warm starts kept between calls.
pub struct TransportBatch {
    items: Vec<BatchItem>,
    lambda: f64,
    opts: SinkhornOptions,
}

impl TransportBatch {
    pub fn new(problems: Vec<(Array1<f64>, CostMatrix)>, lambda: f64, opts: SinkhornOptions) -> Result<Self> {
        check_lambda(lambda)?;
        opts.validate()?;
        if problems.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let n = problems[0].1.rows();
        let mut items = Vec::with_capacity(problems.len());
        for (index, (b, cost)) in problems.into_iter().enumerate() {
            if cost.rows() != n {
                return Err(Error::subproblem(
                    index,
                    Error::DimensionMismatch(format!("cost has {} rows, expected {n}", cost.rows())),
                ));
            }
            let kernel = Self::kernel_for(&cost, lambda, &opts).map_err(|e| Error::subproblem(index, e))?;
            items.push(BatchItem {
                b,
                cost,
                kernel,
                warm: None,
            });
        }
        Ok(Self { items, lambda, opts })
    }

    fn kernel_for(cost: &CostMatrix, lambda: f64, opts: &SinkhornOptions) -> Result<Option<GibbsKernel>> {
        match opts.variant {
            SinkhornVariant::Plain => GibbsKernel::new(cost, lambda).map(Some),
            SinkhornVariant::LogDomain => Ok(None),
            SinkhornVariant::Auto => match GibbsKernel::new(cost, lambda) {
                Ok(k) => Ok(Some(k)),
                Err(Error::KernelUnderflow { .. }) => Ok(None),
                Err(e) => Err(e),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn options(&self) -> &SinkhornOptions {
        &self.opts
    }

    pub fn costs(&self) -> impl Iterator<Item = &CostMatrix> {
        self.items.iter().map(|it| &it.cost)
    }

    /// Replaces the cost matrices (e.g. after moving the support) and drops
    /// the warm starts, which belong to the old kernels.
    pub fn set_costs(&mut self, costs: Vec<CostMatrix>) -> Result<()> {
        if costs.len() != self.items.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} cost matrices for {} measures",
                costs.len(),
                self.items.len()
            )));
        }
        for (index, (item, cost)) in self.items.iter_mut().zip(costs).enumerate() {
            item.kernel = Self::kernel_for(&cost, self.lambda, &self.opts).map_err(|e| Error::subproblem(index, e))?;
            item.cost = cost;
            item.warm = None;
        }
        Ok(())
    }

    pub fn reset_warm_starts(&mut self) {
        for item in &mut self.items {
            item.warm = None;
        }
    }

    pub fn warm_start(&self, index: usize) -> Option<&WarmStart> {
        self.items.get(index).and_then(|it| it.warm.as_ref())
    }

    /// Solves all problems at first marginal `a`, in parallel. Fails with the
    /// lowest failing index.
    pub fn solve(&mut self, a: ArrayView1<f64>) -> Result<Vec<SmoothedSolution>> {
        let lambda = self.lambda;
        let opts = &self.opts;
        let results: Vec<Result<SmoothedSolution>> = self
            .items
            .par_iter_mut()
            .map(|item| {
                let out = solve_one(
                    a,
                    item.b.view(),
                    &item.cost,
                    item.kernel.as_ref(),
                    lambda,
                    opts,
                    item.warm.as_ref(),
                );
                match out {
                    Ok((sol, warm)) => {
                        item.warm = Some(warm);
                        Ok(sol)
                    }
                    Err(e) => {
                        item.warm = None;
                        Err(e)
                    }
                }
            })
            .collect();
        results
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| Error::subproblem(i, e)))
            .collect()
    }
}

/// One-shot batch solve with cold starts.
pub fn smoothed_transport_batch(
    a: ArrayView1<f64>,
    problems: &[(Array1<f64>, CostMatrix)],
    lambda: f64,
    opts: &SinkhornOptions,
) -> Result<Vec<SmoothedSolution>> {
    TransportBatch::new(problems.to_vec(), lambda, opts.clone())?.solve(a)
}
