//! Exact optimal transport for small instances.
//!
//! [`solve_exact`] runs a network simplex specialized to the transportation
//! problem: the basis is a spanning tree of the complete bipartite graph on
//! `n` row nodes and `m` column nodes, the initial tree comes from the
//! north-west corner rule, and entering cells are priced with node
//! potentials. Dual potentials are read off the final tree.
//!
//! [`brute_force_cost`] is an independent oracle for tiny instances that
//! enumerates every basis of the transportation polytope.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::measures::CostMatrix;

/// Largest instance (in cells) accepted by [`solve_exact`].
pub const EXACT_CELL_LIMIT: usize = 250_000;

/// Largest instance (in cells) accepted by [`brute_force_cost`].
pub const BRUTE_FORCE_CELL_LIMIT: usize = 25;

/// Tolerance on the total mass of each marginal.
pub const MARGINAL_SUM_TOL: f64 = 1e-8;

/// Relative reduced-cost tolerance for pricing.
const PIVOT_TOL: f64 = 1e-9;

/// A coupling in `U(a, b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    matrix: Array2<f64>,
    row_marginal: Array1<f64>,
    col_marginal: Array1<f64>,
}

impl TransportPlan {
    /// Wraps a plan together with the marginals it was computed for. No
    /// feasibility check is made; see [`TransportPlan::marginal_violation`].
    pub fn new(matrix: Array2<f64>, row_marginal: Array1<f64>, col_marginal: Array1<f64>) -> Result<Self> {
        if matrix.dim() != (row_marginal.len(), col_marginal.len()) {
            return Err(Error::DimensionMismatch(format!(
                "plan is {:?}, marginals have lengths {} and {}",
                matrix.dim(),
                row_marginal.len(),
                col_marginal.len()
            )));
        }
        Ok(Self {
            matrix,
            row_marginal,
            col_marginal,
        })
    }

    /// Nearby plan with exactly the target marginals: rows, then columns,
    /// are scaled down to their targets, and the remaining mass is added as
    /// a rank-one term. Moves the plan by at most twice its marginal error
    /// in l1.
    pub fn rounded(&self) -> TransportPlan {
        let mut t = self.matrix.clone();
        for (mut row, &a) in t.rows_mut().into_iter().zip(self.row_marginal.iter()) {
            let r = row.sum();
            if r > a {
                row *= a / r;
            }
        }
        for (mut col, &b) in t.columns_mut().into_iter().zip(self.col_marginal.iter()) {
            let c = col.sum();
            if c > b {
                col *= b / c;
            }
        }
        let err_r = &self.row_marginal - &t.sum_axis(Axis(1));
        let err_c = &self.col_marginal - &t.sum_axis(Axis(0));
        let mass: f64 = err_r.sum();
        if mass > 0.0 {
            for ((i, j), x) in t.indexed_iter_mut() {
                *x += err_r[i] * err_c[j] / mass;
            }
        }
        TransportPlan {
            matrix: t,
            row_marginal: self.row_marginal.clone(),
            col_marginal: self.col_marginal.clone(),
        }
    }

    pub fn matrix(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    pub fn row_marginal(&self) -> ArrayView1<'_, f64> {
        self.row_marginal.view()
    }

    pub fn col_marginal(&self) -> ArrayView1<'_, f64> {
        self.col_marginal.view()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.matrix.sum_axis(Axis(0))
    }

    /// `<T, M>`.
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        frobenius(self.matrix.view(), cost.entries())
    }

    /// `h(T) = -sum t log t`.
    pub fn entropy(&self) -> f64 {
        self.matrix.iter().filter(|&&t| t > 0.0).map(|&t| -t * t.ln()).sum()
    }

    /// Number of entries above `tol`.
    pub fn nnz(&self, tol: f64) -> usize {
        self.matrix.iter().filter(|&&t| t > tol).count()
    }

    /// Largest absolute deviation of the row and column sums from the
    /// prescribed marginals.
    pub fn marginal_violation(&self) -> (f64, f64) {
        let max_dev = |sums: Array1<f64>, target: &Array1<f64>| {
            sums.iter()
                .zip(target.iter())
                .map(|(s, t)| (s - t).abs())
                .fold(0.0, f64::max)
        };
        (
            max_dev(self.row_sums(), &self.row_marginal),
            max_dev(self.col_sums(), &self.col_marginal),
        )
    }
}

pub(crate) fn frobenius(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

/// Feasible point of the dual LP, normalized so that `alpha` sums to zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DualPotentials {
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
}

impl DualPotentials {
    /// Shifts `alpha` to zero mean and compensates on `beta`.
    pub fn normalized(mut alpha: Array1<f64>, mut beta: Array1<f64>) -> Self {
        let shift = alpha.mean().unwrap_or(0.0);
        alpha.mapv_inplace(|x| x - shift);
        beta.mapv_inplace(|x| x + shift);
        Self { alpha, beta }
    }

    /// `alpha^T a + beta^T b`.
    pub fn objective(&self, a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
        self.alpha.dot(&a) + self.beta.dot(&b)
    }

    /// `max_ij (alpha_i + beta_j - m_ij)`, nonpositive when feasible.
    pub fn max_violation(&self, cost: &CostMatrix) -> f64 {
        let m = cost.entries();
        let mut worst = f64::NEG_INFINITY;
        for ((i, j), &c) in m.indexed_iter() {
            worst = worst.max(self.alpha[i] + self.beta[j] - c);
        }
        worst
    }
}

/// Primal and dual optima of one transport problem.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub cost: f64,
    pub plan: TransportPlan,
    pub duals: DualPotentials,
    pub pivots: usize,
}

impl ExactSolution {
    /// `|primal cost - dual objective|`.
    pub fn duality_gap(&self) -> f64 {
        (self.cost - self.duals.objective(self.plan.row_marginal(), self.plan.col_marginal())).abs()
    }
}

fn check_instance(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<()> {
    if cost.rows() != a.len() || cost.cols() != b.len() {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix is {}x{}, marginals have lengths {} and {}",
            cost.rows(),
            cost.cols(),
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b.iter()).any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("marginals must be nonnegative".into()));
    }
    let (sa, sb) = (a.sum(), b.sum());
    if (sa - 1.0).abs() > MARGINAL_SUM_TOL || (sb - 1.0).abs() > MARGINAL_SUM_TOL {
        return Err(Error::MarginalMismatch {
            row_sum: sa,
            col_sum: sb,
        });
    }
    Ok(())
}

/// Optimal cost and a vertex-optimal plan of `min <T, M>` over `U(a, b)`.
pub fn solve_exact_primal(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<(f64, TransportPlan)> {
    let sol = solve_exact(a, b, cost)?;
    Ok((sol.cost, sol.plan))
}

/// Optimal dual potentials with zero-sum `alpha`.
pub fn solve_exact_dual(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<DualPotentials> {
    Ok(solve_exact(a, b, cost)?.duals)
}

/// Solves the transportation LP. Zero entries in `a` or `b` are allowed.
pub fn solve_exact(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<ExactSolution> {
    check_instance(a, b, cost)?;
    let (n, m) = (a.len(), b.len());
    if n * m > EXACT_CELL_LIMIT {
        return Err(Error::InstanceTooLarge {
            solver: "the exact solver",
            rows: n,
            cols: m,
            limit: EXACT_CELL_LIMIT,
        });
    }

    let mut simplex = TransportSimplex::new(a, b, cost.entries());
    simplex.run()?;

    let mut plan = Array2::zeros((n, m));
    for (&(i, j), &x) in simplex.cells.iter().zip(simplex.flow.iter()) {
        plan[[i, j]] += x.max(0.0);
    }
    let plan = TransportPlan::new(plan, a.to_owned(), b.to_owned())?;
    let total = plan.cost(cost);
    let duals = DualPotentials::normalized(Array1::from(simplex.u.clone()), Array1::from(simplex.v.clone()));
    Ok(ExactSolution {
        cost: total,
        plan,
        duals,
        pivots: simplex.pivots,
    })
}

/// Spanning-tree basis of the transportation problem. Row `i` is node `i`,
/// column `j` is node `n + j`.
struct TransportSimplex<'a> {
    n: usize,
    m: usize,
    cost: ArrayView2<'a, f64>,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    adjacency: Vec<Vec<usize>>,
    u: Vec<f64>,
    v: Vec<f64>,
    parent_edge: Vec<usize>,
    depth: Vec<usize>,
    pivots: usize,
}

impl<'a> TransportSimplex<'a> {
    fn new(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: ArrayView2<'a, f64>) -> Self {
        let (n, m) = (a.len(), b.len());
        let mut ra: Vec<f64> = a.to_vec();
        let mut rb: Vec<f64> = b.to_vec();
        let mut cells = Vec::with_capacity(n + m - 1);
        let mut flow = Vec::with_capacity(n + m - 1);

        // north-west corner: a staircase path from (0,0) to (n-1,m-1)
        let (mut i, mut j) = (0, 0);
        loop {
            let x = ra[i].min(rb[j]).max(0.0);
            cells.push((i, j));
            flow.push(x);
            ra[i] -= x;
            rb[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            if i == n - 1 {
                j += 1;
            } else if j == m - 1 || ra[i] <= rb[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        // round-off leftovers land on the last cell
        let last = flow.len() - 1;
        flow[last] += ra[n - 1].min(rb[m - 1]).max(0.0);

        let mut adjacency = vec![Vec::new(); n + m];
        for (e, &(i, j)) in cells.iter().enumerate() {
            adjacency[i].push(e);
            adjacency[n + j].push(e);
        }
        Self {
            n,
            m,
            cost,
            cells,
            flow,
            adjacency,
            u: vec![0.0; n],
            v: vec![0.0; m],
            parent_edge: vec![usize::MAX; n + m],
            depth: vec![0; n + m],
            pivots: 0,
        }
    }

    fn other_end(&self, edge: usize, node: usize) -> usize {
        let (i, j) = self.cells[edge];
        if node == i {
            self.n + j
        } else {
            i
        }
    }

    /// Potentials with `u[0] = 0`, plus parent pointers rooted at row 0.
    fn compute_potentials(&mut self) {
        let total = self.n + self.m;
        let mut seen = vec![false; total];
        let mut stack = vec![0usize];
        seen[0] = true;
        self.u[0] = 0.0;
        self.parent_edge[0] = usize::MAX;
        self.depth[0] = 0;
        while let Some(node) = stack.pop() {
            for k in 0..self.adjacency[node].len() {
                let e = self.adjacency[node][k];
                let next = self.other_end(e, node);
                if seen[next] {
                    continue;
                }
                seen[next] = true;
                let (i, j) = self.cells[e];
                let c = self.cost[[i, j]];
                if next >= self.n {
                    self.v[j] = c - self.u[i];
                } else {
                    self.u[i] = c - self.v[j];
                }
                self.parent_edge[next] = e;
                self.depth[next] = self.depth[node] + 1;
                stack.push(next);
            }
        }
    }

    /// Dantzig pricing with lowest-index tie-breaking; Bland's rule (first
    /// improving cell) when `bland` is set.
    fn entering(&self, tol: f64, bland: bool) -> Option<(usize, usize)> {
        let mut best = -tol;
        let mut arg = None;
        for i in 0..self.n {
            let ui = self.u[i];
            let row = self.cost.row(i);
            for j in 0..self.m {
                let r = row[j] - ui - self.v[j];
                if r < best {
                    if bland {
                        return Some((i, j));
                    }
                    best = r;
                    arg = Some((i, j));
                }
            }
        }
        arg
    }

    /// Tree path from column node of `j` to row node `i`, in order.
    fn cycle(&self, i: usize, j: usize) -> Vec<usize> {
        let mut from_col = Vec::new();
        let mut from_row = Vec::new();
        let (mut x, mut y) = (self.n + j, i);
        while self.depth[x] > self.depth[y] {
            let e = self.parent_edge[x];
            from_col.push(e);
            x = self.other_end(e, x);
        }
        while self.depth[y] > self.depth[x] {
            let e = self.parent_edge[y];
            from_row.push(e);
            y = self.other_end(e, y);
        }
        while x != y {
            let e = self.parent_edge[x];
            from_col.push(e);
            x = self.other_end(e, x);
            let e = self.parent_edge[y];
            from_row.push(e);
            y = self.other_end(e, y);
        }
        from_col.extend(from_row.into_iter().rev());
        from_col
    }

    fn run(&mut self) -> Result<()> {
        let scale = self.cost.iter().copied().fold(0.0, f64::max);
        if scale == 0.0 {
            self.compute_potentials();
            return Ok(());
        }
        let tol = PIVOT_TOL * scale;
        let limit = 100 * self.n * self.m + 1000;
        let mut degenerate_streak = 0usize;
        loop {
            self.compute_potentials();
            let bland = degenerate_streak > 2 * (self.n + self.m);
            let Some((ei, ej)) = self.entering(tol, bland) else {
                return Ok(());
            };
            if self.pivots >= limit {
                return Err(Error::PivotLimit(limit));
            }
            self.pivots += 1;

            // signs alternate along the path, starting with - next to the column
            let path = self.cycle(ei, ej);
            let mut leave = usize::MAX;
            let mut theta = f64::INFINITY;
            for (k, &e) in path.iter().enumerate() {
                if k % 2 == 0 {
                    let f = self.flow[e];
                    let better =
                        f < theta || (f == theta && leave != usize::MAX && self.cell_index(e) < self.cell_index(leave));
                    if better {
                        theta = f;
                        leave = e;
                    }
                }
            }
            let theta = theta.max(0.0);
            degenerate_streak = if theta == 0.0 { degenerate_streak + 1 } else { 0 };
            for (k, &e) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[e] -= theta;
                } else {
                    self.flow[e] += theta;
                }
            }

            let (li, lj) = self.cells[leave];
            self.adjacency[li].retain(|&e| e != leave);
            self.adjacency[self.n + lj].retain(|&e| e != leave);
            self.cells[leave] = (ei, ej);
            self.flow[leave] = theta;
            self.adjacency[ei].push(leave);
            self.adjacency[self.n + ej].push(leave);
        }
    }

    fn cell_index(&self, e: usize) -> usize {
        let (i, j) = self.cells[e];
        i * self.m + j
    }
}

/// Exact optimum by enumerating every basic solution of `U(a, b)`.
///
/// Each set of `n + m - 1` cells forming a spanning tree of the bipartite
/// row/column graph determines one basic solution; leaf peeling recovers its
/// flows, and the cheapest nonnegative one is the optimum. Only for
/// `n * m <= 25`.
pub fn brute_force_cost(a: ArrayView1<f64>, b: ArrayView1<f64>, cost: &CostMatrix) -> Result<f64> {
    check_instance(a, b, cost)?;
    let (n, m) = (a.len(), b.len());
    if n * m > BRUTE_FORCE_CELL_LIMIT {
        return Err(Error::InstanceTooLarge {
            solver: "brute force",
            rows: n,
            cols: m,
            limit: BRUTE_FORCE_CELL_LIMIT,
        });
    }
    let cells = n * m;
    let k = n + m - 1;
    let c = cost.entries();
    let mut best = f64::INFINITY;
    let mut choice: Vec<usize> = (0..k).collect();
    let mut peel = Peeler::new(n, m, a, b);
    loop {
        if let Some(value) = peel.basic_cost(&choice, c) {
            best = best.min(value);
        }
        // next k-combination of 0..cells in lexicographic order
        let mut pos = k;
        while pos > 0 && choice[pos - 1] == cells - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        choice[pos - 1] += 1;
        for q in pos..k {
            choice[q] = choice[q - 1] + 1;
        }
    }
    Ok(best)
}

struct Peeler {
    n: usize,
    m: usize,
    supply: Vec<f64>,
    degree: Vec<usize>,
    residual: Vec<f64>,
    alive: Vec<bool>,
    queue: Vec<usize>,
}

impl Peeler {
    fn new(n: usize, m: usize, a: ArrayView1<f64>, b: ArrayView1<f64>) -> Self {
        let supply = a.iter().chain(b.iter()).copied().collect();
        Self {
            n,
            m,
            supply,
            degree: vec![0; n + m],
            residual: vec![0.0; n + m],
            alive: Vec::new(),
            queue: Vec::new(),
        }
    }

    /// Cost of the basic solution on `edges`, or `None` if the edges do not
    /// form a spanning tree or the solution has a negative flow.
    fn basic_cost(&mut self, edges: &[usize], c: ArrayView2<f64>) -> Option<f64> {
        let (n, m) = (self.n, self.m);
        self.degree.iter_mut().for_each(|d| *d = 0);
        self.residual.copy_from_slice(&self.supply);
        for &e in edges {
            self.degree[e / m] += 1;
            self.degree[n + e % m] += 1;
        }
        if self.degree.contains(&0) {
            return None;
        }
        self.alive.clear();
        self.alive.resize(edges.len(), true);
        self.queue.clear();
        self.queue.extend((0..n + m).filter(|&v| self.degree[v] == 1));

        let mut total = 0.0;
        let mut assigned = 0;
        while let Some(node) = self.queue.pop() {
            if self.degree[node] != 1 {
                continue;
            }
            let Some(k) = (0..edges.len()).find(|&k| {
                self.alive[k] && {
                    let (i, j) = (edges[k] / m, n + edges[k] % m);
                    i == node || j == node
                }
            }) else {
                continue;
            };
            let (i, j) = (edges[k] / m, edges[k] % m);
            let other = if node == i { n + j } else { i };
            let x = self.residual[node];
            if x < -1e-12 {
                return None;
            }
            total += x * c[[i, j]];
            self.residual[other] -= x;
            self.residual[node] = 0.0;
            self.alive[k] = false;
            self.degree[node] = 0;
            self.degree[other] -= 1;
            assigned += 1;
            if self.degree[other] == 1 {
                self.queue.push(other);
            }
        }
        (assigned == edges.len()).then_some(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::build_cost_matrix;
    use ndarray::array;

    fn cm(m: Array2<f64>) -> CostMatrix {
        CostMatrix::precomputed(m).unwrap()
    }

    /// 2x2 plans are `[[t, 0.3-t], [0.6-t, 0.1+t]]` for t in [0, 0.3].
    fn grid_2x2(a: [f64; 2], b: [f64; 2], m: &Array2<f64>, step: f64) -> f64 {
        let hi = a[0].min(b[0]);
        let lo = (a[0] - b[1]).max(0.0);
        let steps = ((hi - lo) / step).round() as usize;
        (0..=steps)
            .map(|s| {
                let t = lo + (hi - lo) * s as f64 / steps as f64;
                t * m[[0, 0]] + (a[0] - t) * m[[0, 1]] + (b[0] - t) * m[[1, 0]] + (a[1] - b[0] + t) * m[[1, 1]]
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn two_by_two_fixture() {
        let m = array![[0.0, 2.0], [1.0, 4.0]];
        let oracle = grid_2x2([0.3, 0.7], [0.6, 0.4], &m, 1e-6);
        assert!((oracle - 1.6).abs() < 1e-9);

        let (a, b) = (array![0.3, 0.7], array![0.6, 0.4]);
        let cost = cm(m);
        let sol = solve_exact(a.view(), b.view(), &cost).unwrap();
        assert!((sol.cost - 1.6).abs() < 1e-12);
        let expected = array![[0.0, 0.3], [0.6, 0.1]];
        for (x, y) in sol.plan.matrix().iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((sol.duals.objective(a.view(), b.view()) - 1.6).abs() < 1e-8);
        assert!(sol.duals.alpha.sum().abs() < 1e-10);
        assert!((brute_force_cost(a.view(), b.view(), &cost).unwrap() - 1.6).abs() < 1e-6);
    }

    #[test]
    fn self_transport_is_free() {
        let x = array![[0.0, 1.0, 3.0, 7.0]];
        let a = array![0.1, 0.2, 0.3, 0.4];
        let cost = build_cost_matrix(x.view(), x.view(), 2.0).unwrap();
        let sol = solve_exact(a.view(), a.view(), &cost).unwrap();
        assert_eq!(sol.cost, 0.0);
        assert_eq!(sol.plan.matrix(), Array2::from_diag(&a));
        assert!(sol.duals.objective(a.view(), a.view()).abs() < 1e-12);
    }

    #[test]
    fn single_row_is_forced() {
        let a = array![1.0];
        let b = array![0.2, 0.5, 0.3];
        let m = array![[3.0, 1.0, 2.0]];
        let cost = cm(m.clone());
        let expected = 0.2 * 3.0 + 0.5 * 1.0 + 0.3 * 2.0;
        let (c, plan) = solve_exact_primal(a.view(), b.view(), &cost).unwrap();
        assert!((c - expected).abs() < 1e-12);
        assert_eq!(plan.matrix().row(0), b);
        assert!((brute_force_cost(a.view(), b.view(), &cost).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn scalar_dual() {
        let cost = cm(array![[2.5]]);
        let d = solve_exact_dual(array![1.0].view(), array![1.0].view(), &cost).unwrap();
        assert_eq!(d.alpha, array![0.0]);
        assert_eq!(d.beta, array![2.5]);
    }

    #[test]
    fn identity_coupling_brute_force() {
        let cost = cm(array![[0.0, 1.0], [1.0, 0.0]]);
        let h = array![0.5, 0.5];
        assert_eq!(brute_force_cost(h.view(), h.view(), &cost).unwrap(), 0.0);
    }

    #[test]
    fn zero_mass_rows_are_allowed() {
        let cost = cm(array![[1.0, 2.0], [0.0, 5.0], [4.0, 0.5]]);
        let a = array![0.5, 0.0, 0.5];
        let b = array![0.5, 0.5];
        let sol = solve_exact(a.view(), b.view(), &cost).unwrap();
        assert!((sol.cost - brute_force_cost(a.view(), b.view(), &cost).unwrap()).abs() < 1e-12);
        assert!(sol.duals.max_violation(&cost) <= 1e-8);
        assert_eq!(sol.plan.row_sums()[1], 0.0);
    }

    #[test]
    fn rejects_bad_marginals_and_sizes() {
        let cost = cm(array![[1.0, 2.0]]);
        assert!(matches!(
            solve_exact(array![0.9].view(), array![0.5, 0.5].view(), &cost),
            Err(Error::MarginalMismatch { .. })
        ));
        let big = cm(Array2::ones((6, 5)));
        let a = Array1::from_elem(6, 1.0 / 6.0);
        let b = Array1::from_elem(5, 0.2);
        assert!(matches!(
            brute_force_cost(a.view(), b.view(), &big),
            Err(Error::InstanceTooLarge { .. })
        ));
    }

    #[test]
    fn degenerate_instance_terminates() {
        // equal marginals on a symmetric cost trigger many degenerate pivots
        let n = 12;
        let x = Array2::from_shape_fn((1, n), |(_, j)| (j % 4) as f64);
        let a = Array1::from_elem(n, 1.0 / n as f64);
        let cost = build_cost_matrix(x.view(), x.view(), 1.0).unwrap();
        let sol = solve_exact(a.view(), a.view(), &cost).unwrap();
        assert!(sol.cost.abs() < 1e-12);
        assert!(sol.duality_gap() < 1e-8);
    }
}
