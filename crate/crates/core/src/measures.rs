//! Empirical measures, simplex weights and ground-cost matrices.
//!
//! Point sets are stored column-major: a `d x n` array holds `n` points of
//! `R^d`, one per column.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `sum(weights) == 1` for values already on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A finitely supported probability measure `sum_i a_i delta_{x_i}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    support: Array2<f64>,
    weights: Array1<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure, normalizing `weights` onto the simplex.
    ///
    /// Zero-weight atoms are kept; call [`DiscreteMeasure::pruned`] to drop them.
    pub fn new(support: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if support.ncols() == 0 {
            return Err(Error::DegenerateMeasure("empty support".into()));
        }
        if support.nrows() == 0 {
            return Err(Error::DegenerateMeasure("zero-dimensional support".into()));
        }
        if support.ncols() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} support points but {} weights",
                support.ncols(),
                weights.len()
            )));
        }
        if support.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite support coordinate".into()));
        }
        let weights = normalize_measure(weights.view())?;
        Ok(Self { support, weights })
    }

    /// Uniform weights on the given points.
    pub fn uniform(support: Array2<f64>) -> Result<Self> {
        let n = support.ncols();
        Self::new(support, Array1::ones(n))
    }

    /// Single atom at `point`.
    pub fn dirac(point: &[f64]) -> Result<Self> {
        let support = Array2::from_shape_vec((point.len(), 1), point.to_vec())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::uniform(support)
    }

    /// Measure on the real line.
    pub fn on_line(points: &[f64], weights: &[f64]) -> Result<Self> {
        let support = Array2::from_shape_vec((1, points.len()), points.to_vec())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Self::new(support, Array1::from(weights.to_vec()))
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn dim(&self) -> usize {
        self.support.nrows()
    }

    pub fn len(&self) -> usize {
        self.support.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops zero-weight atoms.
    pub fn pruned(&self) -> Self {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect();
        if keep.len() == self.len() {
            return self.clone();
        }
        Self {
            support: self.support.select(Axis(1), &keep),
            weights: self.weights.select(Axis(0), &keep),
        }
    }

    /// Mean location `sum_i a_i x_i`.
    pub fn mean(&self) -> Array1<f64> {
        self.support.dot(&self.weights)
    }
}

/// How the entries of a [`CostMatrix`] were obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Euclidean,
    SquaredEuclidean,
    Precomputed,
}

/// Pairwise ground costs `D(x_i, y_j)^p`.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    power: f64,
    metric: Metric,
}

impl CostMatrix {
    /// Wraps an arbitrary nonnegative matrix.
    pub fn precomputed(entries: Array2<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("empty cost matrix".into()));
        }
        if entries.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(Error::InvalidArgument(
                "cost entries must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            entries,
            power: 1.0,
            metric: Metric::Precomputed,
        })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Lower median of the strictly positive entries, `None` if there are none.
    pub fn median_positive(&self) -> Option<f64> {
        lower_median_positive(self.entries.iter().copied())
    }

    /// Same matrix with rows permuted: row `i` of the result is row `perm[i]`.
    pub fn permute_rows(&self, perm: &[usize]) -> Self {
        Self {
            entries: self.entries.select(Axis(0), perm),
            ..self.clone()
        }
    }
}

/// Lower median over strictly positive values; zero entries (coincident
/// points) are ignored.
pub fn lower_median_positive(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut pos: Vec<f64> = values.into_iter().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return None;
    }
    let k = (pos.len() - 1) / 2;
    let (_, median, _) = pos.select_nth_unstable_by(k, f64::total_cmp);
    Some(*median)
}

/// `entries[i][j] = |x_i - y_j|^p` for columns `x_i` of `x` and `y_j` of `y`.
///
/// For `p == 2` the squared distances come from the Gram expansion
/// `|x|^2 1^T + 1 |y|^2^T - 2 X^T Y`, with negative round-off clamped to zero.
pub fn build_cost_matrix(x: ArrayView2<f64>, y: ArrayView2<f64>, p: f64) -> Result<CostMatrix> {
    if x.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::InvalidArgument("empty point set".into()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "points live in R^{} and R^{}",
            x.nrows(),
            y.nrows()
        )));
    }
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::InvalidArgument(format!("exponent p must be >= 1, got {p}")));
    }

    let entries = if p == 2.0 {
        let mut m = gram_squared_distances(x, y);
        if x == y {
            // exact zeros and symmetry for a self-cost
            for i in 0..m.nrows() {
                m[[i, i]] = 0.0;
                for j in 0..i {
                    m[[i, j]] = m[[j, i]];
                }
            }
        }
        m
    } else {
        let mut m = Array2::zeros((x.ncols(), y.ncols()));
        for (i, xi) in x.axis_iter(Axis(1)).enumerate() {
            for (j, yj) in y.axis_iter(Axis(1)).enumerate() {
                let sq: f64 = xi.iter().zip(yj.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                m[[i, j]] = sq.sqrt().powf(p);
            }
        }
        m
    };
    let metric = if p == 2.0 {
        Metric::SquaredEuclidean
    } else {
        Metric::Euclidean
    };
    Ok(CostMatrix {
        entries,
        power: p,
        metric,
    })
}

fn gram_squared_distances(x: ArrayView2<f64>, y: ArrayView2<f64>) -> Array2<f64> {
    let xx = x.map_axis(Axis(0), |c| c.dot(&c));
    let yy = y.map_axis(Axis(0), |c| c.dot(&c));
    let mut m = x.t().dot(&y);
    for ((i, j), v) in m.indexed_iter_mut() {
        *v = (xx[i] + yy[j] - 2.0 * *v).max(0.0);
    }
    m
}

/// Rescales a nonnegative vector onto the probability simplex.
pub fn normalize_measure(raw: ArrayView1<f64>) -> Result<Array1<f64>> {
    if raw.is_empty() {
        return Err(Error::DegenerateMeasure("empty weight vector".into()));
    }
    if raw.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::DegenerateMeasure(
            "weights must be finite and nonnegative".into(),
        ));
    }
    let total: f64 = raw.sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateMeasure("all weights are zero".into()));
    }
    Ok(raw.mapv(|w| w / total))
}

/// Shannon entropy `-sum a_i log a_i` (with `0 log 0 = 0`).
pub fn entropy(a: ArrayView1<f64>) -> f64 {
    a.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.ln()).sum()
}

/// Grid coordinates of an `h x w` image in `[0,1]^2`, row-major pixel order.
///
/// Pixel `(i, j)` sits at `(i/(h-1), j/(w-1))`, with a zero coordinate along
/// an axis of length one.
pub fn grid_support(h: usize, w: usize) -> Array2<f64> {
    let scale = |k: usize, len: usize| {
        if len <= 1 {
            0.0
        } else {
            k as f64 / (len - 1) as f64
        }
    };
    let mut pts = Array2::zeros((2, h * w));
    for i in 0..h {
        for j in 0..w {
            pts[[0, i * w + j]] = scale(i, h);
            pts[[1, i * w + j]] = scale(j, w);
        }
    }
    pts
}

/// Reads an intensity image as a measure on `[0,1]^2`.
pub fn grid_measure_from_intensities(image: ArrayView2<f64>, prune: bool) -> Result<DiscreteMeasure> {
    let (h, w) = image.dim();
    if h == 0 || w == 0 {
        return Err(Error::DegenerateMeasure("empty image".into()));
    }
    let weights: Array1<f64> = image.iter().copied().collect();
    let measure = DiscreteMeasure::new(grid_support(h, w), weights)?;
    Ok(if prune { measure.pruned() } else { measure })
}

/// Feasible set `Theta` for barycenter weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WeightConstraintSet {
    /// The whole simplex.
    FullSimplex,
    /// Only the uniform vector `1/n`.
    UniformSingleton,
    /// `{a in simplex : H(a) >= tau}`.
    EntropyLevelSet(f64),
}

impl WeightConstraintSet {
    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(Error::InvalidArgument("empty weight vector".into()));
        }
        if let WeightConstraintSet::EntropyLevelSet(tau) = *self {
            let max = (n as f64).ln();
            if !(0.0..=max + 1e-12).contains(&tau) {
                return Err(Error::InvalidArgument(format!(
                    "entropy level {tau} outside [0, log {n}] = [0, {max}]"
                )));
            }
        }
        Ok(())
    }

    /// Minimizer of the negative entropy over the set.
    pub fn prox_center(&self, n: usize) -> Array1<f64> {
        Array1::from_elem(n, 1.0 / n as f64)
    }

    /// Membership test, with `tol` slack on the simplex and entropy constraints.
    /// The uniform singleton is checked exactly.
    pub fn contains(&self, a: ArrayView1<f64>, tol: f64) -> bool {
        let n = a.len();
        if n == 0 {
            return false;
        }
        match *self {
            WeightConstraintSet::UniformSingleton => {
                let u = 1.0 / n as f64;
                a.iter().all(|&v| v == u)
            }
            WeightConstraintSet::FullSimplex => on_simplex(a, tol),
            WeightConstraintSet::EntropyLevelSet(tau) => on_simplex(a, tol) && entropy(a) >= tau - tol,
        }
    }
}

impl std::str::FromStr for WeightConstraintSet {
    type Err = Error;

    /// Parses `simplex`, `uniform` or `entropy:<tau>`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simplex" => Ok(Self::FullSimplex),
            "uniform" => Ok(Self::UniformSingleton),
            _ => match s.strip_prefix("entropy:") {
                Some(t) => t
                    .parse::<f64>()
                    .ok()
                    .filter(|t| t.is_finite() && *t >= 0.0)
                    .map(Self::EntropyLevelSet)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad entropy level `{t}`"))),
                None => Err(Error::InvalidArgument(format!(
                    "unknown constraint `{s}` (expected simplex, uniform or entropy:<tau>)"
                ))),
            },
        }
    }
}

pub(crate) fn on_simplex(a: ArrayView1<f64>, tol: f64) -> bool {
    a.iter().all(|&v| v >= 0.0 && v.is_finite()) && (a.sum() - 1.0).abs() <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_points(rng: &mut ChaCha8Rng, d: usize, n: usize, scale: f64) -> Array2<f64> {
        Array2::from_shape_fn((d, n), |_| rng.random_range(-scale..scale))
    }

    #[test]
    fn cost_matrix_on_line() {
        let x = array![[0.0, 1.0]];
        let y = array![[0.0, 2.0]];
        let m = build_cost_matrix(x.view(), y.view(), 2.0).unwrap();
        assert_eq!(m.entries(), array![[0.0, 4.0], [1.0, 1.0]]);
        assert_eq!(m.metric(), Metric::SquaredEuclidean);
    }

    #[test]
    fn gram_path_matches_direct_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_points(&mut rng, 2, 3, 1.0);
        let y = random_points(&mut rng, 2, 4, 1.0);
        let m = build_cost_matrix(x.view(), y.view(), 2.0).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let dx = x[[0, i]] - y[[0, j]];
                let dy = x[[1, i]] - y[[1, j]];
                assert!((m.entries()[[i, j]] - (dx * dx + dy * dy)).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn cost_matrix_rejects_bad_inputs() {
        let x = array![[0.0, 1.0]];
        let y = array![[0.0], [1.0]];
        assert!(matches!(
            build_cost_matrix(x.view(), y.view(), 2.0),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            build_cost_matrix(x.view(), x.view(), 0.5),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_measure(array![2.0, 2.0].view()).unwrap(), array![0.5, 0.5]);
        assert_eq!(
            normalize_measure(array![1.0, 0.0, 3.0].view()).unwrap(),
            array![0.25, 0.0, 0.75]
        );
        assert!(normalize_measure(array![0.0, 0.0].view()).is_err());
        assert!(normalize_measure(array![1.0, -0.5].view()).is_err());
    }

    #[test]
    fn image_measures() {
        let m = grid_measure_from_intensities(array![[1.0, 1.0]].view(), true).unwrap();
        assert_eq!(m.support(), array![[0.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.weights(), array![0.5, 0.5]);

        let m = grid_measure_from_intensities(array![[1.0, 0.0], [0.0, 3.0]].view(), true).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.weights(), array![0.25, 0.75]);
        assert_eq!(m.support(), array![[0.0, 1.0], [0.0, 1.0]]);

        let unpruned = grid_measure_from_intensities(array![[1.0, 0.0], [0.0, 3.0]].view(), false).unwrap();
        assert_eq!(unpruned.len(), 4);

        assert!(grid_measure_from_intensities(Array2::zeros((3, 3)).view(), true).is_err());
    }

    #[test]
    fn random_image_counts_positive_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Array2::from_shape_fn((20, 20), |_| {
            if rng.random_bool(0.4) {
                rng.random_range(0.01..1.0)
            } else {
                0.0
            }
        });
        let mut positive = 0;
        for v in img.iter() {
            if *v > 0.0 {
                positive += 1;
            }
        }
        let m = grid_measure_from_intensities(img.view(), true).unwrap();
        assert_eq!(m.len(), positive);
        assert!((m.weights().sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn median_uses_lower_median_of_positive_entries() {
        assert_eq!(lower_median_positive([0.0, 4.0, 1.0, 3.0, 2.0]), Some(2.0));
        assert_eq!(lower_median_positive([0.0, 5.0, 1.0, 0.0]), Some(1.0));
        assert_eq!(lower_median_positive([0.0, 0.0]), None);
    }

    #[test]
    fn constraint_parsing_and_membership() {
        assert_eq!(
            "simplex".parse::<WeightConstraintSet>().unwrap(),
            WeightConstraintSet::FullSimplex
        );
        assert_eq!(
            "entropy:0.5".parse::<WeightConstraintSet>().unwrap(),
            WeightConstraintSet::EntropyLevelSet(0.5)
        );
        assert!("bogus".parse::<WeightConstraintSet>().is_err());
        assert!(WeightConstraintSet::EntropyLevelSet(2.0).validate(3).is_err());
        assert!(WeightConstraintSet::EntropyLevelSet(1.0).validate(3).is_ok());

        let u = Array1::from_elem(3, 1.0 / 3.0);
        assert!(WeightConstraintSet::UniformSingleton.contains(u.view(), 0.0));
        assert!(!WeightConstraintSet::UniformSingleton.contains(array![0.5, 0.25, 0.25].view(), 1e-3));
        assert!(!WeightConstraintSet::EntropyLevelSet(1.0).contains(array![0.9, 0.05, 0.05].view(), 1e-10));
    }

    proptest! {
        #[test]
        fn self_cost_is_symmetric_with_zero_diagonal(
            coords in proptest::collection::vec(-10.0f64..10.0, 2..24),
            p in 1.0f64..4.0,
        ) {
            let n = coords.len() / 2;
            let x = Array2::from_shape_vec((2, n), coords[..2 * n].to_vec()).unwrap();
            for power in [p, 2.0] {
                let m = build_cost_matrix(x.view(), x.view(), power).unwrap();
                for i in 0..n {
                    prop_assert_eq!(m.entries()[[i, i]], 0.0);
                    for j in 0..n {
                        prop_assert_eq!(m.entries()[[i, j]], m.entries()[[j, i]]);
                    }
                }
            }
        }

        #[test]
        fn gram_and_direct_paths_agree(seed in any::<u64>(), n in 1usize..8, m in 1usize..8, d in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_points(&mut rng, d, n, 10.0);
            let y = random_points(&mut rng, d, m, 10.0);
            let gram = build_cost_matrix(x.view(), y.view(), 2.0).unwrap();
            // p = 1 takes the entrywise path
            let direct = build_cost_matrix(x.view(), y.view(), 1.0).unwrap();
            for (g, dd) in gram.entries().iter().zip(direct.entries().iter()) {
                prop_assert!((g - dd * dd).abs() <= 1e-9);
            }
        }

        #[test]
        fn normalize_is_scale_invariant_and_idempotent(
            raw in proptest::collection::vec(0.0f64..100.0, 1..20),
            c in 1e-3f64..1e3,
        ) {
            prop_assume!(raw.iter().any(|&v| v > 0.0));
            let w = Array1::from(raw);
            let once = normalize_measure(w.view()).unwrap();
            let scaled = normalize_measure((&w * c).view()).unwrap();
            let twice = normalize_measure(once.view()).unwrap();
            for i in 0..once.len() {
                prop_assert!((once[i] - scaled[i]).abs() <= 1e-12);
                prop_assert!((once[i] - twice[i]).abs() <= 1e-12);
            }
            prop_assert!((once.sum() - 1.0).abs() <= 1e-12);
        }
    }
}
