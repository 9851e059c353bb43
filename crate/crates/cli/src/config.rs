use std::path::PathBuf;

use barycenter_core::{MixtureSpec, Regularization, WeightConstraintSet};

/// One invocation of the tool.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub lambda: Regularization,
    /// Ground cost exponent, `M_ij = |x_i - y_j|^p`.
    pub p: f64,
    /// Sinkhorn marginal tolerance for `sinkhorn`; relative objective change
    /// for the barycenter loops.
    pub tol: Option<f64>,
    /// Sinkhorn iterations for `sinkhorn`; outer iterations for the
    /// barycenter loops.
    pub max_iter: Option<usize>,
    pub constraint: WeightConstraintSet,
    /// Mirror-descent step size on the weights.
    pub t0: Option<f64>,
    /// Fixed location step in `[0, 1]` instead of the line search.
    pub step: Option<f64>,
    pub seed: u64,
    pub out: PathBuf,
    pub log_domain: bool,
}

impl RunConfig {
    pub fn new(command: Command, out: impl Into<PathBuf>) -> Self {
        Self {
            command,
            lambda: Regularization::AUTO,
            p: 2.0,
            tol: None,
            max_iter: None,
            constraint: WeightConstraintSet::FullSimplex,
            t0: None,
            step: None,
            seed: 0,
            out: out.into(),
            log_domain: false,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Command {
    /// Exact transport between two measures.
    Emd { source: PathBuf, target: PathBuf },
    /// Smoothed transport between two measures.
    Sinkhorn { source: PathBuf, target: PathBuf },
    /// Barycenter weights on a fixed support. Without `support`, PGM inputs
    /// use their shared pixel grid and CSV inputs the union of their atoms.
    BaryFixed {
        inputs: Vec<PathBuf>,
        support: Option<PathBuf>,
    },
    /// Barycenter with `k` free atoms.
    BaryFree {
        inputs: Vec<PathBuf>,
        k: usize,
        init: InitSource,
    },
    /// Free and uniform-weight centroids of one point cloud.
    Cluster {
        input: ClusterInput,
        k: usize,
        init: InitSource,
    },
    /// Barycenter of generated shape images on a square grid.
    EllipsesDemo { size: usize, count: usize, shape: Shape },
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitSource {
    /// Atoms sampled from the pooled inputs by mass, using the seed.
    Random,
    /// Atoms read from a CSV file.
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ClusterInput {
    File(PathBuf),
    /// Gaussian mixture drawn with the run's seed.
    Synthetic(MixtureSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    /// Two nested random ellipse outlines per image.
    Ellipses,
    /// One filled square per image, same size, random position.
    Squares,
}
