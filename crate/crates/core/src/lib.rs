//! Wasserstein barycenters of empirical measures.
//!
//! The crate covers exact transport (network simplex), entropically smoothed
//! transport (Sinkhorn scaling), fixed-support barycenters (accelerated
//! entropic mirror descent on the weights) and free-support 2-Wasserstein
//! barycenters (alternating weight and Newton location updates).

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod datasets;
pub mod error;
pub mod exact;
pub mod fixed;
pub mod free;
pub mod io;
pub mod measures;
pub mod sinkhorn;

pub use datasets::{gaussian_mixture, nested_ellipse_images, MixtureSpec};
pub use error::{Error, Result};
pub use exact::{
    brute_force_cost, solve_exact, solve_exact_dual, solve_exact_primal, DualPotentials, ExactSolution, TransportPlan,
};
pub use fixed::{
    barycenter_fixed_support, bregman_proximal_step, subgradient_alpha_bar, BarycenterTrace, FixedBarycenterProblem,
    FixedBarycenterResult, TraceRecord,
};
pub use free::{
    barycenter_free_support, compare_constraints, lloyd_kmeans, newton_location_update, ConstraintComparison,
    FreeBarycenterProblem, FreeBarycenterResult, Initialization, KMeans, PlanMode, StepRule,
};
pub use measures::{
    build_cost_matrix, grid_measure_from_intensities, normalize_measure, CostMatrix, DiscreteMeasure, Metric,
    WeightConstraintSet,
};
pub use sinkhorn::{
    sinkhorn_log_domain, sinkhorn_scaling, smoothed_dual_alpha, smoothed_primal, smoothed_transport_batch,
    solve_smoothed, GibbsKernel, Regularization, ScalingPair, SinkhornOptions, SinkhornVariant, SmoothedSolution,
    TransportBatch,
};
