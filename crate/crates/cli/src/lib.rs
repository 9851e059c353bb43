//! Drivers behind the `barycenter` command-line tool: input loading, solver
//! runs, and the files each subcommand writes.

mod config;
mod drivers;

pub use config::{ClusterInput, Command, InitSource, RunConfig, Shape};
pub use drivers::{
    demo_barycenter, demo_images, exit_code, load_measure, run, run_bary_fixed, run_bary_free, run_cluster,
    run_ellipses_demo, run_emd, run_sinkhorn, DEMO_OUTER_ITERATIONS,
};
