use std::path::PathBuf;
use std::process::ExitCode;

use barycenter_cli::{exit_code, run, ClusterInput, Command, InitSource, RunConfig, Shape};
use barycenter_core::{MixtureSpec, Regularization, WeightConstraintSet};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "barycenter",
    version,
    about = "Wasserstein barycenters of empirical measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    shared: Shared,
}

#[derive(Args)]
struct Shared {
    /// Entropic regularization: a number, `auto` (60/median(M)), `<c>/median` or `<c>/max`.
    #[arg(long, global = true, default_value = "auto")]
    lambda: Regularization,
    /// Ground cost exponent.
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Marginal tolerance for `sinkhorn`; relative objective change for barycenter runs.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Iteration cap for `sinkhorn`; outer iteration cap for barycenter runs.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Weight constraint: `simplex`, `uniform` or `entropy:<tau>`.
    #[arg(long, global = true, default_value = "simplex")]
    constraint: WeightConstraintSet,
    /// Initial step size of the weight updates.
    #[arg(long, global = true)]
    t0: Option<f64>,
    /// Fixed location step in [0, 1] instead of the line search.
    #[arg(long, global = true)]
    step: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Use log-domain Sinkhorn iterations.
    #[arg(long, global = true)]
    log_domain: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact transport cost between two measures.
    Emd { source: PathBuf, target: PathBuf },
    /// Entropically smoothed transport between two measures.
    Sinkhorn { source: PathBuf, target: PathBuf },
    /// Barycenter weights on a fixed support.
    BaryFixed {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// CSV of support points; defaults to the shared grid of PGM inputs or the pooled CSV atoms.
        #[arg(long)]
        support: Option<PathBuf>,
    },
    /// Barycenter with k free atoms.
    BaryFree {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        k: usize,
        /// `random` or a CSV of starting atoms.
        #[arg(long, default_value = "random")]
        init: String,
    },
    /// Free and uniform-weight centroids of a point cloud.
    Cluster {
        /// Weighted point cloud; a synthetic Gaussian mixture when omitted.
        input: Option<PathBuf>,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value = "random")]
        init: String,
        /// Points in the synthetic mixture.
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// Components in the synthetic mixture.
        #[arg(long, default_value_t = 6)]
        components: usize,
    },
    /// Barycenter of generated shape images.
    EllipsesDemo {
        #[arg(long, default_value_t = 20)]
        size: usize,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, value_enum, default_value_t = ShapeArg::Ellipses)]
        shape: ShapeArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ShapeArg {
    Ellipses,
    Squares,
}

fn init_source(init: String) -> InitSource {
    if init == "random" {
        InitSource::Random
    } else {
        InitSource::File(init.into())
    }
}

fn config(cli: Cli) -> RunConfig {
    let command = match cli.command {
        Cmd::Emd { source, target } => Command::Emd { source, target },
        Cmd::Sinkhorn { source, target } => Command::Sinkhorn { source, target },
        Cmd::BaryFixed { inputs, support } => Command::BaryFixed { inputs, support },
        Cmd::BaryFree { inputs, k, init } => Command::BaryFree {
            inputs,
            k,
            init: init_source(init),
        },
        Cmd::Cluster {
            input,
            k,
            init,
            points,
            components,
        } => Command::Cluster {
            input: match input {
                Some(path) => ClusterInput::File(path),
                None => ClusterInput::Synthetic(MixtureSpec {
                    points,
                    components,
                    ..MixtureSpec::default()
                }),
            },
            k,
            init: init_source(init),
        },
        Cmd::EllipsesDemo { size, count, shape } => Command::EllipsesDemo {
            size,
            count,
            shape: match shape {
                ShapeArg::Ellipses => Shape::Ellipses,
                ShapeArg::Squares => Shape::Squares,
            },
        },
    };
    let s = cli.shared;
    RunConfig {
        command,
        lambda: s.lambda,
        p: s.p,
        tol: s.tol,
        max_iter: s.max_iter,
        constraint: s.constraint,
        t0: s.t0,
        step: s.step,
        seed: s.seed,
        out: s.out,
        log_domain: s.log_domain,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are input errors; help and version succeed
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&config(cli)) {
        Ok(report) => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
