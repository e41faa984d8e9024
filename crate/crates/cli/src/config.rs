use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "cate", version, about = "CATE meta-learner experiments")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Replicated EMSE runs on a built-in simulation.
    Simulate(SimulateArgs),
    /// Convergence-rate experiments and log-log slope fits.
    Rates(RatesArgs),
    /// Fit on a CSV file and emit CATE estimates with normal bootstrap intervals.
    Estimate(EstimateArgs),
    /// Bootstrap interval coverage under the permutation protocol.
    Coverage(CoverageArgs),
    /// Write a simulated dataset in the `x1..xd,w,y` schema.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub sim: u32,

    /// Comma-separated learner specs, e.g. `s-rf,t-rf,x-rf:tau=ols`.
    #[arg(long)]
    pub learners: String,

    /// Training sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<usize>,

    #[arg(long, default_value_t = 30)]
    pub reps: usize,

    #[arg(long, default_value_t = 10_000)]
    pub test_size: usize,

    /// Trees per forest.
    #[arg(long)]
    pub trees: Option<usize>,

    /// Record per-fit wall time in milliseconds.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RatesArgs {
    /// One of linear-unbalanced, lipschitz-knn, tlearner-lipschitz, semiparam.
    #[arg(long, required_unless_present = "from_results")]
    pub experiment: Option<String>,

    #[arg(long)]
    pub d: Option<usize>,

    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,

    #[arg(long, default_value_t = 1.0)]
    pub lipschitz: f64,

    /// Size grid; the experiment default when omitted.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,

    /// Repetitions per size; the experiment default when omitted.
    #[arg(long)]
    pub reps: Option<usize>,

    #[arg(long, default_value_t = 10_000)]
    pub test_size: usize,

    /// Fit slopes on an existing results CSV instead of simulating.
    #[arg(long)]
    pub from_results: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,

    #[arg(long)]
    pub learners: String,

    #[arg(long, default_value_t = 1000)]
    pub b: usize,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long)]
    pub trees: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CoverageArgs {
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub sim: Option<u32>,

    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub learners: String,

    /// Learner whose full-data fit is adopted as truth with `--data`.
    #[arg(long, default_value = "t-rf")]
    pub truth: String,

    /// Training size per repetition.
    #[arg(long, default_value_t = 1000)]
    pub n: usize,

    #[arg(long, default_value_t = 100)]
    pub test_size: usize,

    /// Rows simulated for `--sim`; defaults to training plus test size.
    #[arg(long)]
    pub pool: Option<usize>,

    #[arg(long, default_value_t = 1)]
    pub reps: usize,

    #[arg(long, default_value_t = 200)]
    pub b: usize,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    #[arg(long)]
    pub trees: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub sim: u32,

    #[arg(long)]
    pub n: usize,

    /// Also write the synthetic truth to this file.
    #[arg(long)]
    pub truth_out: Option<PathBuf>,
}

/// Everything needed to reproduce a run; echoed into output headers.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a, T: Serialize> {
    pub subcommand: &'a str,
    pub version: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub out: Option<&'a PathBuf>,
    pub args: &'a T,
}
