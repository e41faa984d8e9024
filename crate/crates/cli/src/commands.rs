use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use cate_core::data::Dataset;
use cate_core::dgp::{builtin_spec, draw_dataset};
use cate_core::evaluation::{
    ci_simulation, rate_fit, run_rate_experiment, run_replications, summarize, write_coverage_csv,
    write_rates_csv, write_results_csv, CiSimConfig, RateConfig, RateExperiment, RateRow,
    ReplicationConfig, SampleDesign, TruthSource,
};
use cate_core::inference::{ci_normal, CiMethod};
use cate_core::learner_spec::{parse_learner, parse_learner_list, LearnerContext, NamedLearner};
use cate_core::meta::CateLearner;
use cate_core::rng::derive_seed;
use cate_core::stats::mean;
use cate_core::{data::csv_field, data::format_float, Error as CoreError};
use serde::Serialize;
use thiserror::Error;

use crate::config::{
    Cli, Command, CoverageArgs, EstimateArgs, GenerateArgs, RatesArgs, RunConfig, SimulateArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("{path}: {source}")]
    File { path: String, source: io::Error },

    #[error("{0}")]
    Input(String),

    #[error("results file: {0}")]
    Csv(#[from] csv::Error),

    #[error("{failed} of {total} fits failed for `{learner}`")]
    Failures { learner: String, failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Maps spec and simulation-id mistakes to usage errors.
fn usage_on_bad_input(e: CoreError) -> CliError {
    match e {
        CoreError::LearnerSpec { .. } | CoreError::UnknownSimulation(_) => CliError::Usage(e.to_string()),
        other => CliError::Core(other),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(cli, a),
        Command::Rates(a) => rates(cli, a),
        Command::Estimate(a) => estimate(cli, a),
        Command::Coverage(a) => coverage(cli, a),
        Command::Generate(a) => generate(cli, a),
    }
}

fn open_out(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|source| CliError::File {
            path: p.display().to_string(),
            source,
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Opens the output and writes the `#` provenance line.
fn output<T: Serialize>(cli: &Cli, subcommand: &str, args: &T) -> Result<Box<dyn Write>> {
    let cfg = RunConfig {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        seed: cli.global.seed,
        threads: rayon::current_num_threads(),
        out: cli.global.out.as_ref(),
        args,
    };
    let json = serde_json::to_string(&cfg).expect("config serializes");
    let mut out = open_out(cli.global.out.as_deref())?;
    writeln!(out, "# cate {} {json}", env!("CARGO_PKG_VERSION")).map_err(CoreError::from)?;
    Ok(out)
}

fn finish(mut out: Box<dyn Write>) -> Result<()> {
    out.flush().map_err(CoreError::from)?;
    Ok(())
}

fn context(mut ctx: LearnerContext, trees: Option<usize>, seed: u64) -> LearnerContext {
    if let Some(t) = trees {
        ctx.forest.n_trees = t;
    }
    ctx.forest.seed = seed;
    ctx
}

fn learners(list: &str, ctx: &LearnerContext) -> Result<Vec<NamedLearner>> {
    parse_learner_list(list, ctx).map_err(usage_on_bad_input)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|source| CliError::File {
        path: path.display().to_string(),
        source,
    })?;
    Dataset::read_csv(BufReader::new(file)).map_err(|e| match e {
        CoreError::Parse { line, message } => CliError::Input(format!("{}: line {line}: {message}", path.display())),
        other => other.into(),
    })
}

fn simulate(cli: &Cli, a: &SimulateArgs) -> Result<()> {
    let spec = builtin_spec(a.sim).map_err(usage_on_bad_input)?;
    let ctx = context(LearnerContext::for_spec(&spec), a.trees, cli.global.seed);
    let ls = learners(&a.learners, &ctx)?;
    let refs: Vec<&dyn CateLearner> = ls.iter().map(|l| l as &dyn CateLearner).collect();
    let cfg = ReplicationConfig {
        designs: a.n.iter().map(|&n| SampleDesign::Total(n)).collect(),
        reps: a.reps,
        test_size: a.test_size,
        base_seed: cli.global.seed,
        timing: a.timing,
    };
    let records = run_replications(&spec, &a.sim.to_string(), &refs, &cfg)?;
    let mut out = output(cli, "simulate", a)?;
    write_results_csv(&mut out, &records)?;
    finish(out)?;
    let summary = summarize(&records);
    eprintln!("learner,mean_mse,fits,failures");
    for s in &summary {
        eprintln!("{},{},{},{}", csv_field(&s.learner), format_float(s.mean_mse), s.fits, s.failures);
    }
    for s in summary {
        let total = s.fits + s.failures;
        if s.failures * 10 > total {
            return Err(CliError::Failures {
                learner: s.learner,
                failed: s.failures,
                total,
            });
        }
    }
    Ok(())
}

/// Groups the `mse` column of a results CSV by learner and `n_train`.
fn rates_from_results(path: &Path, experiment: &str) -> Result<Vec<RateRow>> {
    let file = File::open(path).map_err(|source| CliError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Usage(format!("results file lacks a `{name}` column")))
    };
    let (ci, ni, mi) = (col("learner")?, col("n_train")?, col("mse")?);
    type BySize = Vec<(usize, Vec<f64>)>;
    let mut groups: Vec<(String, BySize)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| CliError::Usage(format!("{}: record {}: bad {what}", path.display(), i + 1));
        let learner = rec.get(ci).ok_or_else(|| bad("learner"))?.to_string();
        let n: usize = rec.get(ni).and_then(|v| v.parse().ok()).ok_or_else(|| bad("n_train"))?;
        let mse: f64 = rec.get(mi).and_then(|v| v.parse().ok()).ok_or_else(|| bad("mse"))?;
        if mse.is_nan() {
            continue;
        }
        let by_n = match groups.iter_mut().find(|g| g.0 == learner) {
            Some(g) => &mut g.1,
            None => {
                groups.push((learner, Vec::new()));
                &mut groups.last_mut().expect("just pushed").1
            }
        };
        match by_n.iter_mut().find(|g| g.0 == n) {
            Some(g) => g.1.push(mse),
            None => by_n.push((n, vec![mse])),
        }
    }
    groups
        .into_iter()
        .map(|(learner, by_n)| {
            Ok(RateRow {
                experiment: experiment.to_string(),
                learner,
                fit: rate_fit(&by_n)?,
            })
        })
        .collect()
}

fn rates(cli: &Cli, a: &RatesArgs) -> Result<()> {
    let rows = if let Some(path) = &a.from_results {
        rates_from_results(path, a.experiment.as_deref().unwrap_or("results"))?
    } else {
        let name = a
            .experiment
            .as_deref()
            .ok_or_else(|| CliError::Usage("--experiment is required".into()))?;
        let experiment = RateExperiment::parse(name).map_err(|e| CliError::Usage(e.to_string()))?;
        let mut cfg = RateConfig::new(experiment);
        if let Some(d) = a.d {
            cfg.d = d;
        }
        if !a.n.is_empty() {
            cfg.grid = a.n.clone();
        }
        cfg.sigma = a.sigma;
        cfg.lipschitz = a.lipschitz;
        if let Some(r) = a.reps {
            cfg.reps = r;
        }
        cfg.test_size = a.test_size;
        cfg.seed = cli.global.seed;
        let outcome = run_rate_experiment(&cfg)?;
        eprintln!("target slope {}", format_float(experiment.target_slope(cfg.d)));
        outcome.fits
    };
    let mut out = output(cli, "rates", a)?;
    write_rates_csv(&mut out, &rows)?;
    finish(out)?;
    for r in &rows {
        eprintln!("{} {}: slope {:.4} (se {:.4})", r.experiment, r.learner, r.fit.slope, r.fit.slope_stderr);
    }
    Ok(())
}

fn estimate(cli: &Cli, a: &EstimateArgs) -> Result<()> {
    if a.b < 2 || !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("need --b >= 2 and 0 < --alpha < 1".into()));
    }
    let ds = read_dataset(&a.data)?;
    let ctx = context(LearnerContext::default(), a.trees, cli.global.seed);
    let ls = learners(&a.learners, &ctx)?;
    let mut rows = Vec::new();
    for l in &ls {
        rows.push(ci_normal(&ds, l, ds.features(), a.b, a.alpha, cli.global.seed)?);
    }
    let mut out = output(cli, "estimate", a)?;
    let io = |e: io::Error| CliError::Core(e.into());
    writeln!(out, "row,learner,cate,lower,upper,sigma").map_err(io)?;
    for (l, ints) in ls.iter().zip(&rows) {
        for (i, iv) in ints.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                i + 1,
                csv_field(&l.name()),
                format_float(iv.point),
                format_float(iv.lower),
                format_float(iv.upper),
                format_float(iv.sigma)
            )
            .map_err(io)?;
        }
    }
    finish(out)
}

fn coverage(cli: &Cli, a: &CoverageArgs) -> Result<()> {
    if a.b < 2 || !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage("need --b >= 2 and 0 < --alpha < 1".into()));
    }
    let cfg = CiSimConfig {
        train_size: a.n,
        test_size: a.test_size,
        b: a.b,
        alpha: a.alpha,
        reps: a.reps,
        seed: derive_seed(cli.global.seed, &[1]),
    };
    let rows = if let Some(sim) = a.sim {
        let spec = builtin_spec(sim).map_err(usage_on_bad_input)?;
        let ctx = context(LearnerContext::for_spec(&spec), a.trees, cli.global.seed);
        let ls = learners(&a.learners, &ctx)?;
        let refs: Vec<&dyn CateLearner> = ls.iter().map(|l| l as &dyn CateLearner).collect();
        let pool = a.pool.unwrap_or(a.n + a.test_size);
        let (ds, truth) = draw_dataset(&spec, pool, derive_seed(cli.global.seed, &[0]))?;
        ci_simulation(&ds, TruthSource::Synthetic(&truth), &refs, &cfg)?
    } else {
        let path = a.data.as_ref().expect("clap enforces --sim or --data");
        let ds = read_dataset(path)?;
        let ctx = context(LearnerContext::default(), a.trees, cli.global.seed);
        let ls = learners(&a.learners, &ctx)?;
        let refs: Vec<&dyn CateLearner> = ls.iter().map(|l| l as &dyn CateLearner).collect();
        let truth = parse_learner(&a.truth, &ctx).map_err(usage_on_bad_input)?;
        ci_simulation(&ds, TruthSource::Model(&truth), &refs, &cfg)?
    };
    let mut out = output(cli, "coverage", a)?;
    write_coverage_csv(&mut out, &rows)?;
    finish(out)?;
    for m in [CiMethod::Normal, CiMethod::Smoothed] {
        let cov: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.coverage).collect();
        eprintln!("{m}: mean coverage {:.3}", mean(&cov));
    }
    Ok(())
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<()> {
    let spec = builtin_spec(a.sim).map_err(usage_on_bad_input)?;
    let (ds, truth) = draw_dataset(&spec, a.n, cli.global.seed)?;
    let mut out = output(cli, "generate", a)?;
    ds.write_csv(&mut out)?;
    finish(out)?;
    if let Some(p) = &a.truth_out {
        let mut t = open_out(Some(p))?;
        truth.write_csv(&mut t)?;
        finish(t)?;
    }
    Ok(())
}
