use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use modcash::benchmarks::make_problem;
use modcash::engine::run;
use modcash::evaluator::ProblemSet;
use modcash::exec::Exec;
use modcash::pipelines::analysis::default_precisions;
use modcash::pipelines::output::{read_runs, write_analysis, write_jsonl, write_outputs, write_repeats, RUNS_FILE};
use modcash::pipelines::{budget_sweep, execute, stability_study, verify_records, ExperimentSpec, LoggedRun, Method, Stage};
use modcash::space::{encode_config, CandidatePair, Hyperparameters, ModuleConfiguration};
use modcash::Error;

#[derive(Parser, Debug)]
#[command(name = "modcash", version, about = "Variant selection and learning-rate tuning for a modular CMA-ES")]
struct Cli {
    /// Worker threads; 1 runs everything sequentially in a fixed order [default: all hardware threads]
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed; overrides the seed of a config file
    #[arg(long, global = true, env = "MODCASH_SEED")]
    seed: Option<u64>,

    /// Print progress to stderr
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one optimization and print its record as a JSON line
    Run(RunArgs),
    /// Enumerate variants with default learning rates (config file, method forced to enumeration_only)
    Enumerate(ExperimentArgs),
    /// Run the method named in a config file and write all result files
    Tune(ExperimentArgs),
    /// Verify one pair with fresh runs
    Verify(VerifyArgs),
    /// Compute ECDF, Kendall and ranking tables from a run log
    Analyze(AnalyzeArgs),
    /// Repeat an integrated tuner over several tuner budgets
    Sweep(SweepArgs),
    /// Repeat an integrated tuner and verify every winner
    Stability(StabilityArgs),
}

#[derive(Args, Debug)]
struct PairArgs {
    /// Configuration id (0..=4607)
    #[arg(long, default_value_t = 0, conflicts_with = "modules")]
    confid: i64,
    /// Module activations as 11 comma-separated values instead of --confid
    #[arg(long, value_delimiter = ',')]
    modules: Option<Vec<u8>>,
    /// Learning rate of the rank-one update [default: standard value for the dimension]
    #[arg(long)]
    c1: Option<f64>,
    /// Cumulation rate of the evolution path [default: standard value]
    #[arg(long)]
    cc: Option<f64>,
    /// Learning rate of the rank-mu update [default: standard value]
    #[arg(long)]
    cmu: Option<f64>,
}

impl PairArgs {
    fn pair(&self, dim: usize) -> modcash::Result<CandidatePair> {
        let config = match &self.modules {
            Some(m) => ModuleConfiguration::new(
                m.as_slice()
                    .try_into()
                    .map_err(|_| Error::InvalidLength { expected: 11, got: m.len() })
                    .and_then(|a: [u8; 11]| encode_config(&a).map(|_| a))?,
            )?,
            None => ModuleConfiguration::from_id(self.confid)?,
        };
        let defaults = CandidatePair::with_defaults(config, dim).hyper;
        let hyper = Hyperparameters::new(
            self.c1.unwrap_or(defaults.c1),
            self.cc.unwrap_or(defaults.cc),
            self.cmu.unwrap_or(defaults.c_mu),
        )?;
        CandidatePair::new(config, hyper)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Benchmark function id
    #[arg(long)]
    fid: u32,
    /// Instance number; 0 is the untransformed function
    #[arg(long, default_value_t = 1)]
    instance: u32,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[command(flatten)]
    pair: PairArgs,
    /// Evaluation budget
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    /// Target precision above the optimum
    #[arg(long, default_value_t = 1e-8)]
    target: f64,
    /// Keep the improvement trace in the output record
    #[arg(long)]
    trace: bool,
    /// Also append the record to this file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON experiment config
    #[arg(long)]
    config: PathBuf,
    /// Results directory, created if absent
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    fid: u32,
    /// Comma-separated instances
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    instances: Vec<u32>,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[command(flatten)]
    pair: PairArgs,
    /// Verification runs, assigned round-robin over the instances
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    /// Target precision [default: 1e-8, or 1e-1 on multimodal functions]
    #[arg(long)]
    precision: Option<f64>,
    /// Results directory, created if absent
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Run log to analyze [default: <out>/runs.jsonl]
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Output directory, created if absent
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Comma-separated ECDF target precisions [default: 51 values from 1e2 to 1e-8]
    #[arg(long, value_delimiter = ',')]
    precisions: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Comma-separated tuner budgets in runs
    #[arg(long, value_delimiter = ',', default_value = "500,2500")]
    budgets: Vec<u64>,
    /// Tuner runs per budget
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Args, Debug)]
struct StabilityArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Independent tuner runs
    #[arg(long, default_value_t = 5)]
    repeats: usize,
}

enum Failure {
    Usage(String),
    Empty,
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NoRecords => Failure::Empty,
            Error::InvalidConfiguration { .. }
            | Error::InvalidLength { .. }
            | Error::InvalidId(_)
            | Error::InvalidHyperparameters(_)
            | Error::UnsupportedFunction(_)
            | Error::InvalidSplitpoint { .. }
            | Error::Config(_) => Failure::Usage(e.to_string()),
            Error::Contract(_) | Error::Io(_) | Error::Json(_) => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(e.to_string())
    }
}

struct Context {
    exec: Exec,
    seed: Option<u64>,
    verbose: u8,
}

impl Context {
    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn load_spec(&self, path: &Path) -> Result<ExperimentSpec, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut spec = ExperimentSpec::from_json(&text)?;
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        spec.exec = self.exec;
        Ok(spec)
    }
}

fn cmd_run(ctx: &Context, a: &RunArgs) -> Result<(), Failure> {
    let pair = a.pair.pair(a.dim)?;
    let problem = make_problem(a.fid, a.instance, a.dim)?;
    if a.budget == 0 {
        return Err(Failure::Usage("--budget must be positive".into()));
    }
    let record = run(pair, &problem, problem.target_for(a.target), a.budget, ctx.seed.unwrap_or(0));
    let record = if a.trace { record } else { record.without_trace() };
    let line = serde_json::to_string(&record).map_err(Error::from)?;
    println!("{line}");
    if let Some(path) = &a.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn cmd_experiment(ctx: &Context, a: &ExperimentArgs, force: Option<Method>) -> Result<(), Failure> {
    let mut spec = ctx.load_spec(&a.config)?;
    if let Some(m) = force {
        spec.method = m;
        spec.validate()?;
    }
    ctx.log(format!("running {:?} on functions {:?}", spec.method, spec.fids));
    let run = execute(&spec)?;
    write_outputs(&a.out, &run)?;
    for f in &run.result().functions {
        let summary = serde_json::json!({
            "fid": f.fid,
            "best": f.best,
            "predicted_ert": f.predicted_ert,
            "verified_ert": f.verified.ert,
            "verified_success_rate": f.verified.success_rate(),
            "runs_spent": f.runs.total(),
        });
        println!("{summary}");
    }
    ctx.log(format!("results written to {}", a.out.display()));
    Ok(())
}

fn cmd_verify(ctx: &Context, a: &VerifyArgs) -> Result<(), Failure> {
    let pair = a.pair.pair(a.dim)?;
    if a.instances.is_empty() || a.runs == 0 || a.budget == 0 {
        return Err(Failure::Usage("--instances, --runs and --budget must be nonempty and positive".into()));
    }
    let mut spec = ExperimentSpec::new(Method::EnumerationOnly, a.budget, None);
    spec.fids = vec![a.fid];
    spec.instances = a.instances.clone();
    spec.dim = a.dim;
    spec.precision = a.precision;
    spec.validate()?;
    let problems: ProblemSet = spec.problem_set(a.fid)?;
    let seed = ctx.seed.unwrap_or(0);
    let records = verify_records(&pair, &problems, a.runs, seed, ctx.exec)?;
    let times: Vec<Option<u64>> = records.iter().map(|r| r.hitting_time).collect();
    let summary = modcash::metrics::ErtSummary::from_times(&times, a.budget, 2.0 * a.budget as f64)?;
    let logged: Vec<LoggedRun> =
        records.into_iter().map(|record| LoggedRun { stage: Stage::Verification, record }).collect();
    fs::create_dir_all(&a.out)?;
    write_jsonl(&a.out.join(RUNS_FILE), &logged)?;
    println!("{}", serde_json::json!({ "pair": pair, "verified": summary }));
    Ok(())
}

fn cmd_analyze(ctx: &Context, a: &AnalyzeArgs) -> Result<(), Failure> {
    let path = a.runs.clone().unwrap_or_else(|| a.out.join(RUNS_FILE));
    if !path.exists() {
        return Err(Failure::Usage(format!("run log {} does not exist", path.display())));
    }
    let runs = read_runs(&path)?;
    let precisions = a.precisions.clone().unwrap_or_else(default_precisions);
    if precisions.is_empty() || precisions.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
        return Err(Failure::Usage("--precisions must be positive and finite".into()));
    }
    let analysis = write_analysis(&a.out, &runs, &precisions)?;
    ctx.log(format!(
        "{} runs: {} ECDF points, {} Kendall entries, {} ranking rows",
        runs.len(),
        analysis.ecdf.len(),
        analysis.kendall.len(),
        analysis.ranking.len()
    ));
    Ok(())
}

fn cmd_sweep(ctx: &Context, a: &SweepArgs) -> Result<(), Failure> {
    let spec = ctx.load_spec(&a.experiment.config)?;
    let results = budget_sweep(&spec, &a.budgets, a.repeats)?;
    write_repeats(&a.experiment.out, "sweep", &results)?;
    for r in &results {
        println!(
            "{}",
            serde_json::json!({
                "tuner_budget": r.tuner_budget, "repeat": r.repeat, "fid": r.fid,
                "predicted_ert": r.predicted_ert, "verified_ert": r.verified.ert,
            })
        );
    }
    Ok(())
}

fn cmd_stability(ctx: &Context, a: &StabilityArgs) -> Result<(), Failure> {
    let spec = ctx.load_spec(&a.experiment.config)?;
    let results = stability_study(&spec, a.repeats)?;
    write_repeats(&a.experiment.out, "stability", &results)?;
    for r in &results {
        println!(
            "{}",
            serde_json::json!({
                "repeat": r.repeat, "fid": r.fid, "best": r.best,
                "predicted_ert": r.predicted_ert, "verified_ert": r.verified.ert,
            })
        );
    }
    Ok(())
}

fn configure_threads(threads: Option<usize>) -> Result<Exec, Failure> {
    match threads {
        Some(0) => Err(Failure::Usage("--threads must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Failure::Internal(e.to_string()))?;
            #[cfg(not(feature = "parallel"))]
            let _ = n;
            Ok(Exec::default())
        }
        None => Ok(Exec::default()),
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let ctx = Context { exec: configure_threads(cli.threads)?, seed: cli.seed, verbose: cli.verbose };
    match &cli.command {
        Command::Run(a) => cmd_run(&ctx, a),
        Command::Enumerate(a) => cmd_experiment(&ctx, a, Some(Method::EnumerationOnly)),
        Command::Tune(a) => cmd_experiment(&ctx, a, None),
        Command::Verify(a) => cmd_verify(&ctx, a),
        Command::Analyze(a) => cmd_analyze(&ctx, a),
        Command::Sweep(a) => cmd_sweep(&ctx, a),
        Command::Stability(a) => cmd_stability(&ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Empty) => {
            eprintln!("error: no records");
            ExitCode::from(3)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("internal error: {msg}");
            ExitCode::from(1)
        }
    }
}
