//! `l1tcl` command-line interface.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure (or non-convergence under `--strict`).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use l1tcl::bootstrap::{bootstrap, BootstrapConfig};
use l1tcl::data::{load_csv, Dataset, DomainPair};
use l1tcl::error::TclError;
use l1tcl::estimators::{
    run_framework, EstimatorKind, Framework, FrameworkConfig, FrameworkRun, LambdaChoice, PropensityClip,
};
use l1tcl::experiments::{run_grid, run_part, write_grid_results, write_heatmap, GridConfig, PartConfig};
use l1tcl::glm::{fit_mle, GlmFit, LinkKind, Response, SolverConfig};
use l1tcl::selection::{select_lambda_from, smd, Criterion, LambdaGrid, NuisanceReference, SelectionPolicy};
use l1tcl::synthetic::{generate_grid_instance, generate_toy, GridInstanceConfig, ToyConfig};
use l1tcl::transfer::{rough_or, rough_ps};

#[derive(Parser, Debug)]
#[command(name = "l1tcl", version, about = "l1-regularized transfer causal learning")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Master seed; drawn at random and recorded when omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for bootstrap, selection and grid runs.
    #[arg(long, global = true, env = "L1TCL_JOBS")]
    jobs: Option<usize>,
    /// Treat solver non-convergence as a failure (exit 3).
    #[arg(long, global = true)]
    strict: bool,
    /// Print the report as JSON instead of a table.
    #[arg(long, global = true)]
    json: bool,
    /// Output directory for reports, tables and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic domain pair with its ground truth.
    Simulate(SimulateArgs),
    /// Fit nuisance models and report their coefficients.
    FitNuisance(FitNuisanceArgs),
    /// Estimate the average causal effect on the target domain.
    Estimate(EstimateArgs),
    /// Percentile bootstrap of an estimate.
    Bootstrap(BootstrapArgs),
    /// Cross-validated choice of the correction strength.
    SelectLambda(SelectArgs),
    /// Covariate balance of a fitted propensity model.
    Smd(SmdArgs),
    /// Synthetic sweep comparing the three frameworks.
    GridExperiment(GridArgs),
    /// Partition one dataset on a binary covariate and transfer across it.
    Part(PartArgs),
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    source: PathBuf,
    #[command(flatten)]
    cols: ColumnArgs,
}

#[derive(Args, Debug)]
struct ColumnArgs {
    #[arg(long, default_value = "z")]
    treatment_col: String,
    #[arg(long, default_value = "y")]
    outcome_col: String,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum LambdaMode {
    Select,
    Theory,
    Fixed,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[arg(long, default_value = "l1-tcl")]
    framework: Framework,
    #[arg(long, value_enum, default_value = "select")]
    lambda_mode: LambdaMode,
    /// Propensity correction strength (fixed mode).
    #[arg(long)]
    lambda_ps: Option<f64>,
    /// Outcome correction strength (fixed mode).
    #[arg(long)]
    lambda_or: Option<f64>,
    #[command(flatten)]
    select: SelectionArgs,
    /// Propensity clip floor.
    #[arg(long, default_value_t = 1e-6)]
    clip: f64,
    /// Scale covariates by their target SD before fitting.
    #[arg(long)]
    standardize: bool,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SelectionArgs {
    #[arg(long, default_value = "auc")]
    criterion: Criterion,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    no_stratify: bool,
    /// Candidate strengths (comma separated); default is 10^-2.5 .. 10^0.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SolverArgs {
    /// Use the fixed decaying step schedule instead of backtracking.
    #[arg(long)]
    fixed_schedule: bool,
    #[arg(long)]
    max_iters: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SimKind {
    Toy,
    Grid,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(value_enum)]
    kind: SimKind,
    #[arg(long)]
    n_target: Option<usize>,
    #[arg(long)]
    n_source: Option<usize>,
    /// Toy only: prepend an intercept column.
    #[arg(long)]
    intercept: bool,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    s: usize,
    #[arg(long, default_value_t = 0.5)]
    scale: f64,
    #[arg(long, default_value_t = 50)]
    validation: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModelKind {
    Ps,
    Or,
    Both,
}

#[derive(Args, Debug)]
struct FitNuisanceArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_enum, default_value = "both")]
    model: ModelKind,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, default_value = "dr")]
    estimator: EstimatorKind,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct BootstrapArgs {
    #[command(flatten)]
    est: EstimateArgs,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0.9)]
    ci: f64,
    /// Rows per resample; defaults to the target size.
    #[arg(long)]
    resample_size: Option<usize>,
    /// Keep the strengths chosen on the full target.
    #[arg(long)]
    no_reselect: bool,
    /// Reselect over the full grid instead of the reduced one.
    #[arg(long)]
    full_grid: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SelectModel {
    Ps,
    Or,
}

#[derive(Args, Debug)]
struct SelectArgs {
    #[command(flatten)]
    pair: PairArgs,
    #[arg(long, value_enum, default_value = "ps")]
    model: SelectModel,
    #[command(flatten)]
    select: SelectionArgs,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SmdArgs {
    #[arg(long)]
    target: PathBuf,
    /// Needed unless the framework is to-cl.
    #[arg(long)]
    source: Option<PathBuf>,
    #[command(flatten)]
    cols: ColumnArgs,
    #[command(flatten)]
    fit: FitArgs,
}

#[derive(Args, Debug)]
struct GridArgs {
    /// Full 5 x 5 x 3 x 3 sweep with 100 trials per cell.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    d_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    s_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    n_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    ns_values: Option<Vec<usize>>,
    #[arg(long)]
    scale: Option<f64>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct PartArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    cols: ColumnArgs,
    /// Name of the binary covariate that splits the rows.
    #[arg(long)]
    partition_col: String,
    #[arg(long, default_value_t = 1.0)]
    target_label: f64,
    /// Remove the partition column from the covariates.
    #[arg(long)]
    drop_column: bool,
    #[arg(long, default_value = "dr")]
    estimator: EstimatorKind,
    #[command(flatten)]
    fit: FitArgs,
}

enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl From<TclError> for CliError {
    fn from(e: TclError) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

type CliResult<T> = Result<T, CliError>;

/// Report plus bookkeeping shared by every subcommand.
struct Outcome {
    report: Value,
    inputs: Vec<PathBuf>,
    converged: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let g = cli.global.clone();
    if let Some(jobs) = g.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let seed = g.seed.unwrap_or_else(rand::random);
    let started = unix_seconds();
    let (name, outcome) = match &cli.command {
        Command::Simulate(a) => ("simulate", simulate(a, seed, g.out.as_deref())?),
        Command::FitNuisance(a) => ("fit-nuisance", fit_nuisance(a, seed)?),
        Command::Estimate(a) => ("estimate", estimate(a, seed)?),
        Command::Bootstrap(a) => ("bootstrap", run_bootstrap(a, seed, g.out.as_deref())?),
        Command::SelectLambda(a) => ("select-lambda", select(a, seed, g.out.as_deref())?),
        Command::Smd(a) => ("smd", run_smd(a, seed)?),
        Command::GridExperiment(a) => ("grid-experiment", grid(a, seed, g.out.as_deref())?),
        Command::Part(a) => ("part", part(a, seed)?),
    };
    let mut report = outcome.report;
    report["seed"] = json!(seed);
    report["converged"] = json!(outcome.converged);

    if let Some(dir) = &g.out {
        write_file(&dir.join("report.json"), &pretty(&report))?;
        let manifest = json!({
            "command": name,
            "argv": std::env::args().collect::<Vec<_>>(),
            "replay": replay_args(seed),
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "inputs": digests(&outcome.inputs)?,
            "started_unix": started,
            "finished_unix": unix_seconds(),
        });
        write_file(&dir.join("manifest.json"), &pretty(&manifest))?;
    }
    if g.json {
        println!("{}", pretty(&report));
    } else {
        print_table(&report);
    }
    if g.strict && !outcome.converged {
        return Err(CliError::Numerical("a solver hit its iteration cap".into()));
    }
    Ok(())
}

fn unix_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// The invoking arguments with the resolved seed made explicit.
fn replay_args(seed: u64) -> Vec<String> {
    let mut args: Vec<String> = std::env::args().collect();
    if !args.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
        args.push("--seed".into());
        args.push(seed.to_string());
    }
    args
}

fn digests(paths: &[PathBuf]) -> CliResult<Value> {
    let mut out = Vec::new();
    for p in paths {
        let bytes = fs::read(p).map_err(|e| CliError::Data(format!("reading {}: {e}", p.display())))?;
        let hex: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        out.push(json!({ "path": p.display().to_string(), "sha256": hex }));
    }
    Ok(Value::Array(out))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

fn require_out(out: Option<&Path>) -> CliResult<&Path> {
    out.ok_or_else(|| CliError::Usage("this command needs --out".into()))
}

fn print_table(report: &Value) {
    if let Value::Object(map) = report {
        let width = map.keys().map(|k| k.len()).max().unwrap_or(0);
        for (k, v) in map {
            let shown = match v {
                Value::Object(_) | Value::Array(_) => serde_json::to_string(v).unwrap_or_default(),
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            println!("{k:<width$}  {shown}");
        }
    }
}

fn load_pair(p: &PairArgs) -> CliResult<DomainPair> {
    let target = load_csv(&p.target, &p.cols.treatment_col, &p.cols.outcome_col)?;
    let source = load_csv(&p.source, &p.cols.treatment_col, &p.cols.outcome_col)?;
    Ok(DomainPair::new(target, source)?)
}

fn solver_config(a: &SolverArgs) -> SolverConfig {
    let mut s = if a.fixed_schedule {
        SolverConfig::default()
    } else {
        SolverConfig::backtracking()
    };
    s.history_every = 0;
    if let Some(m) = a.max_iters {
        s.max_iters = m;
    }
    s
}

fn policy(a: &SelectionArgs, seed: u64) -> CliResult<SelectionPolicy> {
    let grid = match &a.grid {
        Some(v) => LambdaGrid::new(v.clone()).map_err(|e| CliError::Usage(e.to_string()))?,
        None => LambdaGrid::default_grid(),
    };
    Ok(SelectionPolicy {
        criterion: a.criterion,
        grid,
        k: a.folds,
        stratified: !a.no_stratify,
        seed,
    })
}

fn framework_config(a: &FitArgs, estimator: EstimatorKind, seed: u64) -> CliResult<FrameworkConfig> {
    let fixed_given = a.lambda_ps.is_some() || a.lambda_or.is_some();
    let lambda = match a.lambda_mode {
        LambdaMode::Fixed => {
            let need = |v: Option<f64>, needed: bool, flag: &str| -> CliResult<f64> {
                match (v, needed) {
                    (Some(x), _) if x >= 0.0 && x.is_finite() => Ok(x),
                    (Some(x), _) => Err(CliError::Usage(format!("{flag} must be finite and non-negative, got {x}"))),
                    (None, true) => Err(CliError::Usage(format!("fixed lambda mode needs {flag}"))),
                    (None, false) => Ok(0.0),
                }
            };
            let transfer = a.framework == Framework::Transfer;
            LambdaChoice::Fixed {
                ps: need(a.lambda_ps, transfer && estimator.needs_ps(), "--lambda-ps")?,
                or: need(a.lambda_or, transfer && estimator.needs_or(), "--lambda-or")?,
            }
        }
        _ if fixed_given => {
            return Err(CliError::Usage(
                "--lambda-ps/--lambda-or require --lambda-mode fixed".into(),
            ))
        }
        LambdaMode::Theory => LambdaChoice::Theory,
        LambdaMode::Select => LambdaChoice::Select(policy(&a.select, seed)?),
    };
    Ok(FrameworkConfig {
        framework: a.framework,
        estimator,
        lambda,
        solver: solver_config(&a.solver),
        clip: PropensityClip::new(a.clip).map_err(|e| CliError::Usage(e.to_string()))?,
        standardize: a.standardize,
    })
}

fn coefficients(fit: &GlmFit) -> Vec<f64> {
    fit.coefficients.to_vec()
}

fn run_report(run: &FrameworkRun) -> Value {
    json!({
        "framework": run.framework.to_string(),
        "estimator": run.estimate.estimator.to_string(),
        "tau_hat": run.estimate.value,
        "lambda_ps": run.lambda_ps,
        "lambda_or": run.lambda_or,
        "clipped_rows": run.estimate.clipped_rows,
        "ps_source": run.estimate.ps_source,
        "or_source": run.estimate.or_source,
    })
}

fn simulate(a: &SimulateArgs, seed: u64, out: Option<&Path>) -> CliResult<Outcome> {
    let out = require_out(out)?;
    let (pair, oracle, validation, config) = match a.kind {
        SimKind::Toy => {
            let mut cfg = ToyConfig {
                seed,
                intercept: a.intercept,
                ..ToyConfig::default()
            };
            if let Some(n) = a.n_target {
                cfg.n_target = n;
                cfg.n_target_pool = cfg.n_target_pool.max(n);
            }
            if let Some(n) = a.n_source {
                cfg.n_source = n;
            }
            let (pair, oracle) = generate_toy(&cfg)?;
            (pair, oracle, None, json!(cfg))
        }
        SimKind::Grid => {
            let cfg = GridInstanceConfig {
                validation: a.validation,
                coefficient_scale: a.scale,
                ..GridInstanceConfig::new(a.d, a.s, a.n_target.unwrap_or(100), a.n_source.unwrap_or(2000), seed)
            };
            let inst = generate_grid_instance(&cfg)?;
            (inst.domains, inst.oracle, Some(inst.validation), json!(cfg))
        }
    };
    let save = |name: &str, d: &Dataset| -> CliResult<()> {
        fs::create_dir_all(out).map_err(|e| CliError::Data(e.to_string()))?;
        Ok(d.save_csv(&out.join(name))?)
    };
    save("target.csv", &pair.target)?;
    save("source.csv", &pair.source)?;
    if let Some(v) = &validation {
        save("validation.csv", v)?;
    }
    write_file(&out.join("oracle.json"), &pretty(&oracle))?;
    Ok(Outcome {
        report: json!({
            "kind": format!("{:?}", a.kind).to_lowercase(),
            "config": config,
            "n_target": pair.target.n(),
            "n_source": pair.source.n(),
            "d": pair.d(),
            "true_tau": oracle.true_tau,
        }),
        inputs: vec![],
        converged: true,
    })
}

fn fit_nuisance(a: &FitNuisanceArgs, seed: u64) -> CliResult<Outcome> {
    let pair = load_pair(&a.pair)?;
    let estimator = match a.model {
        ModelKind::Ps => EstimatorKind::Ipw,
        ModelKind::Or => EstimatorKind::Or,
        ModelKind::Both => EstimatorKind::Dr,
    };
    let cfg = framework_config(&a.fit, estimator, seed)?;
    let run = run_framework(&pair, &cfg)?;
    let report = json!({
        "framework": run.framework.to_string(),
        "covariates": pair.target.covariate_names(),
        "ps_coefficients": run.ps_fit.as_ref().map(coefficients),
        "or_treated_coefficients": run.or_fits.as_ref().map(|m| coefficients(&m.treated)),
        "or_control_coefficients": run.or_fits.as_ref().map(|m| coefficients(&m.control)),
        "lambda_ps": run.lambda_ps,
        "lambda_or": run.lambda_or,
        "config": cfg,
    });
    Ok(Outcome {
        report,
        inputs: vec![a.pair.target.clone(), a.pair.source.clone()],
        converged: run.converged,
    })
}

fn estimate(a: &EstimateArgs, seed: u64) -> CliResult<Outcome> {
    let pair = load_pair(&a.pair)?;
    let cfg = framework_config(&a.fit, a.estimator, seed)?;
    let run = run_framework(&pair, &cfg)?;
    let mut report = run_report(&run);
    report["n_target"] = json!(pair.target.n());
    report["n_source"] = json!(pair.source.n());
    report["config"] = json!(cfg);
    Ok(Outcome {
        report,
        inputs: vec![a.pair.target.clone(), a.pair.source.clone()],
        converged: run.converged,
    })
}

fn run_bootstrap(a: &BootstrapArgs, seed: u64, out: Option<&Path>) -> CliResult<Outcome> {
    let pair = load_pair(&a.est.pair)?;
    let cfg = framework_config(&a.est.fit, a.est.estimator, seed)?;
    let bcfg = BootstrapConfig {
        trials: a.trials,
        resample_size: a.resample_size,
        reselect_lambda: !a.no_reselect,
        full_grid: a.full_grid,
        ci_level: a.ci,
        master_seed: seed,
    };
    bcfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let summary = bootstrap(&pair, &cfg, &bcfg)?;
    if let Some(dir) = out {
        let mut buf = Vec::new();
        summary.write_trials_csv(&mut buf)?;
        write_file(&dir.join("bootstrap_trials.csv"), &String::from_utf8_lossy(&buf))?;
    }
    Ok(Outcome {
        report: json!({
            "framework": cfg.framework.to_string(),
            "estimator": cfg.estimator.to_string(),
            "point": summary.point,
            "mean": summary.mean,
            "median": summary.median,
            "ci_level": summary.ci_level,
            "ci_low": summary.ci_low,
            "ci_high": summary.ci_high,
            "trials": a.trials,
            "failure_count": summary.failure_count,
            "config": cfg,
            "bootstrap": bcfg,
        }),
        inputs: vec![a.est.pair.target.clone(), a.est.pair.source.clone()],
        converged: true,
    })
}

fn select(a: &SelectArgs, seed: u64, out: Option<&Path>) -> CliResult<Outcome> {
    let pair = load_pair(&a.pair)?;
    let pol = policy(&a.select, seed)?;
    let solver = solver_config(&a.solver);
    let sel = match a.model {
        SelectModel::Ps => {
            let (src, _) = rough_ps(&pair.source, &solver)?;
            select_lambda_from(&pair.target, NuisanceReference::Propensity(&src), &pol, &solver)
        }
        SelectModel::Or => {
            let src = rough_or(&pair.source, &solver)?;
            select_lambda_from(&pair.target, NuisanceReference::Outcome(&src), &pol, &solver)
        }
    }
    .map_err(|e| match e {
        TclError::InvalidConfig(m) => CliError::Usage(m),
        other => other.into(),
    })?;
    if let Some(dir) = out {
        let mut buf = Vec::new();
        sel.table.write_csv(&mut buf)?;
        write_file(&dir.join("scores.csv"), &String::from_utf8_lossy(&buf))?;
    }
    let means: Vec<Value> = sel
        .table
        .summary
        .iter()
        .map(|s| json!({ "lambda": s.lambda, "mean": s.mean, "valid_folds": s.valid_folds }))
        .collect();
    Ok(Outcome {
        report: json!({
            "model": format!("{:?}", a.model).to_lowercase(),
            "criterion": pol.criterion.to_string(),
            "selected_lambda": sel.lambda,
            "scores": means,
            "policy": pol,
        }),
        inputs: vec![a.pair.target.clone(), a.pair.source.clone()],
        converged: true,
    })
}

fn run_smd(a: &SmdArgs, seed: u64) -> CliResult<Outcome> {
    let target = load_csv(&a.target, &a.cols.treatment_col, &a.cols.outcome_col)?;
    let cfg = framework_config(&a.fit, EstimatorKind::Ipw, seed)?;
    let mut inputs = vec![a.target.clone()];
    let (ps, converged, lambda) = match (&a.source, a.fit.framework) {
        (None, Framework::TargetOnly) => {
            let (fit, trace) = fit_mle(&target, Response::Treatment, LinkKind::Sigmoid, &cfg.solver)?;
            (fit, trace.converged, None)
        }
        (None, f) => return Err(CliError::Usage(format!("framework {f} needs --source"))),
        (Some(path), _) => {
            inputs.push(path.clone());
            let source = load_csv(path, &a.cols.treatment_col, &a.cols.outcome_col)?;
            let run = run_framework(&DomainPair::new(target.clone(), source)?, &cfg)?;
            (run.ps_fit.expect("propensity fitted"), run.converged, run.lambda_ps)
        }
    };
    // fits come back on the raw covariate scale
    let fitted = smd(&target, &ps, cfg.clip)?;
    let constant = smd(&target, &GlmFit::zeros(LinkKind::Sigmoid, target.d()), cfg.clip)?;
    Ok(Outcome {
        report: json!({
            "framework": cfg.framework.to_string(),
            "smd_fitted": fitted,
            "smd_unweighted": constant,
            "degenerate": !fitted.is_finite(),
            "lambda_ps": lambda,
        }),
        inputs,
        converged,
    })
}

fn grid(a: &GridArgs, seed: u64, out: Option<&Path>) -> CliResult<Outcome> {
    let out = require_out(out)?;
    let mut cfg = if a.full { GridConfig::full() } else { GridConfig::default() };
    cfg.seed = seed;
    cfg.solver = solver_config(&a.solver);
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(v) = &a.d_values {
        cfg.d_values = v.clone();
    }
    if let Some(v) = &a.s_values {
        cfg.s_values = v.clone();
    }
    if let Some(v) = &a.n_values {
        cfg.n_values = v.clone();
    }
    if let Some(v) = &a.ns_values {
        cfg.ns_values = v.clone();
    }
    if let Some(s) = a.scale {
        cfg.coefficient_scale = s;
    }
    let cells = run_grid(&cfg)?;
    let mut results = Vec::new();
    write_grid_results(&cells, &mut results)?;
    write_file(&out.join("grid_results.csv"), &String::from_utf8_lossy(&results))?;
    let mut heat = Vec::new();
    write_heatmap(&cells, &mut heat)?;
    write_file(&out.join("heatmap.csv"), &String::from_utf8_lossy(&heat))?;
    let evaluated: Vec<_> = cells.iter().filter(|c| !c.skipped).collect();
    let frac = |f: fn(&&l1tcl::experiments::GridCellResult) -> f64| {
        evaluated.iter().filter(|c| f(c) > 0.0).count() as f64 / evaluated.len().max(1) as f64
    };
    Ok(Outcome {
        report: json!({
            "cells": cells.len(),
            "skipped_cells": cells.len() - evaluated.len(),
            "fraction_better_than_to_cl": frac(|c| c.diff_to_cl),
            "fraction_better_than_merge_cl": frac(|c| c.diff_merge_cl),
            "config": cfg,
        }),
        inputs: vec![],
        converged: true,
    })
}

fn part(a: &PartArgs, seed: u64) -> CliResult<Outcome> {
    let data = load_csv(&a.data, &a.cols.treatment_col, &a.cols.outcome_col)?;
    let column = data
        .covariate_names()
        .iter()
        .position(|c| c == &a.partition_col)
        .ok_or_else(|| CliError::Data(format!("missing column `{}`", a.partition_col)))?;
    let cfg = PartConfig {
        partition_column: column,
        target_label: a.target_label,
        drop_column: a.drop_column,
        framework: framework_config(&a.fit, a.estimator, seed)?,
    };
    let res = run_part(&data, &cfg)?;
    let mut report = run_report(&res.run);
    report["n_target"] = json!(res.n_target);
    report["n_source"] = json!(res.n_source);
    report["partition_col"] = json!(a.partition_col);
    report["target_label"] = json!(a.target_label);
    report["config"] = json!(cfg);
    Ok(Outcome {
        report,
        inputs: vec![a.data.clone()],
        converged: res.run.converged,
    })
}
