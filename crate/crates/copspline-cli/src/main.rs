//! `copspline` command-line tool: fit, simulate, evaluate, benchmark.
//!
//! Exit codes: 0 success, 2 parse/I-O failure, 3 configuration error,
//! 4 numeric failure.

mod errors;
mod io;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use copspline::copulas::{sample, Copula};
use copspline::estimator::{error_report, evaluate, fit, CopulaDensityEstimate, FitConfig};
use copspline::moments::{moment_vector, population_moments, pseudo_observations};
use copspline::penalty::MarginalSet;
use copspline::quadrature::QuadratureRule;
use copspline::KnotGrid;

use errors::{CliError, CliResult};
use io::{Logger, RunManifest};

#[derive(Parser)]
#[command(name = "copspline", version, about = "Constrained spline copula density estimation")]
struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Emit progress as JSON lines on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a copula density estimate to a sample CSV.
    Fit(FitArgs),
    /// Draw samples from an analytic copula model.
    Simulate(SimulateArgs),
    /// Evaluate a fitted estimate against a truth model or at given points.
    Evaluate(EvaluateArgs),
    /// Monte Carlo sweep over sample sizes and penalty weights.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Sample CSV: n rows, d numeric columns, optional header.
    data: PathBuf,
    /// Cells per axis, e.g. "4,4". Default: ceil(n^(1/(d+4))) per axis.
    #[arg(long)]
    grid: Option<String>,
    /// Penalty weight (>= 0).
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Bivariate marginals: model JSON or a directory of grid CSVs.
    /// Required when --lambda > 0.
    #[arg(long)]
    marginals: Option<PathBuf>,
    /// Solver convergence tolerance.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Solver iteration cap (0 = default).
    #[arg(long, default_value_t = 0)]
    max_iter: usize,
    /// Gauss-Legendre nodes per cell for penalty assembly.
    #[arg(long, default_value_t = 5)]
    quad_nodes: usize,
    /// Output directory for estimate.json and manifest.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Copula model JSON: {"family": ..., "theta"/"rho"/"d": ...}.
    #[arg(long)]
    model: PathBuf,
    /// Number of rows to draw.
    #[arg(long)]
    n: usize,
    /// RNG seed; the output is a pure function of (model, n, seed).
    #[arg(long)]
    seed: u64,
    /// Output CSV path; a manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Estimate JSON produced by `fit`.
    #[arg(long)]
    estimate: PathBuf,
    /// Truth model JSON; reports the L2 distance to it.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Points CSV; reports the fitted density at each row.
    #[arg(long)]
    points: Option<PathBuf>,
    /// Output report JSON path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Truth model JSON used for simulation and error measurement.
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated sample sizes, e.g. "500,2000,8000".
    #[arg(long)]
    ns: String,
    /// Replications per (n, lambda) combination.
    #[arg(long)]
    reps: usize,
    /// Cells per axis, e.g. "4,4". Default: per-n rule of thumb.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated penalty weights, e.g. "0,1".
    #[arg(long, default_value = "0")]
    lambdas: String,
    /// Master seed; per-replication seeds are derived from it.
    #[arg(long)]
    seed: u64,
    /// Output directory for errors.csv, moment-error.csv, manifest.json.
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let log = Logger {
        quiet: cli.quiet,
        json: cli.json_logs,
    };
    let result = match cli.command {
        Command::Fit(args) => cmd_fit(&args, log),
        Command::Simulate(args) => cmd_simulate(&args, log),
        Command::Evaluate(args) => cmd_evaluate(&args, log),
        Command::Benchmark(args) => cmd_benchmark(&args, log),
    };
    if let Err(e) = result {
        eprintln!("copspline: {e}");
        std::process::exit(e.exit_code());
    }
}

fn parse_usize_list(text: &str, what: &str) -> CliResult<Vec<usize>> {
    let values: Result<Vec<usize>, _> = text.split(',').map(|s| s.trim().parse()).collect();
    values.map_err(|_| CliError::Config(format!("{what}: expected comma-separated integers, got '{text}'")))
}

fn parse_f64_list(text: &str, what: &str) -> CliResult<Vec<f64>> {
    let values: Result<Vec<f64>, _> = text.split(',').map(|s| s.trim().parse()).collect();
    values.map_err(|_| CliError::Config(format!("{what}: expected comma-separated numbers, got '{text}'")))
}

fn resolve_grid(arg: &Option<String>, n: usize, d: usize) -> CliResult<KnotGrid> {
    let cells = match arg {
        Some(text) => parse_usize_list(text, "--grid")?,
        None => vec![FitConfig::default_cells(n, d); d],
    };
    if cells.len() != d {
        return Err(CliError::Config(format!(
            "--grid has {} entries but the data has {d} columns",
            cells.len()
        )));
    }
    KnotGrid::new(cells).map_err(CliError::from)
}

fn cmd_fit(args: &FitArgs, log: Logger) -> CliResult<()> {
    let start = Instant::now();
    let data = io::read_sample_csv(&args.data)?;
    let (n, d) = (data.nrows(), data.ncols());
    let grid = resolve_grid(&args.grid, n, d)?;
    log.info(&format!(
        "fitting {n} x {d} sample on grid {:?}, lambda = {}",
        grid.cells(),
        args.lambda
    ));

    let mut config = FitConfig::new(grid);
    config.lambda = args.lambda;
    config.solver_tol = args.tol;
    config.solver_max_iter = args.max_iter;
    config.quad_nodes = args.quad_nodes;
    if let Some(path) = &args.marginals {
        config.marginals = Some(io::read_marginals(path, d)?);
    } else if args.lambda > 0.0 {
        return Err(CliError::Config(
            "--lambda > 0 requires --marginals".into(),
        ));
    }
    let estimate = fit(&data, &config)?;
    log.info(&format!(
        "converged in {} iterations, objective {:.6e}",
        estimate.diagnostics.iterations, estimate.diagnostics.objective
    ));

    fs::create_dir_all(&args.out)?;
    io::write_json(&args.out.join("estimate.json"), &estimate)?;
    let mut manifest = RunManifest::new(
        "fit",
        serde_json::json!({
            "data": args.data.display().to_string(),
            "grid": estimate.grid.cells(),
            "lambda": args.lambda,
            "marginals": args.marginals.as_ref().map(|p| p.display().to_string()),
            "tol": args.tol,
            "max_iter": args.max_iter,
            "quad_nodes": args.quad_nodes,
        }),
        None,
    );
    manifest.digest_input(&args.data)?;
    if let Some(path) = &args.marginals {
        if path.is_file() {
            manifest.digest_input(path)?;
        }
    }
    manifest.finish(start.elapsed(), &args.out.join("manifest.json"))
}

fn cmd_simulate(args: &SimulateArgs, log: Logger) -> CliResult<()> {
    let start = Instant::now();
    let model = io::read_model_json(&args.model)?;
    log.info(&format!(
        "sampling {} rows from {} (d = {}), seed {}",
        args.n,
        model.family(),
        model.dims(),
        args.seed
    ));
    let data = sample(model.as_ref(), args.n, args.seed)?;
    io::write_sample_csv(&args.out, &data)?;

    let mut manifest = RunManifest::new(
        "simulate",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "spec": model.spec(),
            "n": args.n,
        }),
        Some(args.seed),
    );
    manifest.digest_input(&args.model)?;
    manifest.finish(start.elapsed(), &manifest_path_beside(&args.out))
}

/// `<dir>/<stem>.manifest.json` next to a file output.
fn manifest_path_beside(output: &Path) -> PathBuf {
    let stem = output
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "output".into());
    output.with_file_name(format!("{stem}.manifest.json"))
}

#[derive(Serialize)]
struct EvaluateReport {
    schema_version: u32,
    estimate: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    l2_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    densities_csv: Option<String>,
}

fn cmd_evaluate(args: &EvaluateArgs, log: Logger) -> CliResult<()> {
    let start = Instant::now();
    if args.truth.is_none() && args.points.is_none() {
        return Err(CliError::Config(
            "evaluate needs --truth and/or --points".into(),
        ));
    }
    let text = fs::read_to_string(&args.estimate)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.estimate.display())))?;
    let estimate: CopulaDensityEstimate = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{}: {e}", args.estimate.display())))?;
    let d = estimate.grid.dims();

    let l2 = match &args.truth {
        Some(path) => {
            let truth = io::read_model_json(path)?;
            let err = error_report(&estimate, truth.as_ref(), &QuadratureRule::new(5))?;
            log.info(&format!("L2 error vs {}: {err:.6}", truth.family()));
            Some(err)
        }
        None => None,
    };

    let densities_csv = match &args.points {
        Some(path) => {
            let points_data = io::read_sample_csv(path)?;
            if points_data.ncols() != d {
                return Err(CliError::Config(format!(
                    "points have {} columns but the estimate is {d}-dimensional",
                    points_data.ncols()
                )));
            }
            let points: Vec<Vec<f64>> = (0..points_data.nrows())
                .map(|i| points_data.row(i).to_vec())
                .collect();
            let values = evaluate(&estimate, &points)?;
            let csv_path = densities_path_beside(&args.out);
            let mut out = String::new();
            for (u, v) in points.iter().zip(&values) {
                let row: Vec<String> = u.iter().chain(std::iter::once(v)).map(|x| format!("{x}")).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            fs::write(&csv_path, out)?;
            log.info(&format!("wrote {} density values to {}", values.len(), csv_path.display()));
            Some(csv_path.display().to_string())
        }
        None => None,
    };

    let report = EvaluateReport {
        schema_version: 1,
        estimate: args.estimate.display().to_string(),
        l2_error: l2,
        densities_csv,
    };
    io::write_json(&args.out, &report)?;

    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::json!({
            "estimate": args.estimate.display().to_string(),
            "truth": args.truth.as_ref().map(|p| p.display().to_string()),
            "points": args.points.as_ref().map(|p| p.display().to_string()),
        }),
        None,
    );
    manifest.digest_input(&args.estimate)?;
    if let Some(path) = &args.truth {
        manifest.digest_input(path)?;
    }
    if let Some(path) = &args.points {
        manifest.digest_input(path)?;
    }
    manifest.finish(start.elapsed(), &manifest_path_beside(&args.out))
}

/// `<dir>/<stem>.densities.csv` next to the report.
fn densities_path_beside(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.densities.csv"))
}

/// SplitMix64 step; used to derive independent per-replication seeds from
/// the master seed without overlap across the sweep.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

/// Data seed for replication `rep` at sample-size index `n_idx`. Independent
/// of lambda so that all penalty weights see the same simulated data sets.
fn rep_seed(master: u64, n_idx: usize, rep: usize) -> u64 {
    splitmix64(master ^ splitmix64(((n_idx as u64) << 32) | rep as u64))
}

struct BenchTask {
    n_idx: usize,
    n: usize,
    lambda: f64,
    rep: usize,
}

struct BenchRow {
    n: usize,
    lambda: f64,
    rep: usize,
    l2_error: Option<f64>,
    runtime: f64,
    status: String,
}

fn cmd_benchmark(args: &BenchmarkArgs, log: Logger) -> CliResult<()> {
    let start = Instant::now();
    if args.reps == 0 {
        return Err(CliError::Config("--reps must be at least 1".into()));
    }
    let ns = parse_usize_list(&args.ns, "--ns")?;
    let lambdas = parse_f64_list(&args.lambdas, "--lambdas")?;
    if ns.is_empty() || lambdas.is_empty() {
        return Err(CliError::Config("--ns and --lambdas must be non-empty".into()));
    }
    if lambdas.iter().any(|&l| l < 0.0) {
        return Err(CliError::Config("--lambdas must be nonnegative".into()));
    }
    let model = io::read_model_json(&args.model)?;
    let d = model.dims();
    let grids: Vec<KnotGrid> = ns
        .iter()
        .map(|&n| resolve_grid(&args.grid, n, d))
        .collect::<CliResult<_>>()?;

    let pool = build_pool()?;
    log.info(&format!(
        "benchmark: {} x {} x {} runs on {} workers",
        ns.len(),
        lambdas.len(),
        args.reps,
        pool.current_num_threads()
    ));

    let mut tasks = Vec::new();
    for (n_idx, &n) in ns.iter().enumerate() {
        for &lambda in &lambdas {
            for rep in 0..args.reps {
                tasks.push(BenchTask {
                    n_idx,
                    n,
                    lambda,
                    rep,
                });
            }
        }
    }

    let model_ref: &dyn Copula = model.as_ref();
    let grids_ref = &grids;
    let seed = args.seed;
    let rows: Vec<BenchRow> = pool.install(|| {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|task| run_bench_task(task, model_ref, grids_ref, seed))
            .collect()
    });

    // moment errors vs population moments, one pass per (n, rep); the
    // population vector depends only on the grid, so it is computed per n
    let rule = QuadratureRule::new(5);
    let mut moment_rows: Vec<(usize, usize, usize, f64)> = Vec::new();
    for (n_idx, &n) in ns.iter().enumerate() {
        let basis = copspline::basis::TensorBasis::new(grids[n_idx].clone());
        let pop = population_moments(|u| model.density(u), &basis, &rule)?;
        let reps: Vec<Vec<(usize, usize, usize, f64)>> = pool.install(|| {
            use rayon::prelude::*;
            (0..args.reps)
                .into_par_iter()
                .map(|rep| {
                    let data = sample(model_ref, n, rep_seed(seed, n_idx, rep))?;
                    let emp = moment_vector(&pseudo_observations(&data), &basis)?;
                    Ok((0..basis.len())
                        .map(|t| {
                            let diff = emp.values[t] - pop.values[t];
                            (n, rep, t, diff * diff)
                        })
                        .collect())
                })
                .collect::<Result<_, copspline::Error>>()
        })?;
        moment_rows.extend(reps.into_iter().flatten());
    }

    fs::create_dir_all(&args.out)?;
    // rows come back in task order, which is already deterministic (n, lambda, rep)
    let mut errors_csv = String::from("n,lambda,rep,l2_error,runtime,status\n");
    for row in &rows {
        let l2 = row.l2_error.map(|v| format!("{v}")).unwrap_or_default();
        errors_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.n, row.lambda, row.rep, l2, row.runtime, row.status
        ));
    }
    fs::write(args.out.join("errors.csv"), errors_csv)?;

    let mut moments_csv = String::from("n,rep,t,sq_error\n");
    for (n, rep, t, sq) in &moment_rows {
        moments_csv.push_str(&format!("{n},{rep},{t},{sq}\n"));
    }
    fs::write(args.out.join("moment-error.csv"), moments_csv)?;

    let failures = rows.iter().filter(|r| r.status != "ok").count();
    log.info(&format!(
        "benchmark finished: {} rows, {failures} failures",
        rows.len()
    ));

    let mut manifest = RunManifest::new(
        "benchmark",
        serde_json::json!({
            "model": args.model.display().to_string(),
            "spec": model.spec(),
            "ns": ns,
            "reps": args.reps,
            "grids": grids.iter().map(|g| g.cells().to_vec()).collect::<Vec<_>>(),
            "lambdas": lambdas,
        }),
        Some(seed),
    );
    manifest.digest_input(&args.model)?;
    manifest.finish(start.elapsed(), &args.out.join("manifest.json"))
}

fn run_bench_task(
    task: &BenchTask,
    model: &dyn Copula,
    grids: &[KnotGrid],
    master_seed: u64,
) -> BenchRow {
    let tick = Instant::now();
    let result = (|| -> CliResult<f64> {
        let data = sample(model, task.n, rep_seed(master_seed, task.n_idx, task.rep))?;
        let mut config = FitConfig::new(grids[task.n_idx].clone());
        config.lambda = task.lambda;
        if task.lambda > 0.0 {
            config.marginals = Some(MarginalSet::from_model(model)?);
        }
        let estimate = fit(&data, &config)?;
        Ok(error_report(&estimate, model, &QuadratureRule::new(5))?)
    })();
    let runtime = tick.elapsed().as_secs_f64();
    match result {
        Ok(l2) => BenchRow {
            n: task.n,
            lambda: task.lambda,
            rep: task.rep,
            l2_error: Some(l2),
            runtime,
            status: "ok".into(),
        },
        Err(e) => BenchRow {
            n: task.n,
            lambda: task.lambda,
            rep: task.rep,
            l2_error: None,
            runtime,
            status: format!("error: {e}").replace([',', '\n'], ";"),
        },
    }
}

/// Worker pool capped by COPSPLINE_THREADS when set.
fn build_pool() -> CliResult<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var("COPSPLINE_THREADS") {
        let threads: usize = text
            .parse()
            .map_err(|_| CliError::Config(format!("COPSPLINE_THREADS: '{text}' is not a number")))?;
        if threads == 0 {
            return Err(CliError::Config("COPSPLINE_THREADS must be at least 1".into()));
        }
        builder = builder.num_threads(threads);
    }
    builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))
}
