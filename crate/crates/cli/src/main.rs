//! `l1sqp`: run the penalty SQP solver on registry problems or problem files.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use l1sqp::nlp::{check_derivatives, load_polynomial_problem, DerivativeReport};
use l1sqp::qp::random::{random_instance, InstanceShape};
use l1sqp::qp::{self, QpInstance, QpSolution};
use l1sqp::report::{export, render_table, ExportFormat};
use l1sqp::{problems, solve, Config, HessianMode, PolynomialProblem, Report, Vector};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const EXIT_CODES: &str = "\
Exit codes:
  0  converged (or derivative check passed)
  1  usage error
  2  iteration budget exhausted
  3  numerical failure (line search, evaluation, subproblem, failed derivative check)";

#[derive(Parser, Debug)]
#[command(name = "l1sqp", version, about = "Exact l1-penalty SQP with infeasibility detection", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a registry problem, a problem file, or the whole registry.
    #[command(after_help = EXIT_CODES)]
    Solve(SolveArgs),
    /// List the registry problems.
    List,
    /// Print seeded random subproblem instances with their solutions as JSON.
    GenQp(GenQpArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Registry problem name (see `l1sqp list`).
    #[arg(long, conflicts_with_all = ["problem_file", "batch"], required_unless_present_any = ["problem_file", "batch"])]
    problem: Option<String>,
    /// JSON problem document (see docs/problem-format.md).
    #[arg(long, value_name = "PATH", conflicts_with = "batch")]
    problem_file: Option<PathBuf>,
    /// Solve every registry problem, printing results in registry order.
    #[arg(long)]
    batch: bool,
    /// Initial penalty parameter (overrides the registry default).
    #[arg(long)]
    rho0: Option<f64>,
    /// Armijo sufficient-decrease constant in (0, 1).
    #[arg(long)]
    sigma: Option<f64>,
    /// Backtracking factor in (0, 1).
    #[arg(long)]
    tau: Option<f64>,
    /// Stopping tolerance.
    #[arg(long)]
    eps: Option<f64>,
    /// Subproblem matrix: identity, bfgs (damped quasi-Newton) or exact.
    #[arg(long, value_parser = parse_hessian, default_value = "bfgs")]
    hessian: HessianMode,
    /// Subproblems allowed per inner loop.
    #[arg(long)]
    max_inner: Option<usize>,
    /// Outer iterations allowed before giving up.
    #[arg(long)]
    max_outer: Option<usize>,
    /// Restart the quasi-Newton matrix from the identity after every penalty update.
    #[arg(long)]
    reset_hessian: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Compare analytic derivatives with finite differences at the starting
    /// point instead of solving.
    #[arg(long)]
    check_derivatives: bool,
}

#[derive(Args, Debug)]
struct GenQpArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
    Json,
}

fn parse_hessian(s: &str) -> Result<HessianMode, String> {
    s.parse()
}

/// A problem ready to solve.
struct Job {
    problem: PolynomialProblem,
    x0: Vector,
    config: Config,
}

impl SolveArgs {
    fn config(&self, base: Config) -> Config {
        Config {
            rho0: self.rho0.unwrap_or(base.rho0),
            sigma: self.sigma.unwrap_or(base.sigma),
            tau: self.tau.unwrap_or(base.tau),
            eps: self.eps.unwrap_or(base.eps),
            max_inner: self.max_inner.unwrap_or(base.max_inner),
            max_outer: self.max_outer.unwrap_or(base.max_outer),
            hessian: self.hessian,
            reset_hessian: self.reset_hessian,
            ..base
        }
    }

    fn jobs(&self) -> Result<Vec<Job>> {
        let entries = if self.batch {
            problems::all()
        } else if let Some(name) = &self.problem {
            vec![problems::get(name)?]
        } else {
            let path = self.problem_file.as_ref().expect("clap enforces a source");
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let problem = load_polynomial_problem(&text).with_context(|| format!("loading {}", path.display()))?;
            let x0 = problem.x0();
            let config = self.config(Config::default());
            return Ok(vec![Job { problem, x0, config }]);
        };
        Ok(entries
            .into_iter()
            .map(|e| Job {
                config: self.config(e.config(Config::default())),
                problem: e.problem,
                x0: e.x0,
            })
            .collect())
    }
}

fn render(report: &Report, format: Format) -> String {
    match format {
        Format::Table => render_table(report),
        Format::Csv => export(report, ExportFormat::Csv),
        Format::Json => export(report, ExportFormat::Json),
    }
}

fn render_check(name: &str, rep: &DerivativeReport<f64>) -> String {
    let mut out = format!(
        "derivative check for {name} (step {:e}, threshold {:e})\n",
        rep.step, rep.threshold
    );
    for f in &rep.functions {
        out.push_str(&format!(
            "{:>12}  max rel error {:.3e}{}\n",
            f.name,
            f.max_rel_error,
            if f.flagged_components.is_empty() {
                String::new()
            } else {
                format!("  flagged {:?}", f.flagged_components)
            }
        ));
    }
    out.push_str(if rep.passed() { "passed\n" } else { "FAILED\n" });
    out
}

/// Writes to stdout; a closed pipe (`l1sqp ... | head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run_solve(args: &SolveArgs) -> Result<u8> {
    for (flag, v) in [("--rho0", args.rho0), ("--eps", args.eps)] {
        if v.is_some_and(|v| !(v > 0.0 && v.is_finite())) {
            bail!("{flag} must be positive");
        }
    }
    for (flag, v) in [("--sigma", args.sigma), ("--tau", args.tau)] {
        if v.is_some_and(|v| !(v > 0.0 && v < 1.0)) {
            bail!("{flag} must lie in (0, 1)");
        }
    }
    let jobs = args.jobs()?;

    if args.check_derivatives {
        let mut code = 0;
        let mut out = String::new();
        for job in &jobs {
            let rep = match check_derivatives::<f64>(&job.problem, &job.x0, 1e-6) {
                Ok(rep) => rep,
                Err(e) => {
                    eprintln!("error: {e}");
                    code = 3;
                    continue;
                }
            };
            out.push_str(&render_check(l1sqp::NlpProblem::<f64>::name(&job.problem), &rep));
            if !rep.passed() {
                code = 3;
            }
        }
        emit(&out)?;
        return Ok(code);
    }

    for job in &jobs {
        job.config.validate().map_err(anyhow::Error::msg)?;
    }
    // Independent solves run concurrently; output keeps registry order.
    let reports: Vec<Report> = thread::scope(|s| {
        let handles: Vec<_> = jobs
            .iter()
            .map(|job| s.spawn(move || solve(&job.problem, &job.x0, &job.config)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });

    let mut out = String::new();
    if args.format == Format::Json && args.batch {
        out = serde_json::to_string_pretty(&reports)?;
        out.push('\n');
    } else {
        for (i, r) in reports.iter().enumerate() {
            if args.batch && args.format == Format::Csv {
                writeln!(out, "# problem: {}", r.problem)?;
            }
            if args.batch && i > 0 && args.format == Format::Table {
                out.push('\n');
            }
            out.push_str(&render(r, args.format));
            if args.format == Format::Json {
                out.push('\n');
            }
        }
    }
    emit(&out)?;
    for r in &reports {
        if let Some(msg) = &r.message {
            eprintln!("{}: {msg}", r.problem);
        }
    }
    let code = reports.iter().map(|r| r.status.exit_code()).max().unwrap_or(0);
    Ok(code as u8)
}

#[derive(Serialize)]
struct GeneratedQp {
    seed: u64,
    index: usize,
    instance: QpInstance<f64>,
    solution: Option<QpSolution<f64>>,
    error: Option<String>,
}

fn run_gen_qp(args: &GenQpArgs) -> Result<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let items: Vec<GeneratedQp> = (0..args.count)
        .map(|index| {
            let instance: QpInstance<f64> = random_instance(&mut rng, InstanceShape::default());
            let (solution, error) = match qp::solve(&instance) {
                Ok(s) => (Some(s), None),
                Err(e) => (None, Some(e.to_string())),
            };
            GeneratedQp {
                seed: args.seed,
                index,
                instance,
                solution,
                error,
            }
        })
        .collect();
    emit(&(serde_json::to_string_pretty(&items)? + "\n"))?;
    Ok(if items.iter().any(|i| i.error.is_some()) { 3 } else { 0 })
}

fn run_list() -> Result<u8> {
    let mut out = String::new();
    for (name, description) in problems::list() {
        writeln!(out, "{name:<6} {description}")?;
    }
    emit(&out)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Solve(args) => run_solve(args),
        Command::List => run_list(),
        Command::GenQp(args) => run_gen_qp(args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
