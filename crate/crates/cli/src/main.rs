mod config;
mod lowerbound_cmd;

use std::fs;
use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde_json::json;
use vipath::fields::{field_from_arg, parse_field_spec, FieldHandle};
use vipath::reference::{eval_k, vi_residual};
use vipath::solver::{solve_smoothed, solve_worst_case, trace_csv, SolveOptions, SolveResult, Termination};
use vipath::validation::{fd_check, gap_study, grid_vi_oracle, uniform_ball_point};

use config::{Flags, RunConfig};

/// Exit status for a solve that ran out of budget.
const EXIT_BUDGET: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "vipath", version, about = "Path-following VI and fixed-point solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a smoothed instance (with --sigma) or a worst-case one.
    Solve(Flags),
    /// Solve and write the per-iteration trace as CSV.
    Trace(Flags),
    /// Grid VI oracle over the unit disk or ball.
    Oracle(Flags),
    /// Finite-difference and identity checks of a field.
    Check(Flags),
    /// Smallest-singular-value gaps near the path over random perturbations.
    GapStudy(Flags),
    /// Hard-instance construction and query experiments.
    #[command(subcommand)]
    Lowerbound(lowerbound_cmd::LbCommand),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Solve(flags) => solve_cmd(RunConfig::resolve("solve", flags)?, false),
        Command::Trace(flags) => solve_cmd(RunConfig::resolve("trace", flags)?, true),
        Command::Oracle(flags) => oracle_cmd(RunConfig::resolve("oracle", flags)?),
        Command::Check(flags) => check_cmd(RunConfig::resolve("check", flags)?),
        Command::GapStudy(flags) => gap_cmd(RunConfig::resolve("gap-study", flags)?),
        Command::Lowerbound(cmd) => lowerbound_cmd::run(cmd),
    }
}

/// Writes `body` to `path`, or to stdout when there is no path.
pub(crate) fn emit(path: Option<&Path>, body: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{body}");
            Ok(())
        }
    }
}

pub(crate) fn pretty(value: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("JSON values serialize");
    s.push('\n');
    s
}

fn load_field(cfg: &RunConfig) -> Result<FieldHandle<f64>> {
    match (&cfg.field, &cfg.field_file) {
        (Some(arg), None) => Ok(field_from_arg(arg)?),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(parse_field_spec(&text)?)
        }
        (Some(_), Some(_)) => bail!("give either --field or --field-file, not both"),
        (None, None) => bail!("a field is required (--field or --field-file)"),
    }
}

fn result_json(r: &SolveResult, cfg: &RunConfig) -> serde_json::Value {
    let mut v = r.summary_json();
    v["config"] = serde_json::to_value(cfg).expect("config serializes");
    v
}

fn solve_cmd(cfg: RunConfig, full_trace: bool) -> Result<u8> {
    let field = load_field(&cfg)?;
    let opts = SolveOptions { max_iterations: cfg.max_iters };
    let r = match cfg.sigma {
        Some(sigma) => solve_smoothed(field, sigma, cfg.p, cfg.eps, cfg.seed, cfg.mode, &opts)?,
        None => solve_worst_case(field, cfg.eps, cfg.p, cfg.seed, &opts)?,
    };
    let body = pretty(&result_json(&r, &cfg));
    if full_trace {
        emit(cfg.trace_out.as_deref(), &trace_csv(&r.trace))?;
        if let Some(out) = &cfg.out {
            emit(Some(out), &body)?;
        }
    } else {
        emit(cfg.out.as_deref(), &body)?;
        if let Some(t) = &cfg.trace_out {
            emit(Some(t), &trace_csv(&r.trace))?;
        }
    }
    Ok(if r.kind == Termination::BudgetExhausted { EXIT_BUDGET } else { 0 })
}

fn oracle_cmd(cfg: RunConfig) -> Result<u8> {
    let field = load_field(&cfg)?;
    let r = grid_vi_oracle(field.as_ref(), cfg.resolution)?;
    let body = json!({
        "best_point": r.best_point.to_f64_vec(),
        "best_residual": r.best_residual,
        "points_examined": r.points_examined,
        "min_norm_point": r.min_norm_point.to_f64_vec(),
        "min_norm": r.min_norm,
        "config": cfg,
    });
    emit(cfg.out.as_deref(), &pretty(&body))?;
    Ok(0)
}

/// Relative-error limits for analytic and finite-difference-backed fields.
const FD_TOL_ANALYTIC: f64 = 1e-5;
const FD_TOL_NUMERIC: f64 = 1e-4;

fn check_cmd(cfg: RunConfig) -> Result<u8> {
    use rand::SeedableRng;
    let field = load_field(&cfg)?;
    let points = cfg.trials.unwrap_or(100);
    let fd = fd_check(field.as_ref(), points, cfg.seed)?;
    let tol = if field.analytic_jacobian() { FD_TOL_ANALYTIC } else { FD_TOL_NUMERIC };

    // K(x) is orthogonal to x and the VI residual is non-negative.
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut max_orth: f64 = 0.0;
    let mut min_residual = f64::INFINITY;
    for _ in 0..points {
        let x = uniform_ball_point(&mut rng, field.dim());
        let k = eval_k(field.as_ref(), &x)?;
        let scale = field.eval(&x)?.norm() * x.norm_sq() + f64::MIN_POSITIVE;
        max_orth = max_orth.max(k.dot(&x).abs() / scale);
        min_residual = min_residual.min(vi_residual(field.as_ref(), &x)?);
    }
    let pass = fd.jacobian <= tol
        && fd.k_jacobian <= tol
        && fd.k_sq_gradient <= tol
        && max_orth <= 1e-12
        && min_residual >= 0.0;
    let body = json!({
        "field": field.describe(),
        "fd": fd,
        "tolerance": tol,
        "k_orthogonality": max_orth,
        "min_residual": min_residual,
        "pass": pass,
        "config": cfg,
    });
    emit(cfg.out.as_deref(), &pretty(&body))?;
    Ok(if pass { 0 } else { 1 })
}

fn gap_cmd(cfg: RunConfig) -> Result<u8> {
    let field = load_field(&cfg)?;
    let sigma = cfg.sigma.context("gap-study needs --sigma")?;
    let rep = gap_study(field, sigma, cfg.trials.unwrap_or(100), cfg.resolution, cfg.seed)?;
    if let Some(t) = &cfg.trace_out {
        emit(Some(t), &rep.to_csv())?;
    }
    let body = json!({ "summary": rep.summary, "config": cfg });
    emit(cfg.out.as_deref(), &pretty(&body))?;
    Ok(0)
}
