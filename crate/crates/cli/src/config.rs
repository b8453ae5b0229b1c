use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use vipath::solver::Mode;

/// Flags shared by the solver-side commands. Any of them may instead come
/// from `--config`, a JSON object with the same names in snake case; flags
/// given on the command line win.
#[derive(Args, Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    /// JSON file of defaults for the flags below.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Builtin field name or inline JSON spec.
    #[arg(long)]
    pub field: Option<String>,
    /// File holding a JSON field spec.
    #[arg(long)]
    pub field_file: Option<PathBuf>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Perturbation scale; omit for the worst-case entry point.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Failure probability.
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// theoretical or adaptive.
    #[arg(long)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub max_iters: Option<u64>,
    /// Main output file (JSON); stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Trace or per-trial CSV file.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    /// Grid spacing for the oracle and the gap study.
    #[arg(long)]
    pub resolution: Option<f64>,
    /// Trials (gap study) or sample points (check).
    #[arg(long)]
    pub trials: Option<u64>,
}

/// Fully resolved configuration, echoed into every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub field: Option<String>,
    pub field_file: Option<PathBuf>,
    pub eps: f64,
    pub sigma: Option<f64>,
    pub p: f64,
    pub seed: u64,
    pub mode: Mode,
    pub max_iters: Option<u64>,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub trace_out: Option<PathBuf>,
    pub resolution: f64,
    pub trials: Option<u64>,
}

pub const DEFAULT_EPS: f64 = 1e-3;
pub const DEFAULT_P: f64 = 0.1;
pub const DEFAULT_RESOLUTION: f64 = 0.01;

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f.clone(); } )*
    };
}

impl RunConfig {
    pub fn resolve(command: &str, flags: Flags) -> Result<Self> {
        let mut merged = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                serde_json::from_str::<Flags>(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => Flags::default(),
        };
        overlay!(merged, flags, field, field_file, eps, sigma, p, seed, mode, max_iters, out, trace_out, resolution, trials);
        let cfg = RunConfig {
            command: command.to_owned(),
            field: merged.field,
            field_file: merged.field_file,
            eps: merged.eps.unwrap_or(DEFAULT_EPS),
            sigma: merged.sigma,
            p: merged.p.unwrap_or(DEFAULT_P),
            seed: merged.seed.unwrap_or(0),
            mode: merged.mode.unwrap_or(Mode::Adaptive),
            max_iters: merged.max_iters,
            out: merged.out,
            trace_out: merged.trace_out,
            resolution: merged.resolution.unwrap_or(DEFAULT_RESOLUTION),
            trials: merged.trials,
        };
        if cfg.field.is_none() && cfg.field_file.is_none() {
            bail!("a field is required (--field or --field-file)");
        }
        if !(cfg.eps > 0.0 && cfg.eps.is_finite()) {
            bail!("--eps must be positive, got {}", cfg.eps);
        }
        if cfg.sigma.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            bail!("--sigma must be non-negative");
        }
        if !(cfg.p > 0.0 && cfg.p < 1.0) {
            bail!("--p must lie in (0, 1), got {}", cfg.p);
        }
        if !(cfg.resolution > 0.0) {
            bail!("--resolution must be positive");
        }
        Ok(cfg)
    }
}
