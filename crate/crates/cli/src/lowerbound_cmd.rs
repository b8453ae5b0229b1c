use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;
use vipath::lowerbound::{
    build_gv_code, query_harness, HardInstance, HarnessReport, InstanceSpec, LatticePoint, OracleMode, Strategy,
    DEFAULT_EPS, DEFAULT_GAMMA,
};
use vipath::Vector;

use crate::{emit, pretty};

/// Codes up to this `k` have their pairwise distance re-measured by `build`.
const MEASURE_MAX_K: usize = 10;

#[derive(Subcommand, Debug)]
pub enum LbCommand {
    /// Build an instance and report its code.
    Build(InstanceFlags),
    /// Classify a point and evaluate the displacement there.
    Probe {
        #[command(flatten)]
        instance: InstanceFlags,
        /// `origin`, `vertex:U`, `prime:U` or `edge:U,V`, optionally followed
        /// by `*S` to scale the point (e.g. `prime:0*0.5`).
        #[arg(long, conflicts_with = "point_file")]
        at: Option<String>,
        /// JSON array with the point's coordinates.
        #[arg(long)]
        point_file: Option<PathBuf>,
    },
    /// Run a query strategy for a range of seeds; one CSV row per run.
    Harness {
        #[command(flatten)]
        instance: InstanceFlags,
        /// null, exhaustive, random-vertices, lattice-sweep or uniform-ball.
        #[arg(long, default_value = "exhaustive")]
        strategy: String,
        /// Vertex touches or field queries per run.
        #[arg(long)]
        budget: u64,
        /// Runs, with strategy seeds `seed, seed+1, …`.
        #[arg(long, default_value_t = 1)]
        trials: u64,
    },
}

#[derive(Args, Debug, Clone)]
pub struct InstanceFlags {
    /// Instance descriptor JSON `{k, mode, seed, eps, gamma}`.
    #[arg(long, conflicts_with_all = ["k", "mode", "eps", "gamma"])]
    instance: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    /// adversarial or explicit.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl InstanceFlags {
    fn spec(&self) -> Result<InstanceSpec> {
        if let Some(path) = &self.instance {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
        }
        let k = self.k.context("give --k or --instance")?;
        let mode = match self.mode.as_deref().unwrap_or("adversarial") {
            "adversarial" => OracleMode::Adversarial,
            "explicit" => OracleMode::Explicit,
            other => bail!("unknown oracle mode {other:?}; expected adversarial or explicit"),
        };
        Ok(InstanceSpec {
            k,
            mode,
            seed: self.seed,
            eps: self.eps.unwrap_or(DEFAULT_EPS),
            gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
        })
    }
}

pub fn run(cmd: LbCommand) -> Result<u8> {
    match cmd {
        LbCommand::Build(flags) => {
            let spec = flags.spec()?;
            let inst = spec.build()?;
            let code = inst.code();
            let measured = (spec.k <= MEASURE_MAX_K).then(|| code.measured_min_distance());
            let body = json!({
                "instance": spec,
                "dim": inst.dim(),
                "code_length": code.m(),
                "codewords": code.len(),
                "min_distance": code.min_distance(),
                "measured_min_distance": measured,
                "construction": code.construction(),
                "greedy_words": code.greedy_words(),
                "alpha": inst.alpha(),
                "line_end": inst.oracle().line_end(),
            });
            emit(flags.out.as_deref(), &pretty(&body))?;
        }
        LbCommand::Probe { instance, at, point_file } => {
            let spec = instance.spec()?;
            let inst = spec.build()?;
            let x = match (at, point_file) {
                (Some(at), _) => parse_at(&inst, &at)?,
                (None, Some(path)) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    Vector::from_vec(serde_json::from_str(&text).context("point file must be a JSON array")?)
                }
                (None, None) => bail!("give --at or --point-file"),
            };
            let e = inst.evaluate(&x)?;
            let body = json!({
                "instance": spec,
                "norm": x.norm(),
                "region": e.region,
                "displacement_norm": e.displacement.norm(),
                "solution": e.displacement.norm() <= inst.solution_threshold(),
                "turning": e.turning,
                "clamped": e.clamped,
                "oracle_queries": inst.oracle().query_count(),
            });
            emit(instance.out.as_deref(), &pretty(&body))?;
        }
        LbCommand::Harness { instance, strategy, budget, trials } => {
            let spec = instance.spec()?;
            if trials == 0 {
                bail!("--trials must be at least 1");
            }
            let code = Arc::new(build_gv_code(spec.k)?);
            let mut csv = format!("{}\n", HarnessReport::CSV_HEADER);
            for t in 0..trials {
                let seed = instance.seed + t;
                let strat = Strategy::parse(&strategy, seed)?;
                let run_spec = InstanceSpec { seed, ..spec.clone() };
                let inst = HardInstance::new(code.clone(), run_spec.oracle()?, spec.eps, spec.gamma)?;
                let rep = query_harness(&inst, strat, budget)?;
                csv.push_str(&rep.csv_row());
                csv.push('\n');
            }
            emit(instance.out.as_deref(), &csv)?;
        }
    }
    Ok(0)
}

fn parse_at(inst: &HardInstance, at: &str) -> Result<Vector> {
    let (base, scale) = match at.split_once('*') {
        Some((b, s)) => (b, s.trim().parse::<f64>().context("scale after '*' must be a number")?),
        None => (at, 1.0),
    };
    let num = |s: &str| s.trim().parse::<u32>().with_context(|| format!("bad vertex {s:?}"));
    let x = match base.split_once(':') {
        None if base.trim() == "origin" => Vector::zeros(inst.dim()),
        Some(("vertex", u)) => inst.lattice_point(LatticePoint::Vertex(num(u)?))?,
        Some(("prime", u)) => inst.lattice_point(LatticePoint::VertexPrime(num(u)?))?,
        Some(("edge", uv)) => {
            let (u, v) = uv.split_once(',').context("edge needs U,V")?;
            inst.lattice_point(LatticePoint::Edge(num(u)?, num(v)?))?
        }
        _ => bail!("cannot parse point {at:?}"),
    };
    Ok(x.scaled(scale))
}
