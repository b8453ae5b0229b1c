//! Query strategies run against a hard instance, counting field queries and
//! the successor/predecessor queries they induce.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::instance::{HardInstance, LatticePoint};
use super::oracle::certified_solutions;
use crate::error::{invalid, Result};
use crate::validation::uniform_ball_point;

/// A query strategy. Vertex-level strategies spend their budget on distinct
/// vertices touched through `S`/`P`; field-level ones on evaluations of `F`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// Makes no queries.
    Null,
    /// Queries `S(u)` and `P(u)` for `u = 0, 1, …`.
    Exhaustive,
    /// Like `Exhaustive` in a seeded random order.
    RandomVertices { seed: u64 },
    /// Evaluates `F` at `x_u` then `x'_u` for `u = 0, 1, …`.
    LatticeSweep,
    /// Evaluates `F` at uniform points of the ball.
    UniformBall { seed: u64 },
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Null => "null",
            Strategy::Exhaustive => "exhaustive",
            Strategy::RandomVertices { .. } => "random_vertices",
            Strategy::LatticeSweep => "lattice_sweep",
            Strategy::UniformBall { .. } => "uniform_ball",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Strategy::RandomVertices { seed } | Strategy::UniformBall { seed } => *seed,
            _ => 0,
        }
    }

    /// Parses `null`, `exhaustive`, `random-vertices`, `lattice-sweep` or
    /// `uniform-ball`, with `seed` for the random ones.
    pub fn parse(name: &str, seed: u64) -> Result<Self> {
        Ok(match name.replace('-', "_").as_str() {
            "null" => Strategy::Null,
            "exhaustive" => Strategy::Exhaustive,
            "random_vertices" => Strategy::RandomVertices { seed },
            "lattice_sweep" => Strategy::LatticeSweep,
            "uniform_ball" => Strategy::UniformBall { seed },
            other => return Err(invalid(format!("unknown strategy {other:?}"))),
        })
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub strategy: String,
    pub seed: u64,
    /// Whether the strategy exhibited a solution: a vertex certified as a
    /// line end by the answers, or a point with `‖G‖ ≤ ε/130`.
    pub found: bool,
    pub value_queries: u64,
    pub oracle_queries: u64,
    /// Distinct vertices named in oracle queries.
    pub touched: usize,
}

impl HarnessReport {
    pub const CSV_HEADER: &'static str = "strategy,seed,value_queries,oracle_queries,touched,found";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.strategy, self.seed, self.value_queries, self.oracle_queries, self.touched, self.found
        )
    }
}

/// Runs `strategy` with `budget` (vertices or field queries) against `inst`.
/// Oracle counts include queries made before the run.
pub fn query_harness(inst: &HardInstance, strategy: Strategy, budget: u64) -> Result<HarnessReport> {
    if budget == 0 {
        return Err(invalid("budget must be at least 1"));
    }
    let size = inst.code().len() as u64;
    let mut found = false;
    let mut value_queries = 0u64;
    let touch = |u: u32| -> Result<bool> {
        inst.oracle().successor(u)?;
        inst.oracle().predecessor(u)?;
        Ok(!certified_solutions(&inst.oracle().log()).is_empty())
    };
    let is_solution = |x: &crate::Vector| -> Result<bool> {
        Ok(inst.displacement(x)?.norm() <= inst.solution_threshold())
    };
    match strategy {
        Strategy::Null => {}
        Strategy::Exhaustive => {
            for u in 0..size.min(budget) as u32 {
                if touch(u)? {
                    found = true;
                    break;
                }
            }
        }
        Strategy::RandomVertices { seed } => {
            let mut order: Vec<u32> = (0..size as u32).collect();
            order.shuffle(&mut ChaCha20Rng::seed_from_u64(seed));
            for &u in order.iter().take(budget as usize) {
                if touch(u)? {
                    found = true;
                    break;
                }
            }
        }
        Strategy::LatticeSweep => {
            'sweep: for u in 0..size as u32 {
                for which in [LatticePoint::Vertex(u), LatticePoint::VertexPrime(u)] {
                    if value_queries >= budget {
                        break 'sweep;
                    }
                    value_queries += 1;
                    if is_solution(&inst.lattice_point(which)?)? {
                        found = true;
                        break 'sweep;
                    }
                }
            }
        }
        Strategy::UniformBall { seed } => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            while value_queries < budget {
                value_queries += 1;
                if is_solution(&uniform_ball_point(&mut rng, inst.dim()))? {
                    found = true;
                    break;
                }
            }
        }
    }
    Ok(HarnessReport {
        strategy: strategy.name().to_owned(),
        seed: strategy.seed(),
        found,
        value_queries,
        oracle_queries: inst.oracle().query_count(),
        touched: inst.oracle().touched(),
    })
}
