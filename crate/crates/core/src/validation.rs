//! Independent checks: brute-force grid search for VI solutions, sampled
//! residuals, finite-difference derivative checks and the Monte-Carlo
//! spectral-gap study.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{perturb, FieldHandle, VectorField};
use crate::numerics::smallest_singular_pair;
use crate::reference::{grad_k_sq_from, jk_from, k_from, residual_from};
use crate::solver::lk_formula;
use crate::{Matrix, Vector};

/// Largest grid the brute-force searches will enumerate.
pub const GRID_LIMIT: f64 = 1e8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best_point: Vector,
    pub best_residual: f64,
    pub points_examined: u64,
    /// Interior grid point with the smallest `‖F‖`: the fixed-point
    /// candidate when `F` is a displacement. Boundary VI solutions can tie
    /// the residual at zero, so `best_point` alone need not find it.
    pub min_norm_point: Vector,
    pub min_norm: f64,
}

/// Axis-aligned grid of spacing `h` over `[-1, 1]ⁿ`.
#[derive(Clone, Copy, Debug)]
struct Grid {
    n: usize,
    per_axis: u64,
    h: f64,
}

impl Grid {
    fn new(n: usize, h: f64) -> Result<Self> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(invalid(format!("resolution must be positive, got {h}")));
        }
        if n == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        let per_axis = (2.0 / h + 1e-9).floor() + 1.0;
        let required = per_axis.powi(n as i32);
        if required > GRID_LIMIT {
            return Err(Error::GridBudget { required, limit: GRID_LIMIT });
        }
        Ok(Self { n, per_axis: per_axis as u64, h })
    }

    fn len(&self) -> u64 {
        self.per_axis.pow(self.n as u32)
    }

    fn point(&self, mut idx: u64) -> Vector {
        let mut x = Vector::zeros(self.n);
        for i in (0..self.n).rev() {
            x[i] = -1.0 + (idx % self.per_axis) as f64 * self.h;
            idx /= self.per_axis;
        }
        x
    }
}

fn better(a: (f64, u64), b: (f64, u64)) -> (f64, u64) {
    match a.0.total_cmp(&b.0) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if a.1 <= b.1 {
                a
            } else {
                b
            }
        }
    }
}

/// Minimizes the VI residual over every grid point inside the ball and the
/// radial projection onto the sphere of every grid point within `h√n` of it.
pub fn grid_vi_oracle(f: &dyn VectorField<f64>, resolution: f64) -> Result<OracleResult> {
    let grid = Grid::new(f.dim(), resolution)?;
    let band = resolution * (grid.n as f64).sqrt();
    // Candidate 2i is grid point i, candidate 2i+1 its projection.
    let none = (f64::INFINITY, u64::MAX);
    let (best, zero, examined) = (0..grid.len())
        .into_par_iter()
        .map(|i| -> Result<((f64, u64), (f64, u64), u64)> {
            let x = grid.point(i);
            let r = x.norm();
            let (mut best, mut zero, mut count) = (none, none, 0);
            if r <= 1.0 {
                let fx = f.eval(&x)?;
                best = better(best, (residual_from(&x, &fx), 2 * i));
                zero = (fx.norm(), i);
                count += 1;
            }
            if (r - 1.0).abs() <= band && r > 0.0 {
                let p = x.scaled(1.0 / r);
                best = better(best, (residual_from(&p, &f.eval(&p)?), 2 * i + 1));
                count += 1;
            }
            Ok((best, zero, count))
        })
        .try_reduce(
            || (none, none, 0),
            |a, b| Ok((better(a.0, b.0), better(a.1, b.1), a.2 + b.2)),
        )?;
    if best.1 == u64::MAX {
        return Err(invalid("grid contains no point of the ball"));
    }
    let mut point = grid.point(best.1 / 2);
    if best.1 % 2 == 1 {
        point = point.scaled(1.0 / point.norm());
    }
    // Every grid with spacing at most 2 contains the origin or a point near it.
    let min_norm_point = if zero.1 == u64::MAX { point.clone() } else { grid.point(zero.1) };
    Ok(OracleResult {
        best_point: point,
        best_residual: best.0,
        points_examined: examined,
        min_norm_point,
        min_norm: zero.0,
    })
}

/// Uniform point of the unit ball in dimension `n`.
pub fn uniform_ball_point(rng: &mut impl Rng, n: usize) -> Vector {
    loop {
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let g = Vector::from_vec(g);
        if let Some(dir) = g.normalized() {
            let u: f64 = rng.random();
            return dir.scaled(u.powf(1.0 / n as f64));
        }
    }
}

/// `max ⟨F(x), y − x⟩` over `samples` uniform points `y` of the ball.
pub fn sampled_vi_residual(f: &dyn VectorField<f64>, x: &Vector, samples: u64, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(invalid("samples must be at least 1"));
    }
    let fx = f.eval(x)?;
    let fxx = fx.dot(x);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let y = uniform_ball_point(&mut rng, x.len());
        best = best.max(fx.dot(&y) - fxx);
    }
    Ok(best)
}

/// Worst relative deviations between analytic and finite-difference
/// derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub jacobian: f64,
    pub k_jacobian: f64,
    pub k_sq_gradient: f64,
    pub points: u64,
}

/// Finite-difference step used by [`fd_check`].
pub const FD_STEP: f64 = 1e-5;

/// `‖A − B‖_F / max(‖B‖_F, 1)`.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).frobenius_norm() / b.frobenius_norm().max(1.0)
}

fn central_columns(n: usize, x: &Vector, h: f64, mut g: impl FnMut(&Vector) -> Vec<f64>) -> Matrix {
    let rows = g(x).len();
    let mut out = vec![vec![0.0; n]; rows];
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (gp, gm) = (g(&xp), g(&xm));
        for i in 0..rows {
            out[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    // Rows may be fewer than n (the gradient check); pad to square.
    out.resize(n, vec![0.0; n]);
    Matrix::from_rows(&out).expect("square by construction")
}

/// Compares `J_F`, `J_K` and `∇‖K‖²` against central differences at
/// `points` random points of radius at most 0.95.
pub fn fd_check(f: &dyn VectorField<f64>, points: u64, seed: u64) -> Result<FdReport> {
    if points == 0 {
        return Err(invalid("points must be at least 1"));
    }
    let n = f.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut rep = FdReport { points, ..Default::default() };
    let value = |p: &Vector| f.value_raw(p);
    for _ in 0..points {
        let x = uniform_ball_point(&mut rng, n).scaled(0.95);
        let fx = value(&x);
        let jf = f.jacobian_raw(&x);
        let fd_j = central_columns(n, &x, FD_STEP, |p| value(p).into_vec());
        rep.jacobian = rep.jacobian.max(relative_error(&jf, &fd_j));

        let jk = jk_from(&x, &fx, &jf);
        let fd_k = central_columns(n, &x, FD_STEP, |p| k_from(p, &value(p)).into_vec());
        rep.k_jacobian = rep.k_jacobian.max(relative_error(&jk, &fd_k));

        let g = grad_k_sq_from(&x, &fx, &jf);
        let mut g_mat = vec![vec![0.0; n]; n];
        g_mat[0] = g.into_vec();
        let g_mat = Matrix::from_rows(&g_mat).expect("square");
        let fd_g = central_columns(n, &x, FD_STEP, |p| vec![k_from(p, &value(p)).norm_sq()]);
        rep.k_sq_gradient = rep.k_sq_gradient.max(relative_error(&g_mat, &fd_g));
    }
    Ok(rep)
}

/// One perturbed field's near-path probe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapTrial {
    pub seed: u64,
    /// Minimum `sigma_second(J_K)` over near-path cells; `None` without any.
    pub min_gap: Option<f64>,
    pub cell_count: u64,
    /// Cells within this radius of the origin are skipped.
    pub exclusion_radius: f64,
    /// `‖K‖` threshold for a cell to count as near the path.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub trials: u64,
    pub trials_with_cells: u64,
    pub min: Option<f64>,
    pub q10: Option<f64>,
    pub median: Option<f64>,
    pub q90: Option<f64>,
    pub max: Option<f64>,
    pub max_cell_count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapStudyReport {
    pub sigma: f64,
    pub probe_grid: f64,
    pub master_seed: u64,
    pub trials: Vec<GapTrial>,
    pub summary: GapSummary,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    Some(sorted[rank - 1])
}

impl GapStudyReport {
    /// One CSV row per trial.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trial,seed,min_gap,cell_count,exclusion_radius,threshold\n");
        for (i, t) in self.trials.iter().enumerate() {
            let gap = t.min_gap.map_or(String::new(), |g| g.to_string());
            out.push_str(&format!(
                "{i},{},{gap},{},{},{}\n",
                t.seed, t.cell_count, t.exclusion_radius, t.threshold
            ));
        }
        out
    }
}

/// Probes a grid of spacing `probe_grid` for each of `trials` perturbations
/// of `f0`. A cell counts as near the path when `‖K(u)‖ ≤ L_K · probe_grid`;
/// cells inside the initialization radius `‖F̃(0)‖/(5(L₁+L_A))` are skipped
/// since `K` vanishes at the origin.
pub fn gap_study(
    f0: FieldHandle<f64>,
    sigma: f64,
    trials: u64,
    probe_grid: f64,
    seed: u64,
) -> Result<GapStudyReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let n = f0.dim();
    if n > 6 {
        return Err(invalid(format!("gap study probes a grid; dimension {n} is above 6")));
    }
    let grid = Grid::new(n, probe_grid)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let seeds: Vec<u64> = (0..trials).map(|_| rng.next_u64()).collect();
    let base_bounds = f0.bounds();
    let results: Result<Vec<GapTrial>> = seeds
        .par_iter()
        .map(|&s| {
            let field = perturb(f0.clone(), sigma, s)?;
            let l_k = lk_formula(base_bounds.l0, base_bounds.l1, field.a_norm(), field.b_norm());
            let threshold = l_k * probe_grid;
            let l1_eff = base_bounds.l1 + field.a_norm();
            let f_origin = field.value_raw(&Vector::zeros(n)).norm();
            let exclusion_radius =
                if l1_eff > 0.0 { (f_origin / (5.0 * l1_eff)).min(1.0) } else { 0.0 };
            let mut min_gap: Option<f64> = None;
            let mut cells = 0u64;
            for i in 0..grid.len() {
                let u = grid.point(i);
                let r = u.norm();
                if r > 1.0 || r < exclusion_radius {
                    continue;
                }
                let fu = field.eval(&u)?;
                if k_from(&u, &fu).norm() > threshold {
                    continue;
                }
                cells += 1;
                let jk = jk_from(&u, &fu, &field.jacobian(&u)?);
                let gap = smallest_singular_pair(&jk)?.sigma_second;
                min_gap = Some(min_gap.map_or(gap, |g: f64| g.min(gap)));
            }
            Ok(GapTrial { seed: s, min_gap, cell_count: cells, exclusion_radius, threshold })
        })
        .collect();
    let trials_out = results?;
    let mut gaps: Vec<f64> = trials_out.iter().filter_map(|t| t.min_gap).collect();
    gaps.sort_by(f64::total_cmp);
    let summary = GapSummary {
        trials,
        trials_with_cells: gaps.len() as u64,
        min: gaps.first().copied(),
        q10: quantile(&gaps, 0.1),
        median: quantile(&gaps, 0.5),
        q90: quantile(&gaps, 0.9),
        max: gaps.last().copied(),
        max_cell_count: trials_out.iter().map(|t| t.cell_count).max().unwrap_or(0),
    };
    Ok(GapStudyReport { sigma, probe_grid, master_seed: seed, trials: trials_out, summary })
}
