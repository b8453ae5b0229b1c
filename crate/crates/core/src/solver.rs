//! Path-following solver: initialization onto the path near the origin, the
//! predictor/corrector loop, parameter derivation and the smoothed and
//! worst-case entry points.
//!
//! Two modes share the loop. `Theoretical` runs the fixed step sizes, fixed
//! push-back count and iteration budget that the analysis prescribes, with
//! universal constant `C = 4`; at any realistic size those numbers are far
//! out of reach, and the mode exists to expose them. `Adaptive` estimates the
//! spectral gap and the Lipschitz constant of `K` from the last few path
//! points and guards each forward step with a backoff.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fields::{perturb, FieldHandle, LipschitzBounds, VectorField, DOMAIN_SLACK};
use crate::numerics::operator_norm;
use crate::reference::{
    grad_k_sq_from, jk_from, k_from, orient_kernel, predicate_from, residual_from, vi_residual,
    PredicateState,
};
use crate::Vector;

/// Universal constant fixed in the theoretical formulas.
pub const UNIVERSAL_C: f64 = 4.0;
/// Default iteration cap in adaptive mode.
pub const ADAPTIVE_DEFAULT_MAX_ITERS: u64 = 200_000;
/// Theoretical runs refuse push-back counts above this.
pub const THEORETICAL_PUSHBACK_LIMIT: u64 = 1_000_000_000;

const WINDOW: usize = 10;
const THETA_FLOOR: f64 = 1e-12;
const ETA1_CAP: f64 = 0.05;
const ETA1_MIN: f64 = 1e-14;
const PUSHBACK_HARD_CAP: u64 = 10_000;
const MAX_CLAMPS: u64 = 100;
const MAX_DEGENERATE_RUN: u32 = 10;
const ADAPTIVE_EPS_INIT: f64 = 1e-10;
const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Theoretical,
    Adaptive,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Theoretical => "theoretical",
            Mode::Adaptive => "adaptive",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theoretical" => Ok(Mode::Theoretical),
            "adaptive" => Ok(Mode::Adaptive),
            other => Err(invalid(format!("unknown mode {other:?}; expected theoretical or adaptive"))),
        }
    }
}

/// Lipschitz constant of `K` on the ball.
pub fn lk_formula(l0: f64, l1: f64, l_a: f64, l_b: f64) -> f64 {
    4.0 * l_a + 4.0 * l_b + 5.0 * l0 + l1
}

/// Lipschitz constant of `J_K` on the ball.
pub fn lj_formula(l0: f64, l1: f64, l2: f64, l_a: f64, l_b: f64) -> f64 {
    8.0 * l_a + 4.0 * l_b + 8.0 * l1 + 8.0 * l0 + l2
}

/// Bounds that depend on the drawn perturbation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivedBounds {
    pub dim: usize,
    /// `‖A‖_op` of the sampled matrix.
    pub l_a: f64,
    /// `‖b‖` of the sampled offset.
    pub l_b: f64,
    /// Lower bound assumed for `‖F̃(0)‖`: `σ p^{1/n} / C`.
    pub r_b: f64,
    pub l_k: f64,
    pub l_j: f64,
    /// Path-length bound `Cⁿ σ^{−(3n−3)} L_K^{3n−3} / p³`.
    pub t_budget: f64,
}

impl DerivedBounds {
    pub fn new(bounds: &LipschitzBounds, l_a: f64, l_b: f64, sigma: f64, p: f64, dim: usize) -> Result<Self> {
        check_p(p)?;
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        bounds.validate()?;
        let n = dim as f64;
        let l_k = lk_formula(bounds.l0, bounds.l1, l_a, l_b);
        let l_j = lj_formula(bounds.l0, bounds.l1, bounds.l2, l_a, l_b);
        let r_b = sigma * p.powf(1.0 / n) / UNIVERSAL_C;
        let e = 3.0 * n - 3.0;
        let t_budget = UNIVERSAL_C.powf(n) * sigma.powf(-e) * l_k.powf(e) / (p * p * p);
        Ok(Self { dim, l_a, l_b, r_b, l_k, l_j, t_budget })
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p must lie in (0, 1), got {p}")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    Ok(())
}

/// Go-forward step, push-back step and push-back count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub eta1: f64,
    pub eta2: f64,
    pub pushback_count: u64,
}

/// The analysis' step sizes for gap `theta`; the push-back count saturates
/// at `u64::MAX`.
pub fn theoretical_steps(theta: f64, l_k: f64, l_j: f64, xi: f64) -> StepSizes {
    let eta1 = (theta * theta / (1024.0 * l_j * l_k)).min(theta.sqrt() * xi / (64.0 * l_k.sqrt()));
    let eta2 = theta * theta / (1024.0 * l_k * l_k * l_k * l_k);
    let pushback_count = (20.0 * l_k * l_k * l_k / (theta * theta * theta)).ceil() as u64;
    StepSizes { eta1, eta2, pushback_count }
}

/// Adaptive step sizes from an estimated gap and local Lipschitz constant.
/// The forward step keeps the `θ²/(L_J L_K)` shape without the 1024 factor;
/// the push-back step is a safe gradient step for `‖K‖²`.
pub fn adaptive_steps(theta_hat: f64, lk_hat: f64, l_j: f64) -> StepSizes {
    let eta1 = (theta_hat * theta_hat / (l_j * lk_hat)).min(ETA1_CAP);
    let eta2 = 1.0 / (4.0 * lk_hat * lk_hat);
    let ratio = lk_hat / theta_hat;
    let pushback_count = ((20.0 * ratio * ratio * ratio).ceil() as u64).min(PUSHBACK_HARD_CAP);
    StepSizes { eta1, eta2, pushback_count }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub eps: f64,
    /// Spectral-gap parameter; a placeholder of 1 in adaptive mode.
    pub theta: f64,
    pub xi: f64,
    pub zeta: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub pushback_count: u64,
    pub eps_init: f64,
    pub max_iterations: u64,
    pub mode: Mode,
    pub l_k: f64,
    pub l_j: f64,
    /// Lipschitz constant used by initialization, `L₁ + L_A`.
    pub l1_eff: f64,
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        for (name, v) in [
            ("theta", self.theta),
            ("xi", self.xi),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eps_init", self.eps_init),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.xi >= 0.5 {
            return Err(invalid(format!("xi must be below 1/2, got {}", self.xi)));
        }
        if self.eps_init >= 1.0 {
            return Err(invalid("eps_init must be below 1"));
        }
        if self.pushback_count == 0 || self.max_iterations == 0 {
            return Err(invalid("push-back count and iteration budget must be positive"));
        }
        if !(self.l_j > 0.0 && self.l_k >= 0.0) {
            return Err(invalid("L_J must be positive"));
        }
        Ok(())
    }
}

/// `ε / (16 (L₁ + L_A + L₀ + L_A + L_B))`.
pub fn xi_formula(eps: f64, bounds: &LipschitzBounds, l_a: f64, l_b: f64) -> f64 {
    eps / (16.0 * (bounds.l1 + l_a + bounds.l0 + l_a + l_b))
}

/// Derives the full parameter bundle. `max_iterations` overrides the budget
/// in either mode.
pub fn derive_params(
    bounds: &LipschitzBounds,
    sampled: &DerivedBounds,
    sigma: f64,
    p: f64,
    eps: f64,
    mode: Mode,
    max_iterations: Option<u64>,
) -> Result<SolverParams> {
    check_p(p)?;
    check_eps(eps)?;
    if !(sigma >= 0.0) {
        return Err(invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    let (l_a, l_b, l_k, l_j) = (sampled.l_a, sampled.l_b, sampled.l_k, sampled.l_j);
    if !(l_j > 0.0) {
        return Err(invalid("the field's bounds give L_J = 0; declare positive bounds"));
    }
    let xi = xi_formula(eps, bounds, l_a, l_b);
    let l1_eff = bounds.l1 + l_a;
    let zeta = sampled.r_b / (5.0 * l1_eff);
    let params = match mode {
        Mode::Theoretical => {
            let n = sampled.dim as i32;
            // σ₁ = σ₂ = σ/√n, so both √n σᵢ factors equal σ.
            let delta = UNIVERSAL_C.powi(-n) * sigma.powi(n) * sigma.powi(4 * n - 1)
                * l_j.powi(-(5 * n - 1))
                * (p * p * p);
            let theta = 2.0 * l_j * delta;
            if !(theta > 0.0) || !theta.is_finite() {
                return Err(Error::Numerical(format!(
                    "theoretical gap parameter is not representable (theta = {theta:e})"
                )));
            }
            let steps = theoretical_steps(theta, l_k, l_j, xi);
            let eps_init = (theta.powf(1.5) / (32.0 * l_k.sqrt() * l_j)).min(xi / 2.0);
            let budget = steps.pushback_count as f64 * sampled.t_budget / (steps.eta1 / 6.0);
            SolverParams {
                eps,
                theta,
                xi,
                zeta,
                eta1: steps.eta1,
                eta2: steps.eta2,
                pushback_count: steps.pushback_count,
                eps_init,
                max_iterations: max_iterations.unwrap_or(budget.ceil() as u64),
                mode,
                l_k,
                l_j,
                l1_eff,
            }
        }
        Mode::Adaptive => {
            let steps = adaptive_steps(1.0, l_k.max(THETA_FLOOR), l_j);
            SolverParams {
                eps,
                theta: 1.0,
                xi,
                zeta,
                eta1: steps.eta1,
                eta2: steps.eta2,
                pushback_count: steps.pushback_count,
                eps_init: (xi / 2.0).min(ADAPTIVE_EPS_INIT),
                max_iterations: max_iterations.unwrap_or(ADAPTIVE_DEFAULT_MAX_ITERS),
                mode,
                l_k,
                l_j,
                l1_eff,
            }
        }
    };
    params.validate()?;
    Ok(params)
}

/// Number of contraction steps for initialization accuracy `eps_init`.
pub fn init_steps(eps_init: f64) -> u32 {
    (1.0 / eps_init).log2().ceil() as u32 + 1
}

/// All iterates `x_0 = 0, x_1, …, x_t` of the initialization map
/// `x ↦ r F(x)/‖F(x)‖` with `r = min(1, ‖F(0)‖/(5L))`.
pub fn initialization_iterates<F: VectorField<f64> + ?Sized>(
    f: &F,
    l1_eff: f64,
    eps_init: f64,
) -> Result<Vec<Vector>> {
    if !(eps_init > 0.0 && eps_init < 1.0) {
        return Err(invalid(format!("eps_init must lie in (0, 1), got {eps_init}")));
    }
    if !(l1_eff >= 0.0) {
        return Err(invalid(format!("Lipschitz constant must be non-negative, got {l1_eff}")));
    }
    let mut x = Vector::zeros(f.dim());
    let f0 = f.eval(&x)?.norm();
    if f0 == 0.0 {
        return Err(Error::DegenerateField("F(0) = 0, nothing to normalize".into()));
    }
    let r = if l1_eff == 0.0 { 1.0 } else { (f0 / (5.0 * l1_eff)).min(1.0) };
    let t = init_steps(eps_init);
    let mut out = vec![x.clone()];
    for i in 0..t {
        let fx = if i == 0 { f.value_raw(&x) } else { f.eval(&x)? };
        let dir = fx.normalized().ok_or_else(|| {
            Error::DegenerateField(format!("F vanished at initialization step {i}"))
        })?;
        x = dir.scaled(r);
        out.push(x.clone());
    }
    Ok(out)
}

/// The last initialization iterate, a point of norm `r` near the path.
pub fn initialize<F: VectorField<f64> + ?Sized>(f: &F, l1_eff: f64, eps_init: f64) -> Result<Vector> {
    let mut it = initialization_iterates(f, l1_eff, eps_init)?;
    Ok(it.pop().expect("at least one step"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Termination {
    Stop,
    Project,
    BudgetExhausted,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::Stop => "Stop",
            Termination::Project => "Project",
            Termination::BudgetExhausted => "BudgetExhausted",
        })
    }
}

/// One path point and the step that left it. The final record has no step:
/// its `eta1_used` and `pushbacks` are zero and its `k_after_*` are `None`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: u64,
    pub x: Vec<f64>,
    pub k_norm: f64,
    pub sigma_min: f64,
    pub sigma_second: f64,
    pub sigma_max: f64,
    pub predicate: PredicateState,
    pub eta1_used: f64,
    pub pushbacks: u64,
    pub k_after_forward: Option<f64>,
    pub k_after_pushback: Option<f64>,
    pub backoffs: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathStats {
    /// Push-back steps that increased `‖K‖` while inside the basin.
    pub monotonicity_violations: u64,
    pub backoffs: u64,
    pub clamps: u64,
    pub orientation_degeneracies: u64,
    /// Worst-case trials attempted (1 for a single solve).
    pub trials: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub point: Vector,
    pub kind: Termination,
    pub residual: f64,
    pub iterations: u64,
    pub value_queries: u64,
    pub jac_queries: u64,
    pub trace: Vec<TraceRecord>,
    pub stats: PathStats,
}

impl SolveResult {
    /// Result fields without the trace.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "point": self.point.to_f64_vec(),
            "kind": self.kind,
            "residual": self.residual,
            "iterations": self.iterations,
            "value_queries": self.value_queries,
            "jac_queries": self.jac_queries,
            "stats": self.stats,
        })
    }
}

/// Trace as CSV: `iter, x_0..x_{n−1}, k_norm, sigma_min, sigma_second,
/// predicate, eta1_used, pushbacks`.
pub fn trace_csv(trace: &[TraceRecord]) -> String {
    use std::fmt::Write;
    let n = trace.first().map_or(0, |r| r.x.len());
    let mut out = String::from("iter");
    for i in 0..n {
        write!(out, ",x_{i}").unwrap();
    }
    out.push_str(",k_norm,sigma_min,sigma_second,predicate,eta1_used,pushbacks\n");
    for r in trace {
        write!(out, "{}", r.iter).unwrap();
        for v in &r.x {
            write!(out, ",{v}").unwrap();
        }
        writeln!(
            out,
            ",{},{},{},{},{},{}",
            r.k_norm, r.sigma_min, r.sigma_second, r.predicate, r.eta1_used, r.pushbacks
        )
        .unwrap();
    }
    out
}

fn clamp_to_sphere(y: &mut Vector) -> bool {
    let ny = y.norm();
    if ny > 1.0 {
        *y = y.scaled(1.0 / ny);
        true
    } else {
        false
    }
}

/// Tracks the path from `x0` with initial orientation `v0` until the
/// predicate leaves Run or the budget runs out.
pub fn follow_path<F: VectorField<f64> + ?Sized>(
    f: &F,
    params: &SolverParams,
    x0: &Vector,
    v0: &Vector,
) -> Result<SolveResult> {
    params.validate()?;
    let n = f.dim();
    if x0.len() != n || v0.len() != n {
        return Err(invalid("starting point or direction has the wrong length"));
    }
    if x0.norm() > 1.0 + DOMAIN_SLACK {
        return Err(Error::Domain { norm: x0.norm() });
    }
    if (v0.norm() - 1.0).abs() > 1e-9 {
        return Err(invalid("initial direction must be a unit vector"));
    }
    let adaptive = params.mode == Mode::Adaptive;
    if !adaptive && params.pushback_count > THEORETICAL_PUSHBACK_LIMIT {
        return Err(Error::Numerical(format!(
            "theoretical push-back count {} exceeds the runnable limit {}",
            params.pushback_count, THEORETICAL_PUSHBACK_LIMIT
        )));
    }
    let start = f.queries();
    let (eps, xi) = (params.eps, params.xi);

    let mut x = x0.clone();
    let mut fx = f.eval(&x)?;
    let mut jf = f.jacobian(&x)?;
    let mut v = v0.clone();
    let mut trace: Vec<TraceRecord> = Vec::new();
    let mut window: VecDeque<(f64, f64)> = VecDeque::with_capacity(WINDOW);
    let mut best = (f64::INFINITY, x.clone());
    let mut stats = PathStats { trials: 1, ..Default::default() };
    let mut degenerate_run = 0u32;

    let finish = |point: Vector,
                  kind: Termination,
                  residual: f64,
                  trace: Vec<TraceRecord>,
                  stats: PathStats|
     -> SolveResult {
        let used = f.queries() - start;
        SolveResult {
            point,
            kind,
            residual,
            iterations: trace.len() as u64 - 1,
            value_queries: used.value,
            jac_queries: used.jac,
            trace,
            stats,
        }
    };

    for iter in 0u64.. {
        let k_norm = k_from(&x, &fx).norm();
        let jk = jk_from(&x, &fx, &jf);
        let (tangent, diag) = orient_kernel(&jk, &v, k_norm)?;
        let state = predicate_from(&x, &fx, eps, xi)?;
        let res = residual_from(&x, &fx);
        if res < best.0 {
            best = (res, x.clone());
        }
        let mut rec = TraceRecord {
            iter,
            x: x.to_f64_vec(),
            k_norm,
            sigma_min: diag.sigma_min,
            sigma_second: diag.sigma_second,
            sigma_max: diag.sigma_max,
            predicate: state,
            eta1_used: 0.0,
            pushbacks: 0,
            k_after_forward: None,
            k_after_pushback: None,
            backoffs: 0,
        };
        match state {
            PredicateState::Stop => {
                trace.push(rec);
                return Ok(finish(x, Termination::Stop, res, trace, stats));
            }
            PredicateState::Project => {
                trace.push(rec);
                let xp = x.normalized().expect("Project needs |x| near 1");
                let r = vi_residual(f, &xp)?;
                return Ok(finish(xp, Termination::Project, r, trace, stats));
            }
            PredicateState::Run => {}
        }
        if stats.clamps >= MAX_CLAMPS {
            return Err(Error::PathDegenerate {
                iterations: iter,
                reason: format!("still Run after {} clamps to the sphere", stats.clamps),
            });
        }
        if iter >= params.max_iterations {
            trace.push(rec);
            let (r, p) = best;
            return Ok(finish(p, Termination::BudgetExhausted, r, trace, stats));
        }

        if diag.orientation_degenerate {
            degenerate_run += 1;
            stats.orientation_degeneracies += 1;
            if degenerate_run >= MAX_DEGENERATE_RUN {
                return Err(Error::PathDegenerate {
                    iterations: iter,
                    reason: format!("tangent orientation ambiguous {degenerate_run} times in a row"),
                });
            }
        } else {
            degenerate_run = 0;
        }

        // Step sizes for this iteration.
        let (mut eta1, mut eta2, cap, theta_hat) = if adaptive {
            if window.len() == WINDOW {
                window.pop_front();
            }
            window.push_back((diag.sigma_second, diag.sigma_max));
            let min_second = window.iter().map(|w| w.0).fold(f64::INFINITY, f64::min);
            let max_op = window.iter().map(|w| w.1).fold(0.0, f64::max);
            let theta_hat = (0.5 * min_second).max(THETA_FLOOR);
            let s = adaptive_steps(theta_hat, max_op.max(THETA_FLOOR), params.l_j);
            (s.eta1, s.eta2, s.pushback_count, theta_hat)
        } else {
            (params.eta1, params.eta2, params.pushback_count, params.theta)
        };
        let basin = theta_hat * theta_hat / (4.0 * params.l_j);
        if adaptive && diag.orientation_degenerate {
            eta1 = (eta1 * 0.5).max(ETA1_MIN);
            rec.backoffs += 1;
            stats.backoffs += 1;
        }

        // Forward step, halving eta1 while it overshoots.
        let xf_sign = x.dot(&fx);
        let (mut y, mut fy, k_forward) = loop {
            let mut y = x.clone();
            y.axpy(eta1, &tangent);
            let at_floor = !adaptive || eta1 <= ETA1_MIN;
            if y.norm() > 1.0 && !at_floor {
                eta1 = (eta1 * 0.5).max(ETA1_MIN);
                rec.backoffs += 1;
                stats.backoffs += 1;
                continue;
            }
            if clamp_to_sphere(&mut y) {
                stats.clamps += 1;
            }
            let fy = f.eval(&y)?;
            let ky = k_from(&y, &fy).norm();
            let blew_up = ky > (10.0 * k_norm).max(basin);
            let flipped = xf_sign > 0.0 && y.dot(&fy) < 0.0 && fy.norm() > eps / 2.0;
            if !at_floor && (blew_up || flipped) {
                eta1 = (eta1 * 0.5).max(ETA1_MIN);
                rec.backoffs += 1;
                stats.backoffs += 1;
                continue;
            }
            break (y, fy, ky);
        };
        let mut jy = f.jacobian(&y)?;

        // Push-back along -∇‖K‖².
        let tol = if adaptive { (1e-3 * theta_hat * eta1).max(1e-14) } else { -1.0 };
        if adaptive {
            let local = operator_norm(&jk_from(&y, &fy, &jy))?;
            if local > 0.0 {
                eta2 = eta2.min(1.0 / (4.0 * local * local));
            }
        }
        let in_basin = k_forward <= basin;
        let mut k_cur = k_forward;
        let mut steps = 0u64;
        while steps < cap && k_cur > tol {
            let g = grad_k_sq_from(&y, &fy, &jy);
            let mut y_new = y.clone();
            y_new.axpy(-eta2, &g);
            if clamp_to_sphere(&mut y_new) {
                stats.clamps += 1;
            }
            fy = f.eval(&y_new)?;
            jy = f.jacobian(&y_new)?;
            let k_new = k_from(&y_new, &fy).norm();
            if in_basin && k_new > k_cur + MONOTONE_SLACK {
                stats.monotonicity_violations += 1;
            }
            k_cur = k_new;
            y = y_new;
            steps += 1;
        }

        rec.eta1_used = eta1;
        rec.pushbacks = steps;
        rec.k_after_forward = Some(k_forward);
        rec.k_after_pushback = Some(k_cur);
        trace.push(rec);
        x = y;
        fx = fy;
        jf = jy;
        v = tangent;
    }
    unreachable!("the iteration loop only exits by returning")
}

/// Knobs shared by the entry points.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Overrides the mode's iteration budget.
    pub max_iterations: Option<u64>,
}

fn origin_result(f0_norm: f64, n: usize) -> SolveResult {
    SolveResult {
        point: Vector::zeros(n),
        kind: Termination::Stop,
        residual: f0_norm,
        iterations: 0,
        value_queries: 0,
        jac_queries: 0,
        // J_K(0) = 0 exactly, so no Jacobian query is needed for this row.
        trace: vec![TraceRecord {
            iter: 0,
            x: vec![0.0; n],
            k_norm: 0.0,
            sigma_min: 0.0,
            sigma_second: 0.0,
            sigma_max: 0.0,
            predicate: PredicateState::Stop,
            eta1_used: 0.0,
            pushbacks: 0,
            k_after_forward: None,
            k_after_pushback: None,
            backoffs: 0,
        }],
        stats: PathStats { trials: 1, ..Default::default() },
    }
}

/// Solves `F̃ = f0 + A x + b` to accuracy `eps`, with `A`, `b` drawn from
/// `seed` at scale `sigma`. The residual is measured on `F̃`.
pub fn solve_smoothed(
    f0: FieldHandle<f64>,
    sigma: f64,
    p: f64,
    eps: f64,
    seed: u64,
    mode: Mode,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    check_p(p)?;
    check_eps(eps)?;
    let field = perturb(f0.clone(), sigma, seed)?;
    let start = field.queries();
    let n = field.dim();
    let f_origin = field.eval(&Vector::zeros(n))?.norm();
    if f_origin <= eps {
        let mut r = origin_result(f_origin, n);
        r.value_queries = 1;
        return Ok(r);
    }
    let base_bounds = f0.bounds();
    let sampled = DerivedBounds::new(&base_bounds, field.a_norm(), field.b_norm(), sigma, p, n)?;
    let params = derive_params(&base_bounds, &sampled, sigma, p, eps, mode, opts.max_iterations)?;
    let x0 = initialize(&field, params.l1_eff, params.eps_init)?;
    let v0 = x0.normalized().expect("initialization lands on a sphere of radius r > 0");
    let mut result = follow_path(&field, &params, &x0, &v0)?;
    let used = field.queries() - start;
    result.value_queries = used.value;
    result.jac_queries = used.jac;
    Ok(result)
}

/// Number of independent trials for failure probability `p`.
pub fn worst_case_trials(p: f64) -> Result<u32> {
    check_p(p)?;
    Ok(((1.0 / p).log2().ceil() as u32).max(1))
}

/// Perturbation scale used by each worst-case trial.
pub fn worst_case_sigma(eps: f64) -> f64 {
    eps / 8.0
}

/// Repeated smoothed solves of a perturbed `f`, each to `eps/2`, accepting
/// the first output whose residual on the unperturbed `f` is at most `eps`.
pub fn solve_worst_case(
    f: FieldHandle<f64>,
    eps: f64,
    p: f64,
    seed: u64,
    opts: &SolveOptions,
) -> Result<SolveResult> {
    check_eps(eps)?;
    let trials = worst_case_trials(p)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut total_value = 0u64;
    let mut total_jac = 0u64;
    let mut best: Option<SolveResult> = None;
    for t in 0..trials {
        let trial_seed = rng.next_u64();
        let attempt = solve_smoothed(
            f.clone(),
            worst_case_sigma(eps),
            0.5,
            eps / 2.0,
            trial_seed,
            Mode::Adaptive,
            opts,
        );
        let mut r = match attempt {
            Ok(r) => r,
            Err(Error::PathDegenerate { .. }) => continue,
            Err(e) => return Err(e),
        };
        let before = f.queries();
        r.residual = vi_residual(f.as_ref(), &r.point)?;
        let check = f.queries() - before;
        total_value += r.value_queries + check.value;
        total_jac += r.jac_queries + check.jac;
        r.stats.trials = t + 1;
        let ok = r.kind != Termination::BudgetExhausted && r.residual <= eps;
        if ok {
            r.value_queries = total_value;
            r.jac_queries = total_jac;
            return Ok(r);
        }
        if best.as_ref().map_or(true, |b| r.residual < b.residual) {
            best = Some(r);
        }
    }
    let mut r = best.ok_or_else(|| Error::PathDegenerate {
        iterations: 0,
        reason: format!("all {trials} trials degenerated"),
    })?;
    r.kind = Termination::BudgetExhausted;
    r.value_queries = total_value;
    r.jac_queries = total_jac;
    r.stats.trials = trials;
    Ok(r)
}
