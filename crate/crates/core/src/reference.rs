//! The reference function `K(x) = (xᵀx I − x xᵀ) F(x)`, its derivatives, the
//! VI residual and the three-way stopping predicate.
//!
//! Each field-consuming function has a pure `*_from` twin taking already
//! evaluated `F(x)` and `J_F(x)`, so the solver can reuse one value query and
//! one Jacobian query per point.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fields::VectorField;
use crate::numerics::{smallest_singular_pair, Matrix, Scalar, Vector};

/// Below this `|⟨v_prev, v_min⟩|` the tangent orientation is ambiguous.
pub const ORIENTATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredicateState {
    Run,
    Stop,
    Project,
}

impl fmt::Display for PredicateState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PredicateState::Run => "Run",
            PredicateState::Stop => "Stop",
            PredicateState::Project => "Project",
        })
    }
}

/// What the solver observes at a path point.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPointDiagnostics<T: Scalar> {
    pub k_norm: T,
    pub sigma_min: T,
    pub sigma_second: T,
    pub sigma_max: T,
    /// Unit near-kernel direction of `J_K`, oriented along the previous one.
    pub tangent: Vector<T>,
    /// `|⟨v_prev, v_min⟩|` fell below [`ORIENTATION_TOL`].
    pub orientation_degenerate: bool,
    /// The two smallest singular values are numerically tied.
    pub gap_degenerate: bool,
}

/// `(xᵀx) F − x (xᵀF)`.
pub fn k_from<T: Scalar>(x: &Vector<T>, fx: &Vector<T>) -> Vector<T> {
    let mut k = fx.scaled(x.norm_sq());
    k.axpy(-x.dot(fx), x);
    k
}

/// `(xᵀx I − x xᵀ) J_F − (xᵀF I + x Fᵀ − 2 F xᵀ)`.
pub fn jk_from<T: Scalar>(x: &Vector<T>, fx: &Vector<T>, jf: &Matrix<T>) -> Matrix<T> {
    let n = x.len();
    let xx = x.norm_sq();
    let xf = x.dot(fx);
    let xt_jf = jf.tr_mul_vec(x);
    let two = T::lit(2.0);
    Matrix::from_fn(n, |i, j| {
        let proj = xx * jf[(i, j)] - x[i] * xt_jf[j];
        let diag = if i == j { xf } else { T::zero() };
        proj - (diag + x[i] * fx[j] - two * fx[i] * x[j])
    })
}

/// `2 J_Kᵀ K`.
pub fn grad_k_sq_from<T: Scalar>(x: &Vector<T>, fx: &Vector<T>, jf: &Matrix<T>) -> Vector<T> {
    let k = k_from(x, fx);
    jk_from(x, fx, jf).tr_mul_vec(&k).scaled(T::lit(2.0))
}

/// `max(0, ‖F‖ − ⟨F, x⟩)`.
pub fn residual_from<T: Scalar>(x: &Vector<T>, fx: &Vector<T>) -> T {
    (fx.norm() - fx.dot(x)).max(T::zero())
}

fn check_predicate_params(eps: f64, xi: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    if !(xi > 0.0 && xi < 0.5) {
        return Err(invalid(format!("xi must lie in (0, 1/2), got {xi}")));
    }
    Ok(())
}

/// Stop iff `‖F‖ ≤ ε/2`; otherwise Project iff the residual is at most `ε/2`,
/// `‖x‖ ≥ 1 − 2ξ` and `⟨x, F⟩ ≥ 0`; otherwise Run.
pub fn predicate_from<T: Scalar>(
    x: &Vector<T>,
    fx: &Vector<T>,
    eps: f64,
    xi: f64,
) -> Result<PredicateState> {
    check_predicate_params(eps, xi)?;
    let half = T::lit(eps / 2.0);
    if fx.norm() <= half {
        return Ok(PredicateState::Stop);
    }
    if residual_from(x, fx) <= half
        && x.norm() >= T::lit(1.0 - 2.0 * xi)
        && x.dot(fx) >= T::zero()
    {
        return Ok(PredicateState::Project);
    }
    Ok(PredicateState::Run)
}

/// Picks the near-kernel direction of `jk` and orients it along `v_prev`.
pub fn orient_kernel<T: Scalar>(
    jk: &Matrix<T>,
    v_prev: &Vector<T>,
    k_norm: T,
) -> Result<(Vector<T>, PathPointDiagnostics<T>)> {
    if v_prev.len() != jk.dim() {
        return Err(invalid("previous direction has the wrong length"));
    }
    let vn = v_prev.norm().to_f64_lossy();
    if (vn - 1.0).abs() > 1e-6 {
        return Err(invalid(format!("previous direction must be a unit vector, norm is {vn}")));
    }
    let triple = smallest_singular_pair(jk)?;
    let align = triple.v_min.dot(v_prev);
    let tangent = if align < T::zero() { -&triple.v_min } else { triple.v_min };
    let diag = PathPointDiagnostics {
        k_norm,
        sigma_min: triple.sigma_min,
        sigma_second: triple.sigma_second,
        sigma_max: triple.sigma_max,
        tangent: tangent.clone(),
        orientation_degenerate: align.abs().to_f64_lossy() < ORIENTATION_TOL,
        gap_degenerate: triple.degenerate,
    };
    Ok((tangent, diag))
}

/// `K(x)`; one value query.
pub fn eval_k<T: Scalar, F: VectorField<T> + ?Sized>(f: &F, x: &Vector<T>) -> Result<Vector<T>> {
    let fx = f.eval(x)?;
    Ok(k_from(x, &fx))
}

/// `J_K(x)`; one value query and one Jacobian query.
pub fn eval_jk<T: Scalar, F: VectorField<T> + ?Sized>(f: &F, x: &Vector<T>) -> Result<Matrix<T>> {
    let fx = f.eval(x)?;
    let jf = f.jacobian(x)?;
    Ok(jk_from(x, &fx, &jf))
}

/// `∇‖K‖²(x) = 2 J_K(x)ᵀ K(x)`.
pub fn grad_k_sq<T: Scalar, F: VectorField<T> + ?Sized>(f: &F, x: &Vector<T>) -> Result<Vector<T>> {
    let fx = f.eval(x)?;
    let jf = f.jacobian(x)?;
    Ok(grad_k_sq_from(x, &fx, &jf))
}

/// `sup_{‖y‖≤1} ⟨F(x), y − x⟩`, in closed form.
pub fn vi_residual<T: Scalar, F: VectorField<T> + ?Sized>(f: &F, x: &Vector<T>) -> Result<T> {
    let fx = f.eval(x)?;
    Ok(residual_from(x, &fx))
}

/// Unit direction minimizing `‖J_K(x) w‖` with `⟨v_prev, w⟩ ≥ 0`, plus the
/// diagnostics at `x`.
pub fn tangent_direction<T: Scalar, F: VectorField<T> + ?Sized>(
    f: &F,
    x: &Vector<T>,
    v_prev: &Vector<T>,
) -> Result<(Vector<T>, PathPointDiagnostics<T>)> {
    let fx = f.eval(x)?;
    let jf = f.jacobian(x)?;
    let jk = jk_from(x, &fx, &jf);
    orient_kernel(&jk, v_prev, k_from(x, &fx).norm())
}

pub fn predicate<T: Scalar, F: VectorField<T> + ?Sized>(
    f: &F,
    x: &Vector<T>,
    eps: f64,
    xi: f64,
) -> Result<PredicateState> {
    check_predicate_params(eps, xi)?;
    let fx = f.eval(x)?;
    predicate_from(x, &fx, eps, xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &[f64]) -> Vector<f64> {
        Vector::from_f64_slice(s)
    }

    #[test]
    fn k_examples() {
        assert_eq!(k_from(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])), v(&[0.0, 1.0]));
        assert_eq!(k_from(&v(&[1.0, 1.0]), &v(&[1.0, 0.0])), v(&[1.0, -1.0]));
        assert_eq!(k_from(&v(&[0.3, 0.4]), &v(&[0.6, 0.8])), v(&[0.0, 0.0]));
    }

    #[test]
    fn jk_on_path_example() {
        let m = Matrix::from_f64_rows(&[vec![2.0, 0.0], vec![0.0, 3.0]]).unwrap();
        let x = v(&[1.0, 0.0]);
        let jk = jk_from(&x, &m.mul_vec(&x), &m);
        assert_eq!(jk.to_f64_rows(), vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn orientation_follows_previous() {
        let jk = Matrix::from_f64_rows(&[vec![0.0, 0.0], vec![0.0, 5.0]]).unwrap();
        let (t, d) = orient_kernel(&jk, &v(&[1.0, 0.0]), 0.0).unwrap();
        assert_eq!(t, v(&[1.0, 0.0]));
        assert!(!d.orientation_degenerate);
        let (t, _) = orient_kernel(&jk, &v(&[-1.0, 0.0]), 0.0).unwrap();
        assert_eq!(t, v(&[-1.0, 0.0]));
        let (_, d) = orient_kernel(&jk, &v(&[0.0, 1.0]), 0.0).unwrap();
        assert!(d.orientation_degenerate);
    }

    #[test]
    fn predicate_parameter_checks() {
        let x = v(&[0.0, 0.0]);
        assert!(predicate_from(&x, &x, 0.0, 0.1).is_err());
        assert!(predicate_from(&x, &x, 0.1, 0.5).is_err());
        assert!(predicate_from(&x, &x, 0.1, 0.0).is_err());
        assert_eq!(predicate_from(&x, &x, 0.1, 0.1).unwrap(), PredicateState::Stop);
    }
}
