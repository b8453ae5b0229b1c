//! Vector fields on the unit ball with value and Jacobian access.
//!
//! A field is anything implementing [`VectorField`]. Evaluation through
//! [`VectorField::eval`] and [`VectorField::jacobian`] checks the domain and
//! bumps the field's own atomic query counters, so solver runs and lower-bound
//! experiments share one accounting mechanism.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{operator_norm, sample_gaussian_linear, Matrix, Scalar, Vector};

/// Slack allowed on `‖x‖ ≤ 1` before an evaluation is a domain error.
pub const DOMAIN_SLACK: f64 = 1e-9;

/// User-declared bounds: `‖F‖ ≤ L0`, `F` is `L1`-Lipschitz and `J_F` is
/// `L2`-Lipschitz on the ball. Never verified globally.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzBounds {
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
}

impl LipschitzBounds {
    pub fn new(l0: f64, l1: f64, l2: f64) -> Result<Self> {
        let b = Self { l0, l1, l2 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("L0", self.l0), ("L1", self.l1), ("L2", self.l2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Monotone counters of value and Jacobian queries.
#[derive(Debug, Default)]
pub struct QueryCounters {
    value: AtomicU64,
    jac: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCount {
    pub value: u64,
    pub jac: u64,
}

impl std::ops::Sub for QueryCount {
    type Output = QueryCount;
    fn sub(self, rhs: Self) -> Self {
        QueryCount { value: self.value - rhs.value, jac: self.jac - rhs.jac }
    }
}

impl QueryCounters {
    pub fn snapshot(&self) -> QueryCount {
        QueryCount { value: self.value.load(Ordering::SeqCst), jac: self.jac.load(Ordering::SeqCst) }
    }

    fn bump_value(&self) {
        self.value.fetch_add(1, Ordering::SeqCst);
    }

    fn bump_jac(&self) {
        self.jac.fetch_add(1, Ordering::SeqCst);
    }
}

/// Central-difference step used by fields without an analytic Jacobian.
fn fd_base_step<T: Scalar>() -> T {
    if T::epsilon() < T::lit(1e-12) {
        T::lit(1e-6)
    } else {
        T::epsilon().cbrt()
    }
}

/// Central-difference Jacobian with step `h = 1e-6·(1+‖x‖)` (a coarser base
/// step in single precision).
pub fn central_difference_jacobian<T: Scalar>(
    f: impl Fn(&Vector<T>) -> Vector<T>,
    x: &Vector<T>,
) -> Matrix<T> {
    let n = x.len();
    let h = fd_base_step::<T>() * (T::one() + x.norm());
    let two_h = h + h;
    let mut jac = Matrix::zeros(n);
    let mut xp = x.clone();
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + h;
        let fp = f(&xp);
        xp[j] = orig - h;
        let fm = f(&xp);
        xp[j] = orig;
        for i in 0..n {
            jac[(i, j)] = (fp[i] - fm[i]) / two_h;
        }
    }
    jac
}

/// An evaluable map from the unit ball to `ℝⁿ`.
pub trait VectorField<T: Scalar>: Send + Sync {
    fn dim(&self) -> usize;

    fn bounds(&self) -> LipschitzBounds;

    fn counters(&self) -> &QueryCounters;

    /// Short human-readable description used in reports.
    fn describe(&self) -> String;

    /// Value without domain check or counting.
    fn value_raw(&self, x: &Vector<T>) -> Vector<T>;

    /// Jacobian without domain check or counting. Defaults to central
    /// differences of [`VectorField::value_raw`].
    fn jacobian_raw(&self, x: &Vector<T>) -> Matrix<T> {
        central_difference_jacobian(|y| self.value_raw(y), x)
    }

    /// Whether [`VectorField::jacobian_raw`] is exact rather than a
    /// finite-difference estimate.
    fn analytic_jacobian(&self) -> bool {
        true
    }

    /// `F(x)`; counts one value query.
    fn eval(&self, x: &Vector<T>) -> Result<Vector<T>> {
        check_domain(self.dim(), x)?;
        self.counters().bump_value();
        Ok(self.value_raw(x))
    }

    /// `J_F(x)`; counts one Jacobian query.
    fn jacobian(&self, x: &Vector<T>) -> Result<Matrix<T>> {
        check_domain(self.dim(), x)?;
        self.counters().bump_jac();
        Ok(self.jacobian_raw(x))
    }

    fn queries(&self) -> QueryCount {
        self.counters().snapshot()
    }
}

impl<T: Scalar> std::fmt::Debug for dyn VectorField<T> + '_ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "VectorField({}, dim {})", self.describe(), self.dim())
    }
}

pub fn check_domain<T: Scalar>(dim: usize, x: &Vector<T>) -> Result<()> {
    if x.len() != dim {
        return Err(invalid(format!("point has length {}, field dimension is {dim}", x.len())));
    }
    if !x.is_finite() {
        return Err(invalid("point has non-finite coordinates"));
    }
    let norm = x.norm().to_f64_lossy();
    if norm > 1.0 + DOMAIN_SLACK {
        return Err(Error::Domain { norm });
    }
    Ok(())
}

/// Shared handle to a field.
pub type FieldHandle<T> = Arc<dyn VectorField<T>>;

/// `F(x) = M x + c`.
#[derive(Debug)]
pub struct AffineField<T: Scalar> {
    m: Matrix<T>,
    c: Vector<T>,
    bounds: LipschitzBounds,
    name: String,
    counters: QueryCounters,
}

impl<T: Scalar> AffineField<T> {
    pub fn new(m: Matrix<T>, c: Vector<T>) -> Result<Self> {
        if m.dim() != c.len() || c.is_empty() {
            return Err(invalid(format!(
                "matrix is {0}x{0} but offset has length {1}",
                m.dim(),
                c.len()
            )));
        }
        if !m.is_finite() || !c.is_finite() {
            return Err(invalid("affine field has non-finite coefficients"));
        }
        let op = operator_norm(&m)?.to_f64_lossy();
        let bounds = LipschitzBounds { l0: op + c.norm().to_f64_lossy(), l1: op, l2: 0.0 };
        Ok(Self { m, c, bounds, name: "affine".into(), counters: QueryCounters::default() })
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_bounds(mut self, bounds: LipschitzBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.m
    }

    pub fn offset(&self) -> &Vector<T> {
        &self.c
    }
}

impl<T: Scalar> VectorField<T> for AffineField<T> {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn bounds(&self) -> LipschitzBounds {
        self.bounds
    }
    fn counters(&self) -> &QueryCounters {
        &self.counters
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
    fn value_raw(&self, x: &Vector<T>) -> Vector<T> {
        let mut y = self.m.mul_vec(x);
        y += &self.c;
        y
    }
    fn jacobian_raw(&self, _x: &Vector<T>) -> Matrix<T> {
        self.m.clone()
    }
}

/// One monomial `coef · Π x_j^pow[j]` contributing to output `out`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub out: usize,
    pub coef: f64,
    pub pow: Vec<u32>,
}

/// Polynomial field given as a list of monomials, with an analytic Jacobian.
#[derive(Debug)]
pub struct PolynomialField<T: Scalar> {
    dim: usize,
    terms: Vec<(usize, T, Vec<u32>)>,
    bounds: LipschitzBounds,
    name: String,
    counters: QueryCounters,
}

fn powu<T: Scalar>(x: T, p: u32) -> T {
    let mut acc = T::one();
    for _ in 0..p {
        acc = acc * x;
    }
    acc
}

impl<T: Scalar> PolynomialField<T> {
    /// Bounds are derived from the coefficients: on the ball every monomial is
    /// at most 1 in absolute value, which gives `L0`; the Frobenius norm of
    /// the termwise derivative bounds gives `L1` and `L2`.
    pub fn new(dim: usize, terms: &[Term]) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("polynomial dimension must be at least 1"));
        }
        for (i, t) in terms.iter().enumerate() {
            if t.out >= dim {
                return Err(invalid(format!("term {i}: output {} out of range", t.out)));
            }
            if t.pow.len() != dim {
                return Err(invalid(format!(
                    "term {i}: exponent list has length {}, expected {dim}",
                    t.pow.len()
                )));
            }
            if !t.coef.is_finite() {
                return Err(invalid(format!("term {i}: non-finite coefficient")));
            }
        }
        let mut value_sum = vec![0.0; dim];
        let mut d1 = vec![vec![0.0; dim]; dim];
        let mut d2 = vec![vec![vec![0.0; dim]; dim]; dim];
        for t in terms {
            let a = t.coef.abs();
            value_sum[t.out] += a;
            for j in 0..dim {
                let pj = t.pow[j] as f64;
                d1[t.out][j] += a * pj;
                for l in 0..dim {
                    let pl = t.pow[l] as f64 - if l == j { 1.0 } else { 0.0 };
                    d2[t.out][j][l] += a * pj * pl.max(0.0);
                }
            }
        }
        let l0 = value_sum.iter().map(|v| v * v).sum::<f64>().sqrt();
        let l1 = d1.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        let l2 = d2
            .iter()
            .flatten()
            .map(|row| row.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        Ok(Self {
            dim,
            terms: terms.iter().map(|t| (t.out, T::lit(t.coef), t.pow.clone())).collect(),
            bounds: LipschitzBounds { l0, l1, l2 },
            name: "polynomial".into(),
            counters: QueryCounters::default(),
        })
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_bounds(mut self, bounds: LipschitzBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn terms(&self) -> Vec<Term> {
        self.terms
            .iter()
            .map(|(out, c, pow)| Term { out: *out, coef: c.to_f64_lossy(), pow: pow.clone() })
            .collect()
    }
}

impl<T: Scalar> VectorField<T> for PolynomialField<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn bounds(&self) -> LipschitzBounds {
        self.bounds
    }
    fn counters(&self) -> &QueryCounters {
        &self.counters
    }
    fn describe(&self) -> String {
        self.name.clone()
    }
    fn value_raw(&self, x: &Vector<T>) -> Vector<T> {
        let mut y = Vector::zeros(self.dim);
        for (out, c, pow) in &self.terms {
            let mut m = *c;
            for (j, &p) in pow.iter().enumerate() {
                m = m * powu(x[j], p);
            }
            y[*out] = y[*out] + m;
        }
        y
    }
    fn jacobian_raw(&self, x: &Vector<T>) -> Matrix<T> {
        let n = self.dim;
        let mut jac = Matrix::zeros(n);
        for (out, c, pow) in &self.terms {
            for j in 0..n {
                if pow[j] == 0 {
                    continue;
                }
                let mut d = *c * T::lit(pow[j] as f64);
                for (l, &p) in pow.iter().enumerate() {
                    let e = if l == j { p - 1 } else { p };
                    d = d * powu(x[l], e);
                }
                jac[(*out, j)] = jac[(*out, j)] + d;
            }
        }
        jac
    }
}

/// `F_i(x) = sin(2 x_{i+1}) − x_i/2 + 1/10` (indices mod n). Its Jacobian is
/// deliberately left to central differences.
#[derive(Debug, Default)]
pub struct SineSwirl {
    dim: usize,
    counters: QueryCounters,
}

impl SineSwirl {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        Ok(Self { dim, counters: QueryCounters::default() })
    }
}

impl<T: Scalar> VectorField<T> for SineSwirl {
    fn dim(&self) -> usize {
        self.dim
    }
    fn bounds(&self) -> LipschitzBounds {
        LipschitzBounds { l0: 1.6 * (self.dim as f64).sqrt(), l1: 2.5, l2: 4.0 }
    }
    fn counters(&self) -> &QueryCounters {
        &self.counters
    }
    fn describe(&self) -> String {
        "sine-swirl".into()
    }
    fn value_raw(&self, x: &Vector<T>) -> Vector<T> {
        let n = self.dim;
        Vector::from_vec(
            (0..n)
                .map(|i| {
                    (T::lit(2.0) * x[(i + 1) % n]).sin() - T::lit(0.5) * x[i] + T::lit(0.1)
                })
                .collect(),
        )
    }
    fn analytic_jacobian(&self) -> bool {
        false
    }
}

/// `F̃(x) = F(x) + A x + b` with `A`, `b` drawn once at construction.
pub struct PerturbedField<T: Scalar> {
    base: FieldHandle<T>,
    a: Matrix<T>,
    b: Vector<T>,
    sigma: f64,
    seed: u64,
    l_a: f64,
    l_b: f64,
    counters: QueryCounters,
}

impl<T: Scalar> PerturbedField<T> {
    pub fn base(&self) -> &FieldHandle<T> {
        &self.base
    }
    pub fn a(&self) -> &Matrix<T> {
        &self.a
    }
    pub fn b(&self) -> &Vector<T> {
        &self.b
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }
    /// `‖A‖_op` of the drawn matrix.
    pub fn a_norm(&self) -> f64 {
        self.l_a
    }
    /// `‖b‖` of the drawn offset.
    pub fn b_norm(&self) -> f64 {
        self.l_b
    }
}

impl<T: Scalar> VectorField<T> for PerturbedField<T> {
    fn dim(&self) -> usize {
        self.b.len()
    }
    fn bounds(&self) -> LipschitzBounds {
        let b = self.base.bounds();
        LipschitzBounds { l0: b.l0 + self.l_a + self.l_b, l1: b.l1 + self.l_a, l2: b.l2 }
    }
    fn counters(&self) -> &QueryCounters {
        &self.counters
    }
    fn describe(&self) -> String {
        format!("{} + Ax + b (sigma={}, seed={})", self.base.describe(), self.sigma, self.seed)
    }
    fn value_raw(&self, x: &Vector<T>) -> Vector<T> {
        let mut y = self.base.value_raw(x);
        y += &self.a.mul_vec(x);
        y += &self.b;
        y
    }
    fn jacobian_raw(&self, x: &Vector<T>) -> Matrix<T> {
        &self.base.jacobian_raw(x) + &self.a
    }
    fn analytic_jacobian(&self) -> bool {
        self.base.analytic_jacobian()
    }
}

/// Adds `A x + b` with entries i.i.d. `N(0, σ²/n)`, drawn from `seed`.
pub fn perturb<T: Scalar>(f: FieldHandle<T>, sigma: f64, seed: u64) -> Result<PerturbedField<T>> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be finite and non-negative, got {sigma}")));
    }
    let n = f.dim();
    let (a, b) = sample_gaussian_linear::<T>(n, sigma * sigma / n as f64, seed)?;
    let l_a = operator_norm(&a)?.to_f64_lossy();
    let l_b = b.norm().to_f64_lossy();
    Ok(PerturbedField { base: f, a, b, sigma, seed, l_a, l_b, counters: QueryCounters::default() })
}

/// The zero field in dimension `n`.
pub fn zero_field<T: Scalar>(n: usize) -> Result<AffineField<T>> {
    Ok(AffineField::new(Matrix::zeros(n), Vector::zeros(n))?.named("zero"))
}

/// `F ≡ c`.
pub fn constant_field<T: Scalar>(c: Vector<T>) -> Result<AffineField<T>> {
    let n = c.len();
    Ok(AffineField::new(Matrix::zeros(n), c)?.named("constant"))
}

/// The planar map `(3x+y−1, x−2y+1)`.
pub fn fig1_map<T: Scalar>() -> AffineField<T> {
    let m = Matrix::from_f64_rows(&[vec![3.0, 1.0], vec![1.0, -2.0]]).expect("square");
    AffineField::new(m, Vector::from_f64_slice(&[-1.0, 1.0])).expect("valid").named("fig1-map")
}

/// The displacement of [`fig1_map`], `(2x+y−1, x−3y+1)`, whose only zero is
/// `(2/7, 3/7)`.
pub fn fig1_displacement<T: Scalar>() -> AffineField<T> {
    let m = Matrix::from_f64_rows(&[vec![2.0, 1.0], vec![1.0, -3.0]]).expect("square");
    AffineField::new(m, Vector::from_f64_slice(&[-1.0, 1.0]))
        .expect("valid")
        .named("fig1-displacement")
}

/// Displacement `(c−1)x` of the radial contraction `x ↦ c x`.
pub fn radial_contraction<T: Scalar>(n: usize, factor: f64) -> Result<AffineField<T>> {
    if !(factor.abs() < 1.0) {
        return Err(invalid(format!("contraction factor must satisfy |c| < 1, got {factor}")));
    }
    let m = Matrix::identity(n).scaled(T::lit(factor - 1.0));
    Ok(AffineField::new(m, Vector::zeros(n))?.named("radial-contraction"))
}

fn monomials(n: usize, max_degree: u32) -> Vec<Vec<u32>> {
    fn rec(n: usize, left: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for p in 0..=left {
            prefix.push(p);
            rec(n, left - p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, max_degree, &mut Vec::new(), &mut out);
    out.sort_by_key(|p| (p.iter().sum::<u32>(), std::cmp::Reverse(p.clone())));
    out
}

/// Seeded random cubic: every output carries every monomial of degree ≤ 3,
/// with a standard normal coefficient scaled by `2^-degree`.
pub fn random_polynomial<T: Scalar>(n: usize, seed: u64) -> Result<PolynomialField<T>> {
    if n == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut terms = Vec::new();
    let monos = monomials(n, 3);
    for out in 0..n {
        for pow in &monos {
            let deg: u32 = pow.iter().sum();
            let z: f64 = StandardNormal.sample(&mut rng);
            terms.push(Term { out, coef: z * 0.5f64.powi(deg as i32), pow: pow.clone() });
        }
    }
    Ok(PolynomialField::new(n, &terms)?.named("random-poly"))
}

/// JSON field description. See the README for the schema.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(rename = "M", default, skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<Term>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<LipschitzBounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factor: Option<f64>,
}

fn perr(location: &str, message: impl Into<String>) -> Error {
    Error::Parse { location: location.to_string(), message: message.into() }
}

fn relocate(location: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => perr(location, m),
        other => other,
    }
}

/// Builtin names understood by [`parse_field_spec`] and [`field_from_arg`].
pub const BUILTIN_NAMES: &[&str] = &[
    "zero",
    "constant",
    "fig1-map",
    "fig1-displacement",
    "radial-contraction",
    "random-poly",
    "sine-swirl",
];

impl FieldSpec {
    pub fn builtin(name: &str) -> Self {
        Self { kind: "builtin".into(), name: Some(name.into()), ..Default::default() }
    }

    /// Materializes the described field.
    pub fn build<T: Scalar>(&self) -> Result<FieldHandle<T>> {
        if let Some(b) = &self.bounds {
            b.validate().map_err(|e| relocate("bounds", e))?;
        }
        let check_dim = |actual: usize| -> Result<()> {
            match self.dim {
                Some(d) if d != actual => {
                    Err(perr("dim", format!("declared {d}, but the data has dimension {actual}")))
                }
                _ => Ok(()),
            }
        };
        let field: FieldHandle<T> = match self.kind.as_str() {
            "affine" => {
                let m = self.m.as_ref().ok_or_else(|| perr("M", "affine field needs \"M\""))?;
                let c = self.c.as_ref().ok_or_else(|| perr("c", "affine field needs \"c\""))?;
                let mat = Matrix::<T>::from_f64_rows(m).map_err(|e| relocate("M", e))?;
                if c.len() != mat.dim() {
                    return Err(perr(
                        "c",
                        format!("length {} does not match M, which is {}x{}", c.len(), mat.dim(), mat.dim()),
                    ));
                }
                check_dim(c.len())?;
                let mut f = AffineField::new(mat, Vector::from_f64_slice(c))
                    .map_err(|e| relocate("M", e))?;
                if let Some(name) = &self.name {
                    f = f.named(name);
                }
                if let Some(b) = self.bounds {
                    f = f.with_bounds(b);
                }
                Arc::new(f)
            }
            "polynomial" => {
                let dim = self.dim.ok_or_else(|| perr("dim", "polynomial field needs \"dim\""))?;
                let coeffs =
                    self.coeffs.as_ref().ok_or_else(|| perr("coeffs", "polynomial field needs \"coeffs\""))?;
                let mut f = PolynomialField::new(dim, coeffs).map_err(|e| relocate("coeffs", e))?;
                if let Some(name) = &self.name {
                    f = f.named(name);
                }
                if let Some(b) = self.bounds {
                    f = f.with_bounds(b);
                }
                Arc::new(f)
            }
            "builtin" => {
                let name =
                    self.name.as_deref().ok_or_else(|| perr("name", "builtin field needs \"name\""))?;
                let dim = self.dim.unwrap_or(2);
                if dim == 0 {
                    return Err(perr("dim", "dimension must be at least 1"));
                }
                let mut built: FieldHandle<T> = match name {
                    "zero" => Arc::new(zero_field::<T>(dim)?),
                    "constant" => {
                        let c = self.c.as_ref().ok_or_else(|| perr("c", "constant field needs \"c\""))?;
                        check_dim(c.len())?;
                        Arc::new(constant_field(Vector::<T>::from_f64_slice(c)).map_err(|e| relocate("c", e))?)
                    }
                    "fig1-map" => {
                        check_dim(2)?;
                        Arc::new(fig1_map::<T>())
                    }
                    "fig1-displacement" => {
                        check_dim(2)?;
                        Arc::new(fig1_displacement::<T>())
                    }
                    "radial-contraction" => Arc::new(
                        radial_contraction::<T>(dim, self.factor.unwrap_or(0.5))
                            .map_err(|e| relocate("factor", e))?,
                    ),
                    "random-poly" => Arc::new(random_polynomial::<T>(dim, self.seed.unwrap_or(0))?),
                    "sine-swirl" => Arc::new(SineSwirl::new(dim)?),
                    other => {
                        return Err(perr(
                            "name",
                            format!("unknown builtin {other:?}; known: {}", BUILTIN_NAMES.join(", ")),
                        ))
                    }
                };
                if let Some(b) = self.bounds {
                    built = Arc::new(Rebounded { inner: built, bounds: b });
                }
                built
            }
            other => {
                return Err(perr(
                    "kind",
                    format!("unknown kind {other:?}; expected affine, builtin or polynomial"),
                ))
            }
        };
        Ok(field)
    }
}

/// A field whose declared bounds replace the inner field's.
struct Rebounded<T: Scalar> {
    inner: FieldHandle<T>,
    bounds: LipschitzBounds,
}

impl<T: Scalar> VectorField<T> for Rebounded<T> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn bounds(&self) -> LipschitzBounds {
        self.bounds
    }
    fn counters(&self) -> &QueryCounters {
        self.inner.counters()
    }
    fn describe(&self) -> String {
        self.inner.describe()
    }
    fn value_raw(&self, x: &Vector<T>) -> Vector<T> {
        self.inner.value_raw(x)
    }
    fn jacobian_raw(&self, x: &Vector<T>) -> Matrix<T> {
        self.inner.jacobian_raw(x)
    }
    fn analytic_jacobian(&self) -> bool {
        self.inner.analytic_jacobian()
    }
}

/// Parses a JSON field specification.
pub fn parse_field_spec<T: Scalar>(text: &str) -> Result<FieldHandle<T>> {
    let spec: FieldSpec = serde_json::from_str(text).map_err(|e| {
        perr(&format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    spec.build()
}

/// Resolves a command-line field argument: inline JSON when it starts with
/// `{`, otherwise a builtin name with default parameters.
pub fn field_from_arg<T: Scalar>(arg: &str) -> Result<FieldHandle<T>> {
    let trimmed = arg.trim();
    if trimmed.starts_with('{') {
        parse_field_spec(trimmed)
    } else {
        FieldSpec::builtin(trimmed).build()
    }
}
