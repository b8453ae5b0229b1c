//! Dense square linear algebra and seeded Gaussian sampling.
//!
//! Everything here is generic over [`Scalar`] (implemented for `f32` and
//! `f64`). Matrices are stored row-major and are always square, which is all
//! the solver ever needs: Jacobians of maps from the ball to itself.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Real scalar the numeric core is generic over.
pub trait Scalar:
    Float + FromPrimitive + NumCast + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold,
    /// which never happens for the finite constants used in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal fits the scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A dense real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector<T> {
    data: Vec<T>,
}

impl<T: Scalar> Vector<T> {
    pub fn from_vec(data: Vec<T>) -> Self {
        Self { data }
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: vec![T::zero(); n] }
    }

    /// The `i`-th standard basis vector of length `n`.
    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = Self::zeros(n);
        v.data[i] = T::one();
        v
    }

    pub fn from_f64_slice(values: &[f64]) -> Self {
        Self { data: values.iter().map(|&v| T::lit(v)).collect() }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> std::slice::Iter<'_, T> {
        self.data.iter()
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.data.iter().map(|v| v.to_f64_lossy()).collect()
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.len(), other.len());
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    /// Euclidean norm, computed with scaling so tiny and huge entries do not
    /// underflow or overflow.
    pub fn norm(&self) -> T {
        let scale = self.max_abs();
        if scale == T::zero() || !scale.is_finite() {
            return scale;
        }
        let s = self.data.iter().fold(T::zero(), |acc, &v| {
            let r = v / scale;
            acc + r * r
        });
        scale * s.sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { data: self.data.iter().map(|&v| v * s).collect() }
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: T, x: &Self) {
        debug_assert_eq!(self.len(), x.len());
        for (y, &xi) in self.data.iter_mut().zip(&x.data) {
            *y = *y + a * xi;
        }
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalized(&self) -> Option<Self> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(self.scaled(T::one() / n))
        } else {
            None
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn distance(&self, other: &Self) -> T {
        (self - other).norm()
    }
}

impl<T> Index<usize> for Vector<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.data[i]
    }
}

impl<T> IndexMut<usize> for Vector<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.data[i]
    }
}

impl<'a, T: Scalar> Add<&'a Vector<T>> for &'a Vector<T> {
    type Output = Vector<T>;
    fn add(self, rhs: &'a Vector<T>) -> Vector<T> {
        debug_assert_eq!(self.len(), rhs.len());
        Vector { data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl<'a, T: Scalar> Sub<&'a Vector<T>> for &'a Vector<T> {
    type Output = Vector<T>;
    fn sub(self, rhs: &'a Vector<T>) -> Vector<T> {
        debug_assert_eq!(self.len(), rhs.len());
        Vector { data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Scalar> AddAssign<&Vector<T>> for Vector<T> {
    fn add_assign(&mut self, rhs: &Vector<T>) {
        self.axpy(T::one(), rhs);
    }
}

impl<T: Scalar> SubAssign<&Vector<T>> for Vector<T> {
    fn sub_assign(&mut self, rhs: &Vector<T>) {
        self.axpy(-T::one(), rhs);
    }
}

impl<T: Scalar> Mul<T> for &Vector<T> {
    type Output = Vector<T>;
    fn mul(self, rhs: T) -> Vector<T> {
        self.scaled(rhs)
    }
}

impl<T: Scalar> Neg for &Vector<T> {
    type Output = Vector<T>;
    fn neg(self) -> Vector<T> {
        self.scaled(-T::one())
    }
}

/// A dense square matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// Builds a matrix from rows; fails unless the rows form a square array.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!(
                    "row {i} has {} entries, expected {n} for a square matrix",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self { n, data })
    }

    pub fn from_f64_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let converted: Vec<Vec<T>> =
            rows.iter().map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect();
        Self::from_rows(&converted)
    }

    /// `a bᵀ`.
    pub fn outer(a: &Vector<T>, b: &Vector<T>) -> Self {
        debug_assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |i, j| a[i] * b[j])
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).take(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn column(&self, j: usize) -> Vector<T> {
        Vector::from_vec((0..self.n).map(|i| self[(i, j)]).collect())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    /// `M x`.
    pub fn mul_vec(&self, x: &Vector<T>) -> Vector<T> {
        debug_assert_eq!(self.n, x.len());
        Vector::from_vec(
            (0..self.n)
                .map(|i| {
                    self.row(i)
                        .iter()
                        .zip(x.iter())
                        .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
                })
                .collect(),
        )
    }

    /// `Mᵀ x`.
    pub fn tr_mul_vec(&self, x: &Vector<T>) -> Vector<T> {
        debug_assert_eq!(self.n, x.len());
        let mut out = vec![T::zero(); self.n];
        for i in 0..self.n {
            let xi = x[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * xi;
            }
        }
        Vector::from_vec(out)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] = out.data[i * n + j] + a * other.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn scaled(&self, s: T) -> Self {
        Self { n: self.n, data: self.data.iter().map(|&v| v * s).collect() }
    }

    pub fn frobenius_norm(&self) -> T {
        Vector::from_vec(self.data.clone()).norm()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        self.rows()
            .into_iter()
            .map(|r| r.into_iter().map(|v| v.to_f64_lossy()).collect())
            .collect()
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

impl<'a, T: Scalar> Add<&'a Matrix<T>> for &'a Matrix<T> {
    type Output = Matrix<T>;
    fn add(self, rhs: &'a Matrix<T>) -> Matrix<T> {
        debug_assert_eq!(self.n, rhs.n);
        Matrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a + b).collect() }
    }
}

impl<'a, T: Scalar> Sub<&'a Matrix<T>> for &'a Matrix<T> {
    type Output = Matrix<T>;
    fn sub(self, rhs: &'a Matrix<T>) -> Matrix<T> {
        debug_assert_eq!(self.n, rhs.n);
        Matrix { n: self.n, data: self.data.iter().zip(&rhs.data).map(|(&a, &b)| a - b).collect() }
    }
}

impl<T: Scalar + Serialize> Serialize for Matrix<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.rows().serialize(s)
    }
}

impl<'de, T: Scalar + Deserialize<'de>> Deserialize<'de> for Matrix<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Singular values (descending) and right singular vectors of a square matrix.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub singular_values: Vec<T>,
    /// Column `j` is the right singular vector for `singular_values[j]`.
    pub v: Matrix<T>,
}

/// The two smallest singular values and the minimizing right singular vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SingularTriple<T> {
    pub sigma_min: T,
    pub sigma_second: T,
    pub sigma_max: T,
    pub v_min: Vector<T>,
    /// Set when `sigma_min` and `sigma_second` coincide to working precision,
    /// so `v_min` is one arbitrary member of a larger minimizing subspace.
    pub degenerate: bool,
}

fn check_finite<T: Scalar>(m: &Matrix<T>) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(invalid("matrix has non-finite entries"))
    }
}

fn sign<T: Scalar>(a: T, b: T) -> T {
    if b >= T::zero() {
        a.abs()
    } else {
        -a.abs()
    }
}

/// Full SVD of a square matrix by Householder bidiagonalization followed by
/// implicitly shifted QR on the bidiagonal (Golub–Reinsch). Only the right
/// singular vectors are accumulated.
pub fn svd<T: Scalar>(m: &Matrix<T>) -> Result<Svd<T>> {
    check_finite(m)?;
    let n = m.dim();
    if n == 0 {
        return Ok(Svd { singular_values: vec![], v: Matrix::zeros(0) });
    }
    let mut a = m.clone();
    let mut w = vec![T::zero(); n];
    let mut v = Matrix::<T>::zeros(n);
    let mut rv1 = vec![T::zero(); n];
    let two = T::lit(2.0);

    let mut g = T::zero();
    let mut scale = T::zero();
    let mut anorm = T::zero();
    let mut l = 0;
    for i in 0..n {
        l = i + 1;
        rv1[i] = scale * g;
        g = T::zero();
        scale = T::zero();
        let mut s = T::zero();
        for k in i..n {
            scale = scale + a[(k, i)].abs();
        }
        if scale != T::zero() {
            for k in i..n {
                a[(k, i)] = a[(k, i)] / scale;
                s = s + a[(k, i)] * a[(k, i)];
            }
            let f = a[(i, i)];
            g = -sign(s.sqrt(), f);
            let h = f * g - s;
            a[(i, i)] = f - g;
            for j in l..n {
                let mut s2 = T::zero();
                for k in i..n {
                    s2 = s2 + a[(k, i)] * a[(k, j)];
                }
                let f2 = s2 / h;
                for k in i..n {
                    a[(k, j)] = a[(k, j)] + f2 * a[(k, i)];
                }
            }
            for k in i..n {
                a[(k, i)] = a[(k, i)] * scale;
            }
        }
        w[i] = scale * g;
        g = T::zero();
        scale = T::zero();
        s = T::zero();
        if i + 1 != n {
            for k in l..n {
                scale = scale + a[(i, k)].abs();
            }
            if scale != T::zero() {
                for k in l..n {
                    a[(i, k)] = a[(i, k)] / scale;
                    s = s + a[(i, k)] * a[(i, k)];
                }
                let f = a[(i, l)];
                g = -sign(s.sqrt(), f);
                let h = f * g - s;
                a[(i, l)] = f - g;
                for k in l..n {
                    rv1[k] = a[(i, k)] / h;
                }
                for j in l..n {
                    let mut s2 = T::zero();
                    for k in l..n {
                        s2 = s2 + a[(j, k)] * a[(i, k)];
                    }
                    for k in l..n {
                        a[(j, k)] = a[(j, k)] + s2 * rv1[k];
                    }
                }
                for k in l..n {
                    a[(i, k)] = a[(i, k)] * scale;
                }
            }
        }
        anorm = anorm.max(w[i].abs() + rv1[i].abs());
    }

    // Accumulate the right-hand transformations.
    for i in (0..n).rev() {
        if i + 1 < n {
            if g != T::zero() {
                for j in l..n {
                    v[(j, i)] = (a[(i, j)] / a[(i, l)]) / g;
                }
                for j in l..n {
                    let mut s = T::zero();
                    for k in l..n {
                        s = s + a[(i, k)] * v[(k, j)];
                    }
                    for k in l..n {
                        v[(k, j)] = v[(k, j)] + s * v[(k, i)];
                    }
                }
            }
            for j in l..n {
                v[(i, j)] = T::zero();
                v[(j, i)] = T::zero();
            }
        }
        v[(i, i)] = T::one();
        g = rv1[i];
        l = i;
    }

    // Diagonalize the bidiagonal form.
    for k in (0..n).rev() {
        let mut its = 0;
        loop {
            its += 1;
            let mut flag = true;
            let mut l = k;
            let mut nm = 0;
            loop {
                // rv1[0] is always zero, so this terminates at l = 0 at the latest.
                if rv1[l].abs() + anorm == anorm {
                    flag = false;
                    break;
                }
                nm = l - 1;
                if w[nm].abs() + anorm == anorm {
                    break;
                }
                l -= 1;
            }
            if flag {
                // w[nm] is negligible: chase the superdiagonal entry out with
                // Givens rotations. Only U would change, and U is not kept.
                let _ = nm;
                let mut c = T::zero();
                let mut s = T::one();
                for i in l..=k {
                    let f = s * rv1[i];
                    rv1[i] = c * rv1[i];
                    if f.abs() + anorm == anorm {
                        break;
                    }
                    let gg = w[i];
                    let h = f.hypot(gg);
                    w[i] = h;
                    let hinv = T::one() / h;
                    c = gg * hinv;
                    s = -f * hinv;
                }
            }
            let z = w[k];
            if l == k {
                if z < T::zero() {
                    w[k] = -z;
                    for j in 0..n {
                        v[(j, k)] = -v[(j, k)];
                    }
                }
                break;
            }
            if its > 75 {
                return Err(Error::Numerical("SVD failed to converge in 75 sweeps".into()));
            }
            let mut x = w[l];
            let nm = k - 1;
            let mut y = w[nm];
            let mut g2 = rv1[nm];
            let mut h = rv1[k];
            let mut f = ((y - z) * (y + z) + (g2 - h) * (g2 + h)) / (two * h * y);
            g2 = f.hypot(T::one());
            f = ((x - z) * (x + z) + h * ((y / (f + sign(g2, f))) - h)) / x;
            let mut c = T::one();
            let mut s = T::one();
            for j in l..=nm {
                let i = j + 1;
                g2 = rv1[i];
                y = w[i];
                h = s * g2;
                g2 = c * g2;
                let mut z2 = f.hypot(h);
                rv1[j] = z2;
                c = f / z2;
                s = h / z2;
                f = x * c + g2 * s;
                g2 = g2 * c - x * s;
                h = y * s;
                y = y * c;
                for jj in 0..n {
                    let xv = v[(jj, j)];
                    let zv = v[(jj, i)];
                    v[(jj, j)] = xv * c + zv * s;
                    v[(jj, i)] = zv * c - xv * s;
                }
                z2 = f.hypot(h);
                w[j] = z2;
                if z2 != T::zero() {
                    let zinv = T::one() / z2;
                    c = f * zinv;
                    s = h * zinv;
                }
                f = c * g2 + s * y;
                x = c * y - s * g2;
            }
            rv1[l] = T::zero();
            rv1[k] = f;
            w[k] = x;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| w[j].partial_cmp(&w[i]).unwrap_or(std::cmp::Ordering::Equal));
    let singular_values = order.iter().map(|&i| w[i]).collect();
    let v_sorted = Matrix::from_fn(n, |r, c| v[(r, order[c])]);
    Ok(Svd { singular_values, v: v_sorted })
}

/// Flips `v` so its largest-magnitude entry is positive; makes outputs
/// reproducible regardless of the sign the factorization happened to pick.
fn canonical_sign<T: Scalar>(v: &mut Vector<T>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < T::zero() {
        for x in v.as_mut_slice() {
            *x = -*x;
        }
    }
}

/// The two smallest singular values of `m` and a unit right singular vector
/// for the smallest.
pub fn smallest_singular_pair<T: Scalar>(m: &Matrix<T>) -> Result<SingularTriple<T>> {
    check_finite(m)?;
    let n = m.dim();
    if n == 0 {
        return Err(invalid("empty matrix"));
    }
    let dec = svd(m)?;
    let sv = &dec.singular_values;
    let sigma_min = sv[n - 1];
    let sigma_second = if n >= 2 { sv[n - 2] } else { sigma_min };
    let sigma_max = sv[0];
    let mut v_min = dec.v.column(n - 1);
    v_min = v_min.normalized().unwrap_or_else(|| Vector::unit(n, 0));
    canonical_sign(&mut v_min);
    let tol = T::lit(64.0) * T::epsilon() * sigma_max.max(T::min_positive_value());
    Ok(SingularTriple {
        sigma_min,
        sigma_second,
        sigma_max,
        v_min,
        degenerate: n < 2 || sigma_second - sigma_min <= tol,
    })
}

/// Largest singular value.
pub fn operator_norm<T: Scalar>(m: &Matrix<T>) -> Result<T> {
    check_finite(m)?;
    if m.dim() == 0 {
        return Ok(T::zero());
    }
    Ok(svd(m)?.singular_values[0])
}

/// Draws `(A, b)` with i.i.d. `N(0, variance)` entries from a ChaCha20 stream
/// seeded by `seed`. `A` is filled row by row, then `b`.
pub fn sample_gaussian_linear<T: Scalar>(
    n: usize,
    variance: f64,
    seed: u64,
) -> Result<(Matrix<T>, Vector<T>)> {
    if n == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(invalid(format!("variance must be finite and non-negative, got {variance}")));
    }
    let sd = variance.sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut draw = || {
        let z: f64 = StandardNormal.sample(&mut rng);
        T::lit(sd * z)
    };
    let a = Matrix::from_fn(n, |_, _| draw());
    let b = Vector::from_vec((0..n).map(|_| draw()).collect());
    Ok((a, b))
}
