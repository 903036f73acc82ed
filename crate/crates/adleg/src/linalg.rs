//! Small dense linear algebra used by the Galerkin solves and the decay-class
//! probes: symmetric storage, Cholesky factorization, spectral norms by power
//! iteration. Everything here is desk scale (a few hundred to a few thousand
//! unknowns), so plain dense kernels are the simplest reliable choice.

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: f64 },

    #[error("dimension mismatch: matrix is {n}x{n}, vector has length {len}")]
    DimensionMismatch { n: usize, len: usize },
}

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = f(i, j);
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![T::zero(); self.n];
        for (i, out) in y.iter_mut().enumerate() {
            let row = &self.data[i * self.n..(i + 1) * self.n];
            let mut acc = T::zero();
            for (a, b) in row.iter().zip(x) {
                acc += *a * *b;
            }
            *out = acc;
        }
        y
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a - b)
            .collect();
        Self { n: self.n, data }
    }

    /// Largest absolute asymmetry `max |a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub struct CholeskyFactor<T> {
    n: usize,
    lower: Vec<T>,
}

impl<T: Scalar> CholeskyFactor<T> {
    /// Factor `a = L L^T`. Fails with [`LinalgError::NotPositiveDefinite`]
    /// when a pivot drops below `tiny * max diagonal`, which signals a
    /// singular restriction or corrupted assembly upstream.
    pub fn new(a: &DenseMatrix<T>) -> Result<Self, LinalgError> {
        let n = a.n();
        let mut lower = vec![T::zero(); n * n];
        let mut max_diag = T::zero();
        for i in 0..n {
            max_diag = max_diag.max(a.get(i, i).abs());
        }
        let floor = T::epsilon() * T::epsilon() * max_diag.max(T::one());
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= lower[j * n + k] * lower[j * n + k];
            }
            if diag <= floor {
                return Err(LinalgError::NotPositiveDefinite {
                    column: j,
                    pivot: diag.to_f64_lossy(),
                });
            }
            let pivot = diag.sqrt();
            lower[j * n + j] = pivot;
            for i in (j + 1)..n {
                let mut value = a.get(i, j);
                for k in 0..j {
                    value -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = value / pivot;
            }
        }
        Ok(Self { n, lower })
    }

    /// Solve `A x = b` by forward/back substitution.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        if b.len() != self.n {
            return Err(LinalgError::DimensionMismatch {
                n: self.n,
                len: b.len(),
            });
        }
        let n = self.n;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let l = self.lower[i * n + k];
                let yk = y[k];
                y[i] -= l * yk;
            }
            y[i] /= self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let l = self.lower[k * n + i];
                let yk = y[k];
                y[i] -= l * yk;
            }
            y[i] /= self.lower[i * n + i];
        }
        Ok(y)
    }

    /// Dense inverse, one solve per unit vector.
    pub fn inverse(&self) -> Result<DenseMatrix<T>, LinalgError> {
        let n = self.n;
        let mut inv = DenseMatrix::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e[j] = T::one();
            let col = self.solve(&e)?;
            for (i, &value) in col.iter().enumerate() {
                inv.set(i, j, value);
            }
            e[j] = T::zero();
        }
        Ok(inv)
    }
}

/// Spectral norm (largest singular value) of a symmetric matrix by power
/// iteration on `M^2`, which converges in magnitude even when the extreme
/// eigenvalues come in near-opposite pairs.
pub fn spectral_norm_sym<T: Scalar>(m: &DenseMatrix<T>) -> T {
    let n = m.n();
    if n == 0 {
        return T::zero();
    }
    // deterministic start vector with a mild asymmetry so it is never
    // orthogonal to the dominant eigenvector by symmetry accident
    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + T::of_usize(i % 7) * T::of(0.1))
        .collect();
    normalize(&mut x);
    let mut previous = T::zero();
    for _ in 0..500 {
        let y = m.mul_vec(&x);
        let z = m.mul_vec(&y);
        let norm_z = norm2(&z);
        if norm_z == T::zero() {
            return T::zero();
        }
        let estimate = norm_z.sqrt(); // ||M^2 x|| ~ lambda_max^2 with ||x|| = 1
        x = z;
        normalize(&mut x);
        if (estimate - previous).abs() <= T::of(1e-12) * estimate.max(T::one()) {
            return estimate;
        }
        previous = estimate;
    }
    previous
}

/// Smallest eigenvalue of an SPD matrix by inverse power iteration.
pub fn min_eigenvalue_spd<T: Scalar>(m: &DenseMatrix<T>) -> Result<T, LinalgError> {
    let n = m.n();
    if n == 0 {
        return Ok(T::zero());
    }
    let factor = CholeskyFactor::new(m)?;
    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + T::of_usize(i % 5) * T::of(0.2))
        .collect();
    normalize(&mut x);
    let mut previous = T::zero();
    for _ in 0..500 {
        let y = factor.solve(&x)?;
        let mu = norm2(&y); // ~ 1/lambda_min
        x = y;
        normalize(&mut x);
        let estimate = mu.recip();
        if (estimate - previous).abs() <= T::of(1e-12) * estimate.max(T::epsilon()) {
            return Ok(estimate);
        }
        previous = estimate;
    }
    Ok(previous)
}

fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

fn normalize<T: Scalar>(x: &mut [T]) {
    let n = norm2(x);
    if n > T::zero() {
        for v in x.iter_mut() {
            *v /= n;
        }
    }
}
