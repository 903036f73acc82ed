//! Babuska-Shen basis: index sets, sparse coefficient vectors, projections
//! and Parseval norms.
//!
//! The basis elements `eta_k(x) = (L_{k-2}(x) - L_k(x)) / sqrt(4k - 2)`,
//! `k >= 2`, are orthonormal in the H1_0(I) inner product, so the H1_0 norm
//! of `v = sum v_k eta_k` is the Euclidean norm of its coefficients, and the
//! H^{-1} norm of a functional expanded in the dual basis `eta*_k` works the
//! same way. Derivatives link back to the orthonormal Legendre basis through
//! `D eta_k = -phi_{k-1}`.
//!
//! Index sets live in `N_2 = {k >= 2}`. Vectors are sparse maps from index to
//! coefficient plus a certified tail bound `tau`: the l2 mass of whatever was
//! not stored is guaranteed to be at most `tau`, so every norm is reported as
//! the interval `[stored, sqrt(stored^2 + tau^2)]`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::legendre::{eval_legendre, LegendreSeries, Normalization};
use crate::scalar::Scalar;

/// Smallest admissible Babuska-Shen index.
pub const MIN_INDEX: usize = 2;

#[derive(Debug, Error, PartialEq)]
pub enum BasisError {
    #[error("index {0} below the Babuska-Shen range (k >= 2)")]
    IndexBelowRange(usize),

    #[error("operation requires a {expected:?} vector but got {found:?}")]
    RoleMismatch { expected: Role, found: Role },
}

/// Role of a coefficient vector: an H1_0 function in the primal basis or an
/// H^{-1} functional in the dual basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Primal,
    Dual,
}

// ---------------------------------------------------------------------------
// IndexSet
// ---------------------------------------------------------------------------

/// A finite sorted subset of `N_2`, the active degrees of freedom.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndexSet {
    indices: Vec<usize>,
}

impl IndexSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Build from arbitrary iteration order; sorts and deduplicates.
    pub fn from_indices(iter: impl IntoIterator<Item = usize>) -> Result<Self, BasisError> {
        let mut indices: Vec<usize> = iter.into_iter().collect();
        for &k in &indices {
            if k < MIN_INDEX {
                return Err(BasisError::IndexBelowRange(k));
            }
        }
        indices.sort_unstable();
        indices.dedup();
        Ok(Self { indices })
    }

    /// The contiguous range `{2, ..., k_max}` (empty when `k_max < 2`).
    pub fn full_range(k_max: usize) -> Self {
        if k_max < MIN_INDEX {
            return Self::empty();
        }
        Self {
            indices: (MIN_INDEX..=k_max).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.indices.binary_search(&k).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    pub fn max(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        let mut merged = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.indices.len() && j < other.indices.len() {
            let (a, b) = (self.indices[i], other.indices[j]);
            if a < b {
                merged.push(a);
                i += 1;
            } else if b < a {
                merged.push(b);
                j += 1;
            } else {
                merged.push(a);
                i += 1;
                j += 1;
            }
        }
        merged.extend_from_slice(&self.indices[i..]);
        merged.extend_from_slice(&other.indices[j..]);
        IndexSet { indices: merged }
    }

    pub fn is_subset_of(&self, other: &IndexSet) -> bool {
        self.iter().all(|k| other.contains(k))
    }
}

impl FromIterator<usize> for IndexSet {
    /// Panics on indices below 2; use [`IndexSet::from_indices`] to handle
    /// that case as an error.
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_indices(iter).expect("index below Babuska-Shen range")
    }
}

// ---------------------------------------------------------------------------
// BsVector
// ---------------------------------------------------------------------------

/// Sparse coefficient vector over the Babuska-Shen basis (primal) or its dual.
///
/// `tail_bound` certifies the l2 mass of coefficients beyond the stored ones;
/// `k_max` records the largest index up to which the vector is represented,
/// so a zero entry below `k_max` is known to be zero while anything above is
/// only bounded by the tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsVector<T> {
    entries: BTreeMap<usize, T>,
    role: Role,
    tail_bound: T,
    k_max: usize,
}

impl<T: Scalar> BsVector<T> {
    pub fn zero(role: Role) -> Self {
        Self {
            entries: BTreeMap::new(),
            role,
            tail_bound: T::zero(),
            k_max: MIN_INDEX - 1,
        }
    }

    /// A single unit coefficient at index `k`.
    pub fn unit(role: Role, k: usize) -> Result<Self, BasisError> {
        Self::from_pairs(role, [(k, T::one())])
    }

    pub fn from_pairs(
        role: Role,
        pairs: impl IntoIterator<Item = (usize, T)>,
    ) -> Result<Self, BasisError> {
        let mut v = Self::zero(role);
        for (k, value) in pairs {
            v.set(k, value)?;
        }
        Ok(v)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn tail_bound(&self) -> T {
        self.tail_bound
    }

    /// Largest represented index; entries above it are covered by the tail
    /// bound only.
    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn set_tail_bound(&mut self, tau: T, k_max: usize) {
        self.tail_bound = tau;
        self.k_max = self.k_max.max(k_max);
    }

    pub fn set(&mut self, k: usize, value: T) -> Result<(), BasisError> {
        if k < MIN_INDEX {
            return Err(BasisError::IndexBelowRange(k));
        }
        if value == T::zero() {
            self.entries.remove(&k);
        } else {
            self.entries.insert(k, value);
        }
        self.k_max = self.k_max.max(k);
        Ok(())
    }

    pub fn get(&self, k: usize) -> T {
        self.entries.get(&k).copied().unwrap_or_else(T::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.entries.iter().map(|(&k, &v)| (k, v))
    }

    pub fn support_len(&self) -> usize {
        self.entries.len()
    }

    pub fn support(&self) -> IndexSet {
        IndexSet {
            indices: self.entries.keys().copied().collect(),
        }
    }

    pub fn max_support(&self) -> Option<usize> {
        self.entries.keys().next_back().copied()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty() && self.tail_bound == T::zero()
    }

    /// Euclidean norm of the stored coefficients (H1_0 for primal vectors,
    /// H^{-1} for dual ones, by Parseval).
    pub fn stored_norm(&self) -> T {
        self.entries
            .values()
            .fold(T::zero(), |acc, &v| acc + v * v)
            .sqrt()
    }

    /// Certified norm interval `[stored, sqrt(stored^2 + tau^2)]`.
    pub fn norm_interval(&self) -> (T, T) {
        let stored = self.stored_norm();
        let upper = (stored * stored + self.tail_bound * self.tail_bound).sqrt();
        (stored, upper)
    }

    pub fn scale(&mut self, factor: T) {
        for v in self.entries.values_mut() {
            *v *= factor;
        }
        self.tail_bound *= factor.abs();
        self.entries.retain(|_, v| *v != T::zero());
    }

    /// `self - other`, with tail bounds added (the triangle inequality is the
    /// only certified statement available for the omitted mass).
    pub fn sub(&self, other: &Self) -> Result<Self, BasisError> {
        if self.role != other.role {
            return Err(BasisError::RoleMismatch {
                expected: self.role,
                found: other.role,
            });
        }
        let mut out = self.clone();
        for (k, v) in other.iter() {
            let merged = out.get(k) - v;
            out.set(k, merged)?;
        }
        out.tail_bound = self.tail_bound + other.tail_bound;
        out.k_max = self.k_max.max(other.k_max);
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self, BasisError> {
        let mut negated = other.clone();
        negated.scale(-T::one());
        self.sub(&negated)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Orthonormal Legendre coefficients of the derivative of a primal vector:
/// `(Dv)_h = -v_{h+1}` for `h >= 1`, zero at `h = 0`.
pub fn bs_to_legendre_derivative<T: Scalar>(
    v: &BsVector<T>,
) -> Result<LegendreSeries<T>, BasisError> {
    if v.role() != Role::Primal {
        return Err(BasisError::RoleMismatch {
            expected: Role::Primal,
            found: v.role(),
        });
    }
    let len = v.max_support().unwrap_or(1);
    let mut coeffs = vec![T::zero(); len];
    for (k, value) in v.iter() {
        coeffs[k - 1] = -value;
    }
    Ok(LegendreSeries::new(coeffs, Normalization::Orthonormal))
}

/// Evaluate `eta_k(x) = (L_{k-2}(x) - L_k(x)) / sqrt(4k - 2)`.
pub fn eval_eta<T: Scalar>(k: usize, x: T) -> T {
    debug_assert!(k >= MIN_INDEX);
    (eval_legendre(k - 2, x) - eval_legendre(k, x)) / (T::of_usize(4 * k - 2)).sqrt()
}

/// Evaluate a primal vector pointwise: `sum_k v_k eta_k(x)`.
///
/// The value vanishes at `x = +-1` up to roundoff since every `eta_k` does.
pub fn eval_bs_function<T: Scalar>(v: &BsVector<T>, x: T) -> Result<T, BasisError> {
    if v.role() != Role::Primal {
        return Err(BasisError::RoleMismatch {
            expected: Role::Primal,
            found: v.role(),
        });
    }
    let Some(k_top) = v.max_support() else {
        return Ok(T::zero());
    };
    let row = crate::legendre::legendre_row(k_top, x);
    let mut acc = T::zero();
    for (k, value) in v.iter() {
        acc += value * (row[k - 2] - row[k]) / (T::of_usize(4 * k - 2)).sqrt();
    }
    Ok(acc)
}

/// Projection `P_Lambda v`: keep exactly the entries indexed in `lambda`.
///
/// When every requested index lies inside the represented range the
/// restriction is exact and the output carries a zero tail bound; otherwise
/// the input tail bound is propagated.
pub fn project<T: Scalar>(v: &BsVector<T>, lambda: &IndexSet) -> BsVector<T> {
    let mut out = BsVector::zero(v.role());
    for k in lambda.iter() {
        let value = v.get(k);
        if value != T::zero() {
            out.set(k, value).expect("index validated by IndexSet");
        }
    }
    let exact = lambda.iter().all(|k| k <= v.k_max()) || v.tail_bound() == T::zero();
    if exact {
        out.k_max = out.k_max.max(lambda.max().unwrap_or(MIN_INDEX - 1));
    } else {
        out.tail_bound = v.tail_bound();
        out.k_max = v.k_max();
    }
    out
}

/// Complement projection `v - P_Lambda v` over the stored entries; the tail
/// bound is inherited (omitted mass is outside any finite `lambda`).
pub fn project_complement<T: Scalar>(v: &BsVector<T>, lambda: &IndexSet) -> BsVector<T> {
    let mut out = BsVector::zero(v.role());
    for (k, value) in v.iter() {
        if !lambda.contains(k) {
            out.set(k, value).expect("stored index is valid");
        }
    }
    out.tail_bound = v.tail_bound();
    out.k_max = v.k_max();
    out
}

/// Certified norm interval of a vector; see [`BsVector::norm_interval`].
pub fn norm<T: Scalar>(v: &BsVector<T>) -> (T, T) {
    v.norm_interval()
}
