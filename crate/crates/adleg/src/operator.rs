//! Assembly of the semi-infinite stiffness matrix for
//! `L u = -D(nu D u) + sigma u` in the Babuska-Shen basis, together with its
//! off-diagonal decay metadata, banded truncations and certified
//! matrix-vector products.
//!
//! With `nu = sum_k nu_k L_k` (classical coefficients) the diffusion entries
//! reduce through the Legendre product rule to the finite sum
//!
//! ```text
//! a1[m, n] = sum_r B^r_{m-1, n-1} nu_{(m-1)+(n-1)-2r},   m, n >= 2,
//! ```
//!
//! and the reaction entries expand `(L_{m-2} - L_m)(L_{n-2} - L_n)` into four
//! C-weighted sums with signs (+, -, -, +):
//!
//! ```text
//! a0[m, n] = (S(m-2,n-2) - S(m-2,n) - S(m,n-2) + S(m,n)) / sqrt((2m-1)(2n-1))
//! S(p, q)  = sum_r C^r_{p,q} sigma_{p+q-2r}
//! ```
//!
//! Entries are computed on demand and memoized; no global matrix is ever
//! materialized. When the coefficients decay exponentially so do the matrix
//! entries away from the diagonal, which is what the [`DecayClass`] captures
//! and what every tail estimate downstream relies on.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use thiserror::Error;

use crate::basis::{BasisError, BsVector, IndexSet, Role, MIN_INDEX};
use crate::legendre::{
    b_coeff, c_coeff, gauss_legendre_rule, legendre_transform, LegendreError, LegendreSeries,
    Normalization,
};
use crate::linalg::{spectral_norm_sym, DenseMatrix};
use crate::scalar::Scalar;

/// Square of the optimal Poincare constant on I = (-1, 1) with homogeneous
/// Dirichlet conditions: `||v||_{L2}^2 <= (2/pi)^2 ||Dv||_{L2}^2`.
const POINCARE_SQ: f64 = 4.0 / (std::f64::consts::PI * std::f64::consts::PI);

/// Absolute magnitude below which matrix entries are treated as numerical
/// zeros by the decay-class fits.
const ENTRY_FLOOR: f64 = 1e-14;

#[derive(Debug, Error)]
pub enum OperatorError {
    #[error("coefficient series must be in classical L_k normalization")]
    WrongNormalization,

    #[error("diffusion coefficient must be strictly positive; sampled minimum {0}")]
    NonPositiveDiffusion(f64),

    #[error("reaction coefficient must be nonnegative; sampled minimum {0}")]
    NegativeReaction(f64),

    #[error("decay probe must cover at least 20 indices, got {0}")]
    ProbeTooSmall(usize),

    #[error("decay fit failed: only {usable} usable off-diagonal magnitudes")]
    DecayFitFailed { usable: usize },

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error(transparent)]
    Legendre(#[from] LegendreError),
}

// ---------------------------------------------------------------------------
// Entry formulas
// ---------------------------------------------------------------------------

/// Diffusion entry `int nu D eta_m D eta_n` from the B-coefficient sum.
/// For `nu == 1` this is the Kronecker delta.
pub fn entry_diffusion<T: Scalar>(m: usize, n: usize, nu: &LegendreSeries<T>) -> T {
    debug_assert!(m >= MIN_INDEX && n >= MIN_INDEX);
    debug_assert_eq!(nu.normalization(), Normalization::Classical);
    let Some(deg) = nu.degree() else {
        return T::zero();
    };
    let (p, q) = (m - 1, n - 1);
    let r_top = p.min(q);
    let r_min = if p + q > deg {
        (p + q - deg).div_ceil(2)
    } else {
        0
    };
    if r_min > r_top {
        return T::zero();
    }
    let mut acc = T::zero();
    for r in r_min..=r_top {
        let idx = p + q - 2 * r;
        let coeff = nu.coeff(idx);
        if coeff != T::zero() {
            acc += b_coeff::<T>(p, q, r).expect("r in range by construction") * coeff;
        }
    }
    acc
}

/// One C-weighted linearized sum `S(p, q) = sum_r C^r_{p,q} sigma_{p+q-2r}`.
fn linearized_mass_sum<T: Scalar>(p: usize, q: usize, sigma: &LegendreSeries<T>) -> T {
    let Some(deg) = sigma.degree() else {
        return T::zero();
    };
    let r_top = p.min(q);
    let r_min = if p + q > deg {
        (p + q - deg).div_ceil(2)
    } else {
        0
    };
    if r_min > r_top {
        return T::zero();
    }
    let mut acc = T::zero();
    for r in r_min..=r_top {
        let idx = p + q - 2 * r;
        let coeff = sigma.coeff(idx);
        if coeff != T::zero() {
            acc += c_coeff::<T>(p, q, r).expect("r in range by construction") * coeff;
        }
    }
    acc
}

/// Reaction entry `int sigma eta_m eta_n` from the four C-coefficient sums.
/// For `sigma == 1` this reproduces the pentadiagonal mass matrix.
pub fn entry_reaction<T: Scalar>(m: usize, n: usize, sigma: &LegendreSeries<T>) -> T {
    debug_assert!(m >= MIN_INDEX && n >= MIN_INDEX);
    debug_assert_eq!(sigma.normalization(), Normalization::Classical);
    if sigma.degree().is_none() {
        return T::zero();
    }
    let sum = linearized_mass_sum(m - 2, n - 2, sigma)
        - linearized_mass_sum(m - 2, n, sigma)
        - linearized_mass_sum(m, n - 2, sigma)
        + linearized_mass_sum(m, n, sigma);
    sum / (T::of_usize((2 * m - 1) * (2 * n - 1))).sqrt()
}

// ---------------------------------------------------------------------------
// Problem specification
// ---------------------------------------------------------------------------

/// Right-hand-side descriptor.
#[derive(Clone)]
pub enum Rhs<T> {
    /// A function on (-1, 1) to be expanded in the dual basis by quadrature.
    Function(Arc<dyn Fn(T) -> T + Send + Sync>),
    /// Dual Babuska-Shen coefficients given directly.
    Dual(BsVector<T>),
    /// Manufactured from an exact solution: `f` is produced in coefficient
    /// space as `A u`, so the data path matches the solver's own algebra.
    ManufacturedFrom(BsVector<T>),
}

impl<T> std::fmt::Debug for Rhs<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rhs::Function(_) => f.write_str("Rhs::Function(..)"),
            Rhs::Dual(_) => f.write_str("Rhs::Dual(..)"),
            Rhs::ManufacturedFrom(_) => f.write_str("Rhs::ManufacturedFrom(..)"),
        }
    }
}

/// The elliptic problem `-D(nu D u) + sigma u = f` with its certified
/// coefficient bounds.
///
/// `alpha_lower = min nu` is the coercivity constant. The continuity constant
/// is `alpha_upper = max nu + (2/pi)^2 max sigma`: the Poincare factor makes
/// the norm sandwich `sqrt(a_*) ||v|| <= |||v||| <= sqrt(a^*) ||v||` actually
/// hold for every H1_0 function (the reaction term contributes through the
/// L2 norm, which the Poincare inequality controls by the H1_0 norm).
/// Pointwise bounds are certified by sampling on a 1001-point grid.
#[derive(Debug, Clone)]
pub struct ProblemSpec<T> {
    nu: LegendreSeries<T>,
    sigma: LegendreSeries<T>,
    rhs: Rhs<T>,
    alpha_lower: T,
    alpha_upper: T,
    nu_range: (T, T),
    sigma_range: (T, T),
    warnings: Vec<String>,
}

impl<T: Scalar> ProblemSpec<T> {
    /// Validate coefficients (classical normalization, nu > 0, sigma >= 0 on
    /// the sampling grid) and record the certified bounds.
    pub fn new(
        nu: LegendreSeries<T>,
        sigma: LegendreSeries<T>,
        rhs: Rhs<T>,
    ) -> Result<Self, OperatorError> {
        if nu.normalization() != Normalization::Classical
            || sigma.normalization() != Normalization::Classical
        {
            return Err(OperatorError::WrongNormalization);
        }
        let grid_points = 1001;
        let sample = |series: &LegendreSeries<T>| -> (T, T) {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for i in 0..grid_points {
                let x = T::of(-1.0) + T::of(2.0) * T::of_usize(i) / T::of_usize(grid_points - 1);
                let v = series.eval(x);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let nu_range = sample(&nu);
        let sigma_range = if sigma.degree().is_some() {
            sample(&sigma)
        } else {
            (T::zero(), T::zero())
        };
        if !(nu_range.0 > T::zero()) {
            return Err(OperatorError::NonPositiveDiffusion(
                nu_range.0.to_f64_lossy(),
            ));
        }
        let sigma_tol = T::of(1e-12) * sigma_range.1.abs().max(T::one());
        if sigma_range.0 < -sigma_tol {
            return Err(OperatorError::NegativeReaction(
                sigma_range.0.to_f64_lossy(),
            ));
        }
        let sigma_max = sigma_range.1.max(T::zero());
        let alpha_lower = nu_range.0;
        let alpha_upper = nu_range.1 + T::of(POINCARE_SQ) * sigma_max;
        Ok(Self {
            nu,
            sigma,
            rhs,
            alpha_lower,
            alpha_upper,
            nu_range,
            sigma_range,
            warnings: Vec::new(),
        })
    }

    /// Ingest coefficient functions: each handle is expanded until the
    /// trailing relative coefficient drops below 1e-14, doubling the
    /// expansion order up to 512 (a warning is recorded past that point).
    pub fn from_functions(
        nu_fn: impl Fn(T) -> T,
        sigma_fn: Option<impl Fn(T) -> T>,
        rhs: Rhs<T>,
    ) -> Result<Self, OperatorError> {
        let mut warnings = Vec::new();
        let nu = ingest_classical_series(nu_fn, "nu", &mut warnings)?;
        let sigma = match sigma_fn {
            Some(f) => ingest_classical_series(f, "sigma", &mut warnings)?,
            None => LegendreSeries::zero(),
        };
        let mut spec = Self::new(nu, sigma, rhs)?;
        spec.warnings = warnings;
        Ok(spec)
    }

    pub fn nu(&self) -> &LegendreSeries<T> {
        &self.nu
    }

    pub fn sigma(&self) -> &LegendreSeries<T> {
        &self.sigma
    }

    pub fn rhs(&self) -> &Rhs<T> {
        &self.rhs
    }

    /// Coercivity constant `alpha_* = min nu`.
    pub fn alpha_lower(&self) -> T {
        self.alpha_lower
    }

    /// Continuity constant `alpha^* = max nu + (2/pi)^2 max sigma`.
    pub fn alpha_upper(&self) -> T {
        self.alpha_upper
    }

    pub fn nu_range(&self) -> (T, T) {
        self.nu_range
    }

    pub fn sigma_range(&self) -> (T, T) {
        self.sigma_range
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Exact bandwidth of the stiffness matrix when both coefficients are
    /// exact polynomials: degree of nu for the diffusion part, degree of
    /// sigma plus two for the reaction part.
    pub fn exact_band(&self) -> Option<usize> {
        if !self.nu.is_exact() || !self.sigma.is_exact() {
            return None;
        }
        let nu_band = self.nu.degree().unwrap_or(0);
        let sigma_band = match self.sigma.degree() {
            Some(d) => d + 2,
            None => 0,
        };
        Some(nu_band.max(sigma_band))
    }
}

/// Expand a coefficient function into classical Legendre coefficients,
/// doubling the order until the trailing relative coefficient drops below
/// 1e-14 (warning recorded past order 512).
pub fn ingest_classical_series<T: Scalar>(
    f: impl Fn(T) -> T,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<LegendreSeries<T>, OperatorError> {
    let mut n = 16usize;
    loop {
        let rule = gauss_legendre_rule::<T>(n + 16)?;
        let ortho = legendre_transform(&f, n, &rule, None)?;
        let classical = ortho.to_classical();
        let scale = classical
            .coeffs()
            .iter()
            .fold(T::zero(), |acc, c| acc.max(c.abs()));
        let tail = classical.coeffs()[n.saturating_sub(4)..]
            .iter()
            .fold(T::zero(), |acc, c| acc.max(c.abs()));
        if tail <= T::of(1e-14) * scale {
            let mut out = classical;
            out.truncate_below(T::of(1e-14) * scale);
            return Ok(out);
        }
        if n >= 512 {
            warnings.push(format!(
                "{label}: trailing relative coefficient {:.3e} above 1e-14 at order 512",
                (tail / scale).to_f64_lossy()
            ));
            return Ok(classical);
        }
        n *= 2;
    }
}

// ---------------------------------------------------------------------------
// Decay class
// ---------------------------------------------------------------------------

/// Decay metadata of the inverse matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseDecay<T> {
    /// Rate `eta_bar` in `|(A^{-1})_{mn}| <= C e^{-eta_bar |m-n|}`.
    pub eta: T,
    /// Amplitude `C_{A^{-1}}`, estimated from the inverse of a leading block.
    pub amplitude: T,
}

/// Exponential off-diagonal decay class of a stiffness matrix:
/// `|a_{mn}| <= amplitude * exp(-eta |m-n|)` over the probed block.
///
/// A diagonal operator is reported with `eta = +inf` and `exact_band = 0`;
/// polynomial coefficients give a finite `exact_band` and the truncation
/// logic short-circuits accordingly.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayClass<T> {
    eta: T,
    amplitude: T,
    trunc_amplitude: T,
    min_diagonal: T,
    inverse: Option<InverseDecay<T>>,
    exact_band: Option<usize>,
}

impl<T: Scalar> DecayClass<T> {
    /// Off-diagonal decay rate `eta_L` (`+inf` for diagonal operators).
    pub fn eta(&self) -> T {
        self.eta
    }

    /// Envelope amplitude `c_L`.
    pub fn amplitude(&self) -> T {
        self.amplitude
    }

    /// Amplitude `C_A` of the truncation estimate `psi_A`.
    pub fn trunc_amplitude(&self) -> T {
        self.trunc_amplitude
    }

    pub fn min_diagonal(&self) -> T {
        self.min_diagonal
    }

    /// Inverse decay data; present exactly when the invertibility condition
    /// `c_L < (e^{eta} - 1) min_diag / 2` held at construction.
    pub fn inverse(&self) -> Option<&InverseDecay<T>> {
        self.inverse.as_ref()
    }

    pub fn exact_band(&self) -> Option<usize> {
        self.exact_band
    }

    pub fn is_diagonal(&self) -> bool {
        self.exact_band == Some(0) || self.eta == T::infinity()
    }

    /// Truncation error estimate `psi_A(J) = C_A e^{-eta J}`.
    pub fn psi(&self, j: usize) -> T {
        if self.eta == T::infinity() {
            if j == 0 {
                self.trunc_amplitude
            } else {
                T::zero()
            }
        } else {
            self.trunc_amplitude * (-self.eta * T::of_usize(j)).exp()
        }
    }

    /// Bound on the l2 operator norm via the Schur test:
    /// `||A|| <= c_L (1 + e^{-eta}) / (1 - e^{-eta})`.
    pub fn operator_norm_bound(&self) -> T {
        if self.eta == T::infinity() {
            self.amplitude
        } else {
            let q = (-self.eta).exp();
            self.amplitude * (T::one() + q) / (T::one() - q)
        }
    }

    fn placeholder() -> Self {
        Self {
            eta: T::infinity(),
            amplitude: T::zero(),
            trunc_amplitude: T::zero(),
            min_diagonal: T::zero(),
            inverse: None,
            exact_band: None,
        }
    }

    #[cfg(test)]
    pub(crate) fn override_inverse_for_tests(&mut self, eta: T, amplitude: T) {
        self.inverse = Some(InverseDecay { eta, amplitude });
    }

    #[cfg(test)]
    pub(crate) fn clear_inverse_for_tests(&mut self) {
        self.inverse = None;
    }
}

/// Rate `eta_bar` of the inverse decay class, from the unique root in (0, 1)
/// of `z^2 - ((e^{2 eta} + 2c + 1)/(e^{eta} (c + 1))) z + 1` where `c` is the
/// envelope amplitude normalized by the smallest diagonal entry. Returns
/// `None` when the invertibility condition `c < (e^{eta} - 1)/2` fails (the
/// quadratic then has no root inside the unit interval).
pub fn inverse_decay_rate<T: Scalar>(eta: T, amplitude: T, min_diagonal: T) -> Option<T> {
    if !(min_diagonal > T::zero()) {
        return None;
    }
    if eta == T::infinity() {
        return Some(T::infinity());
    }
    let c = amplitude / min_diagonal;
    if !(c < (eta.exp() - T::one()) / T::of(2.0)) {
        return None;
    }
    let e = eta.exp();
    let b = ((T::of(2.0) * eta).exp() + T::of(2.0) * c + T::one()) / (e * (c + T::one()));
    let disc = b * b - T::of(4.0);
    debug_assert!(disc > T::zero());
    let z = (b - disc.sqrt()) / T::of(2.0);
    Some(-z.ln())
}

// ---------------------------------------------------------------------------
// Stiffness operator
// ---------------------------------------------------------------------------

/// Lazily assembled stiffness operator with a memoized entry cache.
///
/// The cache is a concurrent-read, serialized-write memo table: on a miss the
/// entry is recomputed outside any lock and inserted afterwards, so duplicate
/// computation is possible but torn values are not.
#[derive(Debug)]
pub struct StiffnessOperator<T> {
    problem: ProblemSpec<T>,
    cache: RwLock<HashMap<(usize, usize), T>>,
    decay: DecayClass<T>,
}

impl<T: Scalar> StiffnessOperator<T> {
    /// Assemble with the default 40-index decay probe.
    pub fn new(problem: ProblemSpec<T>) -> Result<Self, OperatorError> {
        Self::with_probe_size(problem, 40)
    }

    pub fn with_probe_size(
        problem: ProblemSpec<T>,
        probe_size: usize,
    ) -> Result<Self, OperatorError> {
        let mut op = Self {
            problem,
            cache: RwLock::new(HashMap::new()),
            decay: DecayClass::placeholder(),
        };
        op.decay = fit_decay_class(&op, probe_size)?;
        Ok(op)
    }

    pub fn problem(&self) -> &ProblemSpec<T> {
        &self.problem
    }

    pub fn decay(&self) -> &DecayClass<T> {
        &self.decay
    }

    /// Matrix entry `a(eta_n, eta_m)`, memoized under the unordered pair.
    pub fn entry(&self, m: usize, n: usize) -> T {
        let key = (m.min(n), m.max(n));
        if let Some(&v) = self.cache.read().expect("entry cache poisoned").get(&key) {
            return v;
        }
        let value = entry_diffusion(key.0, key.1, &self.problem.nu)
            + entry_reaction(key.0, key.1, &self.problem.sigma);
        self.cache
            .write()
            .expect("entry cache poisoned")
            .insert(key, value);
        value
    }

    /// Dense restriction to an index set, in the set's sorted order.
    pub fn dense_on(&self, lambda: &IndexSet) -> DenseMatrix<T> {
        let idx: Vec<usize> = lambda.iter().collect();
        DenseMatrix::from_fn(idx.len(), |i, j| self.entry(idx[i], idx[j]))
    }

    /// Dense block on the contiguous range `start .. start + size`.
    pub fn dense_block(&self, start: usize, size: usize) -> DenseMatrix<T> {
        assert!(start >= MIN_INDEX);
        DenseMatrix::from_fn(size, |i, j| self.entry(start + i, start + j))
    }

    /// Banded truncation view keeping entries with `|m - n| <= band`.
    pub fn truncated(&self, band: usize) -> TruncatedOperator<'_, T> {
        TruncatedOperator { op: self, band }
    }

    /// Bound on the l2 operator norm: the continuity constant `alpha^*`
    /// (Parseval turns the bilinear-form bound into an operator bound), or
    /// the decay-envelope Schur bound when that happens to be smaller.
    pub fn operator_norm_bound(&self) -> T {
        self.problem
            .alpha_upper()
            .min(self.decay.operator_norm_bound())
    }

    /// Apply the operator to a finitely supported primal vector, producing
    /// dual coefficients up to `k_out` (clamped to cover the support) with a
    /// certified tail bound.
    ///
    /// The tail uses the decay envelope weighted over the support:
    /// `|(Av)_l| <= c_L e^{-eta (l - k_top)} S` for `l > k_top` with
    /// `S = sum_k e^{-eta (k_top - k)} |v_k|`, summed geometrically beyond
    /// `k_out`; the input's own tail enters through the operator norm bound.
    pub fn apply(&self, v: &BsVector<T>, k_out: usize) -> BsVector<T> {
        assert_eq!(v.role(), Role::Primal, "apply expects a primal vector");
        let mut out = BsVector::zero(Role::Dual);
        let Some(k_top) = v.max_support() else {
            let tau = self.operator_norm_bound() * v.tail_bound();
            out.set_tail_bound(tau, k_out.max(MIN_INDEX - 1));
            return out;
        };
        let k_out = k_out.max(k_top);
        for ell in MIN_INDEX..=k_out {
            if let Some(band) = self.decay.exact_band() {
                let reachable = v.iter().any(|(k, _)| ell.abs_diff(k) <= band);
                if !reachable {
                    continue;
                }
            }
            let mut acc = T::zero();
            for (k, value) in v.iter() {
                acc += self.entry(ell, k) * value;
            }
            if acc != T::zero() {
                out.set(ell, acc).expect("ell >= 2 by construction");
            }
        }
        let eta = self.decay.eta();
        let beyond = if let Some(band) = self.decay.exact_band() {
            if k_out >= k_top + band {
                T::zero()
            } else {
                self.geometric_tail(v, k_top, k_out)
            }
        } else if eta == T::infinity() {
            T::zero()
        } else {
            self.geometric_tail(v, k_top, k_out)
        };
        let tau = beyond + self.operator_norm_bound() * v.tail_bound();
        out.set_tail_bound(tau, k_out);
        out
    }

    fn geometric_tail(&self, v: &BsVector<T>, k_top: usize, k_out: usize) -> T {
        let eta = self.decay.eta();
        if eta == T::infinity() {
            return T::zero();
        }
        let mut weighted = T::zero();
        for (k, value) in v.iter() {
            weighted += (-eta * T::of_usize(k_top - k)).exp() * value.abs();
        }
        let d = T::of_usize(k_out + 1 - k_top);
        let q2 = (-(eta + eta)).exp();
        self.decay.amplitude() * weighted * (-eta * d).exp() / (T::one() - q2).sqrt()
    }

    /// Dual expansion of the right-hand side with a certified tail, built
    /// from whichever descriptor the problem carries.
    pub fn rhs_vector(&self) -> Result<BsVector<T>, OperatorError> {
        match self.problem.rhs().clone() {
            Rhs::Dual(f) => Ok(f),
            Rhs::ManufacturedFrom(u) => {
                let k_top = u.max_support().unwrap_or(MIN_INDEX);
                let margin = self.tail_margin(T::of(1e-13));
                Ok(self.apply(&u, k_top + margin))
            }
            Rhs::Function(f) => dual_expansion(move |x| f(x)),
        }
    }

    /// Index margin past which the decay envelope has dropped below `target`
    /// relatively.
    pub fn tail_margin(&self, target: T) -> usize {
        if let Some(band) = self.decay.exact_band() {
            return band;
        }
        let eta = self.decay.eta();
        if eta == T::infinity() {
            return 0;
        }
        let steps = (T::one() / target).ln() / eta;
        steps.ceil().to_f64_lossy().max(1.0) as usize
    }
}

/// Banded truncation `A_J`: entries with `|m - n| <= J`, zero elsewhere.
/// The spectral gap to the full operator obeys `psi_A(J) = C_A e^{-eta J}`.
pub struct TruncatedOperator<'a, T> {
    op: &'a StiffnessOperator<T>,
    band: usize,
}

impl<T: Scalar> TruncatedOperator<'_, T> {
    pub fn band(&self) -> usize {
        self.band
    }

    pub fn entry(&self, m: usize, n: usize) -> T {
        if m.abs_diff(n) <= self.band {
            self.op.entry(m, n)
        } else {
            T::zero()
        }
    }

    pub fn dense_block(&self, start: usize, size: usize) -> DenseMatrix<T> {
        assert!(start >= MIN_INDEX);
        DenseMatrix::from_fn(size, |i, j| self.entry(start + i, start + j))
    }
}

/// Expand a function into dual Babuska-Shen coefficients
/// `f_k = <f, eta_k> = (c_{k-2}/sqrt(k-3/2) - c_k/sqrt(k+1/2)) / sqrt(4k-2)`
/// where `c_j` are orthonormal Legendre coefficients, growing the expansion
/// until the trailing coefficients fall below 1e-14 relative.
pub fn dual_expansion<T: Scalar>(f: impl Fn(T) -> T) -> Result<BsVector<T>, OperatorError> {
    let mut n = 32usize;
    loop {
        let rule = gauss_legendre_rule::<T>(n + 16)?;
        let ortho = legendre_transform(&f, n, &rule, None)?;
        let mut out = BsVector::zero(Role::Dual);
        let mut scale = T::zero();
        let mut values = Vec::new();
        for k in MIN_INDEX..=n {
            let lo = ortho.coeff(k - 2) / (T::of_usize(k) - T::of(1.5)).sqrt();
            let hi = ortho.coeff(k) / (T::of_usize(k) + T::of(0.5)).sqrt();
            let fk = (lo - hi) / (T::of_usize(4 * k - 2)).sqrt();
            values.push((k, fk));
            scale = scale.max(fk.abs());
        }
        let trailing = values[values.len().saturating_sub(4)..]
            .iter()
            .fold(T::zero(), |acc, &(_, v)| acc.max(v.abs()));
        if trailing <= T::of(1e-14) * scale || n >= 512 {
            let floor = T::of(1e-15) * scale;
            for (k, fk) in values {
                if fk.abs() > floor {
                    out.set(k, fk)?;
                }
            }
            // geometric extrapolation of the dropped tail, with safety margin
            let tau = trailing * T::of(10.0) + floor * T::of_usize(n);
            out.set_tail_bound(tau, n);
            return Ok(out);
        }
        n *= 2;
    }
}

// ---------------------------------------------------------------------------
// Decay fit
// ---------------------------------------------------------------------------

/// Fit the exponential decay class of the operator on a leading probe block:
/// least squares of `log |a_{mn}|` against `|m - n|` for the rate, envelope
/// maxima for the amplitudes, block inversion for the inverse metadata.
pub fn fit_decay_class<T: Scalar>(
    op: &StiffnessOperator<T>,
    probe_size: usize,
) -> Result<DecayClass<T>, OperatorError> {
    if probe_size < 20 {
        return Err(OperatorError::ProbeTooSmall(probe_size));
    }
    let floor = T::of(ENTRY_FLOOR);
    let block = op.dense_block(MIN_INDEX, probe_size);
    let mut min_diag = T::infinity();
    let mut max_diag = T::zero();
    for i in 0..probe_size {
        let d = block.get(i, i);
        min_diag = min_diag.min(d);
        max_diag = max_diag.max(d.abs());
    }
    let mut samples: Vec<(T, T)> = Vec::new(); // (distance, ln |a|)
    for i in 0..probe_size {
        for j in (i + 1)..probe_size {
            let a = block.get(i, j).abs();
            if a > floor {
                samples.push((T::of_usize(j - i), a.ln()));
            }
        }
    }
    let exact_band = op.problem().exact_band();

    if samples.is_empty() {
        // diagonal operator
        return Ok(DecayClass {
            eta: T::infinity(),
            amplitude: max_diag,
            trunc_amplitude: T::zero(),
            min_diagonal: min_diag,
            inverse: Some(InverseDecay {
                eta: T::infinity(),
                amplitude: min_diag.recip(),
            }),
            exact_band: exact_band.or(Some(0)),
        });
    }
    if samples.len() < 5 {
        return Err(OperatorError::DecayFitFailed {
            usable: samples.len(),
        });
    }

    let distinct = {
        let mut ds: Vec<T> = samples.iter().map(|s| s.0).collect();
        ds.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        ds.dedup();
        ds.len()
    };
    if distinct < 2 {
        // a single populated off-diagonal (e.g. nu linear, sigma zero):
        // anchor the regression with the diagonal magnitudes at distance 0
        for i in 0..probe_size {
            let a = block.get(i, i).abs();
            if a > floor {
                samples.push((T::zero(), a.ln()));
            }
        }
    }

    let (slope, _intercept) = least_squares_line(&samples);
    let eta = -slope;
    if !(eta > T::zero()) {
        return Err(OperatorError::DecayFitFailed {
            usable: samples.len(),
        });
    }

    // envelope amplitude over the probed block (diagonal included), entries
    // below the numerical floor excluded so roundoff noise cannot inflate it
    let mut amplitude = max_diag;
    for i in 0..probe_size {
        for j in (i + 1)..probe_size {
            let a = block.get(i, j).abs();
            if a > floor {
                amplitude = amplitude.max(a * (eta * T::of_usize(j - i)).exp());
            }
        }
    }

    // empirical psi_A amplitude: spectral gaps of banded truncations
    let mut trunc_amplitude = T::zero();
    for band in 0..probe_size {
        let mut tail = block.clone();
        for i in 0..probe_size {
            for j in 0..probe_size {
                if i.abs_diff(j) <= band {
                    tail.set(i, j, T::zero());
                }
            }
        }
        let gap = spectral_norm_sym(&tail);
        if gap > floor {
            trunc_amplitude = trunc_amplitude.max(gap * (eta * T::of_usize(band)).exp());
        }
    }

    // The matrix belongs to D_e(eta') for every rate eta' <= eta once the
    // envelope amplitude is recomputed at that rate, and the invertibility
    // condition may hold for shallower pairs even when the steep fitted rate
    // forces a huge envelope (banded matrices with unevenly sized
    // off-diagonals do exactly that). Scan the family and keep the pair
    // yielding the strongest inverse rate.
    let envelope_at = |rate: T| -> T {
        let mut c = max_diag;
        for &(d, log_a) in &samples {
            if d > T::zero() {
                c = c.max(log_a.exp() * (rate * d).exp());
            }
        }
        c
    };
    let mut best_eta_bar: Option<T> = None;
    for step in 1..=40usize {
        let cand = eta * T::of_usize(step) / T::of(40.0);
        if let Some(eta_bar) = inverse_decay_rate(cand, envelope_at(cand), min_diag) {
            if best_eta_bar.is_none_or(|b| eta_bar > b) {
                best_eta_bar = Some(eta_bar);
            }
        }
    }
    let inverse = best_eta_bar.map(|eta_bar| {
        let n_inv = probe_size.max(60);
        let inv_block = op.dense_block(MIN_INDEX, n_inv);
        let inv = crate::linalg::CholeskyFactor::new(&inv_block)
            .and_then(|f| f.inverse())
            .expect("probe block of a coercive operator is SPD");
        // scan away from the truncation boundary where the finite section
        // approximates the true inverse
        let interior = 2 * n_inv / 3;
        let mut amp = T::zero();
        for i in 0..interior {
            for j in 0..interior {
                let a = inv.get(i, j).abs();
                if a > floor {
                    amp = amp.max(a * (eta_bar * T::of_usize(i.abs_diff(j))).exp());
                }
            }
        }
        InverseDecay {
            eta: eta_bar,
            amplitude: amp,
        }
    });

    Ok(DecayClass {
        eta,
        amplitude,
        trunc_amplitude,
        min_diagonal: min_diag,
        inverse,
        exact_band,
    })
}

/// Least-squares fit of an exponential rate to the coefficients of a series:
/// returns `(rate, amplitude)` with `|c_k| ~ amplitude * e^{-rate k}`, or
/// `None` with fewer than three usable magnitudes.
pub fn fit_coefficient_rate<T: Scalar>(series: &LegendreSeries<T>) -> Option<(T, T)> {
    let floor = T::of(ENTRY_FLOOR);
    let scale = series
        .coeffs()
        .iter()
        .fold(T::zero(), |acc, c| acc.max(c.abs()));
    let samples: Vec<(T, T)> = series
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() > floor * scale.max(T::one()))
        .map(|(k, c)| (T::of_usize(k), c.abs().ln()))
        .collect();
    if samples.len() < 3 {
        return None;
    }
    let (slope, intercept) = least_squares_line(&samples);
    Some((-slope, intercept.exp()))
}

fn least_squares_line<T: Scalar>(samples: &[(T, T)]) -> (T, T) {
    let n = T::of_usize(samples.len());
    let mut sx = T::zero();
    let mut sy = T::zero();
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for &(x, y) in samples {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{eval_legendre_with_derivative, legendre_row};
    use approx::assert_abs_diff_eq;

    fn constant_problem(nu: f64, sigma: Option<f64>) -> ProblemSpec<f64> {
        let nu = LegendreSeries::constant(nu);
        let sigma = match sigma {
            Some(s) => LegendreSeries::constant(s),
            None => LegendreSeries::zero(),
        };
        ProblemSpec::new(nu, sigma, Rhs::Dual(BsVector::zero(Role::Dual))).unwrap()
    }

    /// Quadrature oracle for a(eta_m, eta_n): integrates
    /// nu * D eta_m * D eta_n + sigma * eta_m * eta_n with a generous rule.
    fn entry_by_quadrature(
        m: usize,
        n: usize,
        nu: &LegendreSeries<f64>,
        sigma: &LegendreSeries<f64>,
    ) -> f64 {
        let order = m + n + 40;
        let rule = gauss_legendre_rule::<f64>(order).unwrap();
        let mut acc = 0.0;
        for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
            let row = legendre_row(m.max(n), x);
            let eta = |k: usize| (row[k - 2] - row[k]) / ((4 * k - 2) as f64).sqrt();
            let deta = |k: usize| {
                let (_, d_lo) = eval_legendre_with_derivative(k - 2, x);
                let (_, d_hi) = eval_legendre_with_derivative(k, x);
                (d_lo - d_hi) / ((4 * k - 2) as f64).sqrt()
            };
            acc += w * (nu.eval(x) * deta(m) * deta(n) + sigma.eval(x) * eta(m) * eta(n));
        }
        acc
    }

    #[test]
    fn diffusion_entries_for_unit_nu_are_kronecker() {
        let nu = LegendreSeries::constant(1.0);
        assert_abs_diff_eq!(entry_diffusion(5, 5, &nu), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(entry_diffusion(5, 7, &nu), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(entry_diffusion(2, 2, &nu), 1.0, epsilon = 1e-13);
    }

    #[test]
    fn diffusion_entries_for_linear_nu_are_tridiagonal() {
        // nu(x) = x makes m+n-2-2r odd, which forces |m-n| = 1
        let nu = LegendreSeries::new(vec![0.0, 1.0], Normalization::Classical);
        for m in 2..=12usize {
            for n in 2..=12usize {
                let value: f64 = entry_diffusion(m, n, &nu);
                if m.abs_diff(n) != 1 {
                    assert!(
                        value.abs() < 1e-14,
                        "entry ({m},{n}) = {value} should vanish"
                    );
                }
            }
        }
    }

    #[test]
    fn reaction_entries_for_unit_sigma_match_mass_matrix() {
        let sigma = LegendreSeries::constant(1.0);
        // closed-form mass values at k = 2
        assert_abs_diff_eq!(entry_reaction(2, 2, &sigma), 0.4, epsilon = 1e-14);
        assert_abs_diff_eq!(
            entry_reaction(2, 4, &sigma),
            -1.0 / (5.0 * 21.0f64.sqrt()),
            epsilon = 1e-14
        );
        // pentadiagonal: |m-n| not in {0, 2} vanishes
        for m in 2..=10usize {
            for n in 2..=10usize {
                if m.abs_diff(n) != 0 && m.abs_diff(n) != 2 {
                    assert!(entry_reaction(m, n, &sigma).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn entries_match_quadrature_oracle() {
        // variable coefficients on a moderate sweep; the full 60x60 sweep on
        // the catalog problems runs in the acceptance suite
        let nu = LegendreSeries::new(vec![2.0, 1.0], Normalization::Classical);
        let sigma = LegendreSeries::new(vec![1.0, 0.5], Normalization::Classical);
        for m in (2..=30usize).step_by(3) {
            for n in (2..=30usize).step_by(4) {
                let formula = entry_diffusion(m, n, &nu) + entry_reaction(m, n, &sigma);
                let quad = entry_by_quadrature(m, n, &nu, &sigma);
                assert!(
                    (formula - quad).abs() < 1e-10,
                    "entry ({m},{n}): formula {formula} vs quadrature {quad}"
                );
            }
        }
    }

    #[test]
    fn b_and_c_coefficients_stay_bounded() {
        // moderate sweep; the 200x200 sweep is an acceptance criterion
        for m in 0..=60usize {
            for n in 0..=60usize {
                for r in 0..=m.min(n) {
                    let b: f64 = b_coeff(m, n, r).unwrap();
                    assert!(b <= 10.0, "B^{r}_{m},{n} = {b}");
                }
            }
        }
        for m in 2..=60usize {
            for n in 2..=60usize {
                let pref = 1.0 / (((2 * m - 1) * (2 * n - 1)) as f64).sqrt();
                for (k, j) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
                    for r in 0..=(m - k).min(n - j) {
                        let c: f64 = c_coeff(m - k, n - j, r).unwrap();
                        assert!(pref * c <= 10.0, "scaled C at ({m},{n},{r},{k},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn problem_spec_validates_bounds() {
        let spec = constant_problem(2.0, Some(0.5));
        assert_abs_diff_eq!(spec.alpha_lower(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spec.alpha_upper(), 2.0 + POINCARE_SQ * 0.5, epsilon = 1e-10);
        assert_eq!(spec.exact_band(), Some(2));

        let bad = ProblemSpec::new(
            LegendreSeries::new(vec![0.0, 1.0], Normalization::Classical),
            LegendreSeries::zero(),
            Rhs::Dual(BsVector::zero(Role::Dual)),
        );
        assert!(matches!(bad, Err(OperatorError::NonPositiveDiffusion(_))));

        let bad = ProblemSpec::new(
            LegendreSeries::constant(1.0),
            LegendreSeries::constant(-1.0),
            Rhs::Dual(BsVector::zero(Role::Dual)),
        );
        assert!(matches!(bad, Err(OperatorError::NegativeReaction(_))));
    }

    #[test]
    fn sandwich_constant_covers_reaction_term() {
        // |||eta_2|||^2 = 1 + 2/5 for nu = sigma = 1, which exceeds
        // max(nu, sigma) = 1; the Poincare-corrected constant covers it.
        let spec = constant_problem(1.0, Some(1.0));
        assert!(spec.alpha_upper() >= 1.4);
        assert!(spec.alpha_upper() < 1.41);
    }

    #[test]
    fn identity_operator_reports_diagonal_sentinel() {
        let op = StiffnessOperator::new(constant_problem(1.0, None)).unwrap();
        let decay = op.decay();
        assert_eq!(decay.eta(), f64::INFINITY);
        assert_eq!(decay.exact_band(), Some(0));
        assert!(decay.is_diagonal());
        assert_eq!(decay.trunc_amplitude(), 0.0);
        let inv = decay.inverse().unwrap();
        assert_eq!(inv.eta, f64::INFINITY);
        assert_abs_diff_eq!(inv.amplitude, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn inverse_decay_rate_matches_quadratic_oracle() {
        // the oracle solves z^2 - b z + 1 = 0 by the quadratic formula
        let eta = 1.0f64;
        let c = 0.5;
        let b = ((2.0 * eta).exp() + 2.0 * c + 1.0) / (eta.exp() * (c + 1.0));
        let z_oracle = (b - (b * b - 4.0).sqrt()) / 2.0;
        assert_abs_diff_eq!(z_oracle, 0.58073, epsilon = 5e-5);
        let eta_bar = inverse_decay_rate(eta, c, 1.0).unwrap();
        assert_abs_diff_eq!(eta_bar, -z_oracle.ln(), epsilon = 1e-14);
        assert_abs_diff_eq!(eta_bar, 0.5434, epsilon = 1e-4);
        // condition violated: no rate
        assert!(inverse_decay_rate(1.0, 0.9 * (1.0f64.exp() - 1.0) / 2.0, 0.5).is_none());
    }

    fn analytic_nu_problem() -> ProblemSpec<f64> {
        // nu_k = e^{-k}: analytic coefficient, strictly positive since
        // sum_{k>=1} e^{-k} < 1
        let coeffs: Vec<f64> = (0..30).map(|k| (-(k as f64)).exp()).collect();
        let nu = LegendreSeries::new(coeffs, Normalization::Classical);
        ProblemSpec::new(
            nu,
            LegendreSeries::zero(),
            Rhs::Dual(BsVector::zero(Role::Dual)),
        )
        .unwrap()
    }

    #[test]
    fn fitted_decay_rate_tracks_coefficient_rate() {
        let op = StiffnessOperator::new(analytic_nu_problem()).unwrap();
        let eta = op.decay().eta();
        assert!(
            eta >= 0.9,
            "decay proposition predicts rate ~1 for nu_k = e^-k, fitted {eta}"
        );
        assert!(op.decay().amplitude() > 0.0);
    }

    #[test]
    fn reaction_decay_rate_tracks_sigma_rate() {
        // sigma_k = e^{-k} with nu = 1: off-diagonals come from the reaction
        // part alone and must decay at the coefficient rate as well
        let coeffs: Vec<f64> = (0..30).map(|k| (-(k as f64)).exp()).collect();
        let sigma = LegendreSeries::new(coeffs, Normalization::Classical);
        let spec = ProblemSpec::new(
            LegendreSeries::constant(1.0),
            sigma,
            Rhs::Dual(BsVector::zero(Role::Dual)),
        )
        .unwrap();
        let op = StiffnessOperator::new(spec).unwrap();
        assert!(
            op.decay().eta() >= 0.9,
            "reaction decay rate {} below 0.9",
            op.decay().eta()
        );
    }

    #[test]
    fn truncation_gap_decays_exponentially() {
        let op = StiffnessOperator::new(analytic_nu_problem()).unwrap();
        let eta = op.decay().eta();
        let block = op.dense_block(2, 30);
        let mut rates = Vec::new();
        let mut prev: Option<f64> = None;
        for band in 0..12usize {
            let gap = spectral_norm_sym(&block.sub(&op.truncated(band).dense_block(2, 30)));
            if let Some(p) = prev {
                if gap > 1e-13 {
                    rates.push((p / gap).ln());
                }
            }
            prev = Some(gap);
            // the psi_A estimate must dominate the measured gap
            assert!(
                gap <= op.decay().psi(band) * (1.0 + 1e-9),
                "psi underestimates truncation error at J={band}"
            );
        }
        let mean_rate: f64 = rates.iter().sum::<f64>() / rates.len() as f64;
        assert!(
            mean_rate >= 0.9 * eta,
            "truncation decay rate {mean_rate} below 0.9 * {eta}"
        );
    }

    #[test]
    fn truncation_views() {
        let op = StiffnessOperator::new(constant_problem(1.0, Some(1.0))).unwrap();
        // J = 0 keeps only the diagonal
        let t0 = op.truncated(0);
        assert_eq!(t0.entry(4, 6), 0.0);
        assert_abs_diff_eq!(t0.entry(4, 4), op.entry(4, 4), epsilon = 1e-15);
        // the identity stays the identity under any truncation
        let id = StiffnessOperator::new(constant_problem(1.0, None)).unwrap();
        let t3 = id.truncated(3);
        assert_eq!(t3.entry(2, 2), 1.0);
        assert_eq!(t3.entry(2, 4), 0.0);
    }

    #[test]
    fn apply_on_identity_and_mass_shift() {
        let id = StiffnessOperator::new(constant_problem(1.0, None)).unwrap();
        let v = BsVector::from_pairs(Role::Primal, [(2, 1.5), (5, -0.5)]).unwrap();
        let av = id.apply(&v, 10);
        assert_abs_diff_eq!(av.get(2), 1.5, epsilon = 1e-14);
        assert_abs_diff_eq!(av.get(5), -0.5, epsilon = 1e-14);
        assert_eq!(av.tail_bound(), 0.0);

        // nu = sigma = 1: (A e_2)_2 = 1 + 2/5
        let op = StiffnessOperator::new(constant_problem(1.0, Some(1.0))).unwrap();
        let e2 = BsVector::unit(Role::Primal, 2).unwrap();
        let ae2 = op.apply(&e2, 10);
        assert_abs_diff_eq!(ae2.get(2), 1.4, epsilon = 1e-13);
    }

    #[test]
    fn apply_matches_dense_block_multiply() {
        let op = StiffnessOperator::new(analytic_nu_problem()).unwrap();
        let v = BsVector::from_pairs(Role::Primal, [(2, 0.7), (3, -1.2), (7, 0.05), (11, 2.0)])
            .unwrap();
        let k_out = 40;
        let av = op.apply(&v, k_out);
        let block = op.dense_block(2, k_out - 1);
        let mut dense_v = vec![0.0; k_out - 1];
        for (k, value) in v.iter() {
            dense_v[k - 2] = value;
        }
        let dense_av = block.mul_vec(&dense_v);
        for ell in 2..=k_out {
            assert!(
                (av.get(ell) - dense_av[ell - 2]).abs() < 1e-12,
                "apply mismatch at {ell}"
            );
        }
        // certified tail must dominate the actual omitted mass
        let big = op.dense_block(2, 120);
        let mut long_v = vec![0.0; 120];
        for (k, value) in v.iter() {
            long_v[k - 2] = value;
        }
        let full = big.mul_vec(&long_v);
        let omitted: f64 = full[(k_out + 1 - 2)..]
            .iter()
            .map(|&x| x * x)
            .sum::<f64>()
            .sqrt();
        assert!(av.tail_bound() >= omitted);
    }

    #[test]
    fn operator_symmetry_and_coercivity_on_blocks() {
        let nu = LegendreSeries::new(vec![2.0, 1.0], Normalization::Classical);
        let sigma = LegendreSeries::new(vec![1.0, 0.5], Normalization::Classical);
        let spec = ProblemSpec::new(nu, sigma, Rhs::Dual(BsVector::zero(Role::Dual))).unwrap();
        let alpha = spec.alpha_lower();
        let op = StiffnessOperator::new(spec).unwrap();
        for size in [5usize, 15, 40] {
            let block = op.dense_block(2, size);
            assert!(block.asymmetry() < 1e-12);
            let lambda_min = crate::linalg::min_eigenvalue_spd(&block).unwrap();
            assert!(
                lambda_min >= alpha - 1e-10,
                "block {size}: lambda_min {lambda_min} below alpha_* {alpha}"
            );
        }
    }

    #[test]
    fn coefficient_rate_fit_recovers_synthetic_rate() {
        let coeffs: Vec<f64> = (0..25).map(|k| 3.0 * (-0.8 * k as f64).exp()).collect();
        let series = LegendreSeries::new(coeffs, Normalization::Classical);
        let (rate, amp) = fit_coefficient_rate(&series).unwrap();
        assert_abs_diff_eq!(rate, 0.8, epsilon = 1e-6);
        assert_abs_diff_eq!(amp, 3.0, epsilon = 1e-5);
    }

    #[test]
    fn ingestion_reaches_tolerance_for_analytic_function() {
        let spec = ProblemSpec::from_functions(
            |x: f64| (2.0 - x).recip(),
            None::<fn(f64) -> f64>,
            Rhs::Dual(BsVector::zero(Role::Dual)),
        )
        .unwrap();
        assert!(spec.warnings().is_empty());
        assert!(spec.exact_band().is_none());
        // classical coefficients of 1/(2-x) are (2k+1) Q_k(2); check k = 0, 1
        // against the closed forms Q_0(2) = ln(3)/2, Q_1(2) = ln(3) - 1
        let q0 = 3.0f64.ln() / 2.0;
        let q1 = 3.0f64.ln() - 1.0;
        assert_abs_diff_eq!(spec.nu().coeff(0), q0, epsilon = 1e-11);
        assert_abs_diff_eq!(spec.nu().coeff(1), 3.0 * q1, epsilon = 1e-11);
        // and the fitted rate is near log(2 + sqrt(3))
        let (rate, _) = fit_coefficient_rate(spec.nu()).unwrap();
        assert!(
            (rate - (2.0 + 3.0f64.sqrt()).ln()).abs() < 0.08,
            "rate {rate}"
        );
    }

    #[test]
    fn dual_expansion_matches_direct_quadrature() {
        // f(x) = sin(pi x): f_k = int f eta_k by a big independent rule
        let f = |x: f64| (std::f64::consts::PI * x).sin();
        let fv = dual_expansion(f).unwrap();
        let rule = gauss_legendre_rule::<f64>(80).unwrap();
        for k in [2usize, 3, 5, 8] {
            let mut acc = 0.0;
            for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
                let row = legendre_row(k, x);
                acc += w * f(x) * (row[k - 2] - row[k]) / ((4 * k - 2) as f64).sqrt();
            }
            assert!(
                (fv.get(k) - acc).abs() < 1e-12,
                "dual coefficient {k}: {} vs {acc}",
                fv.get(k)
            );
        }
    }

    #[test]
    fn entry_cache_is_consistent_under_concurrent_use() {
        // concurrent readers may duplicate work but must never observe a
        // torn or inconsistent entry
        let op = std::sync::Arc::new(StiffnessOperator::new(analytic_nu_problem()).unwrap());
        // same unordered-pair normalization the cache uses
        let reference: Vec<f64> = (2..40usize)
            .flat_map(|m| (2..40usize).map(move |n| (m, n)))
            .map(|(m, n)| entry_diffusion(m.min(n), m.max(n), op.problem().nu()))
            .collect();
        let handles: Vec<_> = (0..4)
            .map(|t| {
                let op = std::sync::Arc::clone(&op);
                std::thread::spawn(move || {
                    let mut values = Vec::new();
                    for m in 2..40usize {
                        for n in 2..40usize {
                            // stagger the access order across threads
                            let (m, n) = if t % 2 == 0 { (m, n) } else { (n, m) };
                            values.push(((m, n), op.entry(m, n)));
                        }
                    }
                    values
                })
            })
            .collect();
        for handle in handles {
            for ((m, n), value) in handle.join().unwrap() {
                let expected = reference[(m - 2) * 38 + (n - 2)];
                assert_eq!(value, expected, "entry ({m},{n}) torn under concurrency");
            }
        }
    }
}
