//! Legendre polynomials, Gauss-Legendre quadrature and the Adams
//! product-linearization coefficients.
//!
//! Conventions on the interval I = (-1, 1):
//!
//! * `L_k` is the classical Legendre polynomial, `L_k(1) = 1`,
//!   `int L_k L_m = 2/(2k+1) delta_km`.
//! * `phi_k = sqrt(k + 1/2) L_k` is the orthonormal Legendre basis of L2(I).
//!
//! The product of two Legendre polynomials linearizes as
//! `L_m L_n = sum_r A^r_{m,n} L_{m+n-2r}`, `0 <= r <= min(m,n)`, with
//! coefficients built from `A_m = (2m)!/(2^m (m!)^2)`. Since `A_m` grows like
//! `2^m / sqrt(pi m)` everything factorial-like is kept in log space and
//! exponentiated only when a coefficient is finally assembled.

use std::sync::RwLock;

use thiserror::Error;

use crate::scalar::Scalar;

/// Errors from the polynomial/quadrature layer.
#[derive(Debug, Error, PartialEq)]
pub enum LegendreError {
    #[error("product coefficient index r={r} outside [0, min({m}, {n})]")]
    ProductIndexOutOfRange { m: usize, n: usize, r: usize },

    #[error(
        "rule of order {order} is exact only to degree {max_degree}, \
         but a polynomial integrand of degree {required} was declared"
    )]
    RuleCapacityExceeded {
        order: usize,
        max_degree: usize,
        required: usize,
    },

    #[error("quadrature order must be at least 1")]
    EmptyRule,
}

/// Evaluate the classical Legendre polynomial `L_k(x)` by the three-term
/// recurrence `(k+1) L_{k+1} = (2k+1) x L_k - k L_{k-1}`.
pub fn eval_legendre<T: Scalar>(k: usize, x: T) -> T {
    if k == 0 {
        return T::one();
    }
    if k == 1 {
        return x;
    }
    let mut prev = T::one();
    let mut curr = x;
    for j in 1..k {
        let a = T::of_usize(2 * j + 1);
        let b = T::of_usize(j);
        let c = T::of_usize(j + 1);
        let next = (a * x * curr - b * prev) / c;
        prev = curr;
        curr = next;
    }
    curr
}

/// Evaluate `L_k(x)` and its derivative `L_k'(x)` in one recurrence pass.
///
/// Away from the endpoints the derivative uses
/// `L_k'(x) = k (x L_k - L_{k-1}) / (x^2 - 1)`; at `x = +-1` the closed forms
/// `L_k'(1) = k(k+1)/2`, `L_k'(-1) = (-1)^{k+1} k(k+1)/2` apply.
pub fn eval_legendre_with_derivative<T: Scalar>(k: usize, x: T) -> (T, T) {
    if k == 0 {
        return (T::one(), T::zero());
    }
    let mut prev = T::one();
    let mut curr = x;
    for j in 1..k {
        let a = T::of_usize(2 * j + 1);
        let b = T::of_usize(j);
        let c = T::of_usize(j + 1);
        let next = (a * x * curr - b * prev) / c;
        prev = curr;
        curr = next;
    }
    let one = T::one();
    let boundary = T::of_usize(k * (k + 1)) / T::of(2.0);
    let deriv = if (x - one).abs() < T::epsilon() {
        boundary
    } else if (x + one).abs() < T::epsilon() {
        if k.is_multiple_of(2) {
            -boundary
        } else {
            boundary
        }
    } else {
        T::of_usize(k) * (x * curr - prev) / (x * x - one)
    };
    (curr, deriv)
}

/// Evaluate the orthonormal basis element `phi_k(x) = sqrt(k+1/2) L_k(x)`.
pub fn eval_phi<T: Scalar>(k: usize, x: T) -> T {
    (T::of_usize(k) + T::of(0.5)).sqrt() * eval_legendre(k, x)
}

/// Tabulate `L_0(x) .. L_kmax(x)` in one recurrence sweep.
pub fn legendre_row<T: Scalar>(k_max: usize, x: T) -> Vec<T> {
    let mut row = Vec::with_capacity(k_max + 1);
    row.push(T::one());
    if k_max == 0 {
        return row;
    }
    row.push(x);
    for j in 1..k_max {
        let a = T::of_usize(2 * j + 1);
        let b = T::of_usize(j);
        let c = T::of_usize(j + 1);
        let next = (a * x * row[j] - b * row[j - 1]) / c;
        row.push(next);
    }
    row
}

// ---------------------------------------------------------------------------
// Log-space Adams coefficients
// ---------------------------------------------------------------------------

// Cumulative table of ln A_m with Kahan compensation carried across
// extensions, so the accumulated rounding stays at a few ulps even for
// m in the thousands. Built in f64 and converted on use.
static LN_ADAMS: RwLock<(Vec<f64>, f64)> = RwLock::new((Vec::new(), 0.0));

fn ln_adams_f64(m: usize) -> f64 {
    {
        let guard = LN_ADAMS.read().expect("ln-A table poisoned");
        if m < guard.0.len() {
            return guard.0[m];
        }
    }
    let mut guard = LN_ADAMS.write().expect("ln-A table poisoned");
    let (table, comp) = &mut *guard;
    if table.is_empty() {
        table.push(0.0); // A_0 = 1
    }
    // A_m = A_{m-1} (2m-1)/m, accumulated with Kahan summation.
    while table.len() <= m {
        let j = table.len();
        let term = ((2 * j - 1) as f64 / j as f64).ln();
        let sum = table[j - 1];
        let y = term - *comp;
        let t = sum + y;
        *comp = (t - sum) - y;
        table.push(t);
    }
    table[m]
}

/// Natural log of `A_m = (2m)!/(2^m (m!)^2)`; `A_0 = 1` exactly.
pub fn ln_adams_a<T: Scalar>(m: usize) -> T {
    T::of(ln_adams_f64(m))
}

/// The value `A_m`, exponentiated from the log table. Overflows to infinity
/// for m beyond roughly 1000 at f64; use [`ln_adams_a`] at that scale.
pub fn adams_a<T: Scalar>(m: usize) -> T {
    ln_adams_a::<T>(m).exp()
}

/// Linearization coefficient `A^r_{m,n}` of `L_m L_n = sum_r A^r L_{m+n-2r}`:
///
/// `A^r_{m,n} = (A_{m-r} A_r A_{n-r} / A_{m+n-r}) * (2m+2n-4r+1)/(2m+2n-2r+1)`
pub fn adams_product_coeff<T: Scalar>(m: usize, n: usize, r: usize) -> Result<T, LegendreError> {
    if r > m.min(n) {
        return Err(LegendreError::ProductIndexOutOfRange { m, n, r });
    }
    let log_part =
        ln_adams_f64(m - r) + ln_adams_f64(r) + ln_adams_f64(n - r) - ln_adams_f64(m + n - r);
    let ratio = (2 * m + 2 * n - 4 * r + 1) as f64 / (2 * m + 2 * n - 2 * r + 1) as f64;
    Ok(T::of(log_part.exp() * ratio))
}

/// Stiffness linearization coefficient
/// `B^r_{m,n} = sqrt((2m+1)(2n+1)) / (2m+2n-4r+1) * A^r_{m,n}`.
pub fn b_coeff<T: Scalar>(m: usize, n: usize, r: usize) -> Result<T, LegendreError> {
    if r > m.min(n) {
        return Err(LegendreError::ProductIndexOutOfRange { m, n, r });
    }
    let log_part =
        ln_adams_f64(m - r) + ln_adams_f64(r) + ln_adams_f64(n - r) - ln_adams_f64(m + n - r);
    let scale = (((2 * m + 1) * (2 * n + 1)) as f64).sqrt() / (2 * m + 2 * n - 2 * r + 1) as f64;
    Ok(T::of(log_part.exp() * scale))
}

/// Mass linearization coefficient `C^r_{m,n} = A^r_{m,n} / (2m+2n-4r+1)`.
pub fn c_coeff<T: Scalar>(m: usize, n: usize, r: usize) -> Result<T, LegendreError> {
    if r > m.min(n) {
        return Err(LegendreError::ProductIndexOutOfRange { m, n, r });
    }
    let log_part =
        ln_adams_f64(m - r) + ln_adams_f64(r) + ln_adams_f64(n - r) - ln_adams_f64(m + n - r);
    let scale = 1.0 / (2 * m + 2 * n - 2 * r + 1) as f64;
    Ok(T::of(log_part.exp() * scale))
}

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

/// An n-point Gauss-Legendre rule on (-1, 1), exact on polynomials of degree
/// `<= 2n - 1`. Nodes are the roots of `L_n`, strictly increasing and
/// symmetric about 0; weights are positive and sum to 2.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    order: usize,
}

impl<T: Scalar> QuadratureRule<T> {
    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Largest polynomial degree integrated exactly.
    pub fn max_exact_degree(&self) -> usize {
        2 * self.order - 1
    }

    /// Apply the rule to `f`.
    pub fn integrate(&self, mut f: impl FnMut(T) -> T) -> T {
        let mut acc = T::zero();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(x);
        }
        acc
    }
}

/// Build the n-point Gauss-Legendre rule.
///
/// Roots of `L_n` are found by Newton iteration from the Chebyshev-type
/// guesses `cos(pi (i + 3/4) / (n + 1/2))`, then mirrored so the node set is
/// symmetric to the last bit. Weights are `2 / ((1 - x^2) L_n'(x)^2)`.
pub fn gauss_legendre_rule<T: Scalar>(n: usize) -> Result<QuadratureRule<T>, LegendreError> {
    if n == 0 {
        return Err(LegendreError::EmptyRule);
    }
    let tol = T::of(1e-15).max(T::epsilon() + T::epsilon());
    let pi = T::of(std::f64::consts::PI);
    let half = n / 2;
    let mut nodes = vec![T::zero(); n];
    let mut weights = vec![T::zero(); n];

    for i in 0..half {
        // i-th root counted from x = +1 downwards.
        let guess_angle = pi * (T::of_usize(i) + T::of(0.75)) / (T::of_usize(n) + T::of(0.5));
        let mut x = guess_angle.cos();
        for _ in 0..100 {
            let (value, d) = eval_legendre_with_derivative(n, x);
            let step = value / d;
            x -= step;
            if step.abs() <= tol {
                break;
            }
        }
        let (_, deriv) = eval_legendre_with_derivative(n, x);
        let w = T::of(2.0) / ((T::one() - x * x) * deriv * deriv);
        // store mirrored pair
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[n - 1 - i] = w;
        weights[i] = w;
    }
    if n % 2 == 1 {
        let x = T::zero();
        let (_, deriv) = eval_legendre_with_derivative(n, x);
        nodes[half] = x;
        weights[half] = T::of(2.0) / (deriv * deriv);
    }
    Ok(QuadratureRule {
        nodes,
        weights,
        order: n,
    })
}

// ---------------------------------------------------------------------------
// Legendre series
// ---------------------------------------------------------------------------

/// Which basis the stored coefficients refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Normalization {
    /// Coefficients of `phi_k = sqrt(k+1/2) L_k`; the L2 norm of the function
    /// is the Euclidean norm of the coefficients.
    Orthonormal,
    /// Coefficients of the classical `L_k`, as used for the PDE coefficients
    /// `nu` and `sigma`.
    Classical,
}

/// A finite Legendre expansion.
///
/// The normalization flag is carried explicitly: the operator-assembly
/// formulas consume classical `L_k` coefficients while everything Parseval
/// related runs in the orthonormal basis, and mixing the two silently is the
/// easiest mistake to make in this domain.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreSeries<T> {
    coeffs: Vec<T>,
    normalization: Normalization,
    /// Absolute threshold below which trailing coefficients were dropped
    /// (zero when nothing was truncated).
    tail_threshold: T,
    /// True when the coefficients are exact for the represented function
    /// (polynomial data integrated by a rule of sufficient order).
    exact: bool,
}

impl<T: Scalar> LegendreSeries<T> {
    pub fn new(coeffs: Vec<T>, normalization: Normalization) -> Self {
        Self {
            coeffs,
            normalization,
            tail_threshold: T::zero(),
            exact: true,
        }
    }

    /// Constant series `c` (same coefficients in either normalization scale
    /// differently; this stores the classical representation `c * L_0`).
    pub fn constant(c: T) -> Self {
        Self::new(vec![c], Normalization::Classical)
    }

    /// The zero series in classical normalization.
    pub fn zero() -> Self {
        Self::new(Vec::new(), Normalization::Classical)
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).copied().unwrap_or_else(T::zero)
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn tail_threshold(&self) -> T {
        self.tail_threshold
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub(crate) fn set_exact(&mut self, exact: bool) {
        self.exact = exact;
    }

    /// Degree of the highest stored coefficient (None for the zero series).
    pub fn degree(&self) -> Option<usize> {
        if self.coeffs.is_empty() {
            None
        } else {
            Some(self.coeffs.len() - 1)
        }
    }

    /// Drop trailing coefficients with `|c_k| <= threshold` and record the
    /// threshold.
    pub fn truncate_below(&mut self, threshold: T) {
        let mut len = self.coeffs.len();
        while len > 0 && self.coeffs[len - 1].abs() <= threshold {
            len -= 1;
        }
        if len < self.coeffs.len() {
            self.coeffs.truncate(len);
            self.tail_threshold = self.tail_threshold.max(threshold);
        }
    }

    /// Euclidean norm of the stored coefficients. In the orthonormal basis
    /// this equals the L2(I) norm of the represented function.
    pub fn coeff_norm(&self) -> T {
        self.coeffs
            .iter()
            .fold(T::zero(), |acc, &c| acc + c * c)
            .sqrt()
    }

    /// Convert to orthonormal coefficients (`c_k -> c_k / sqrt(k+1/2)` is the
    /// classical-to-orthonormal direction: `c L_k = c / sqrt(k+1/2) phi_k`).
    pub fn to_orthonormal(&self) -> Self {
        match self.normalization {
            Normalization::Orthonormal => self.clone(),
            Normalization::Classical => {
                let coeffs = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c / (T::of_usize(k) + T::of(0.5)).sqrt())
                    .collect();
                Self {
                    coeffs,
                    normalization: Normalization::Orthonormal,
                    tail_threshold: self.tail_threshold,
                    exact: self.exact,
                }
            }
        }
    }

    /// Convert to classical coefficients (`c phi_k = c sqrt(k+1/2) L_k`).
    pub fn to_classical(&self) -> Self {
        match self.normalization {
            Normalization::Classical => self.clone(),
            Normalization::Orthonormal => {
                let coeffs = self
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, &c)| c * (T::of_usize(k) + T::of(0.5)).sqrt())
                    .collect();
                Self {
                    coeffs,
                    normalization: Normalization::Classical,
                    tail_threshold: self.tail_threshold,
                    exact: self.exact,
                }
            }
        }
    }

    /// Evaluate the series at `x` with one recurrence sweep.
    pub fn eval(&self, x: T) -> T {
        if self.coeffs.is_empty() {
            return T::zero();
        }
        let mut acc = T::zero();
        let mut prev = T::one();
        let mut curr = x;
        for (k, &c) in self.coeffs.iter().enumerate() {
            let basis = match k {
                0 => T::one(),
                1 => x,
                _ => {
                    let a = T::of_usize(2 * k - 1);
                    let b = T::of_usize(k - 1);
                    let d = T::of_usize(k);
                    let next = (a * x * curr - b * prev) / d;
                    prev = curr;
                    curr = next;
                    next
                }
            };
            let scaled = match self.normalization {
                Normalization::Classical => c,
                Normalization::Orthonormal => c * (T::of_usize(k) + T::of(0.5)).sqrt(),
            };
            acc += scaled * basis;
        }
        acc
    }
}

/// Expand `f` in the orthonormal Legendre basis by quadrature:
/// `c_k = <f, phi_k>` for `k <= n_max`.
///
/// `poly_degree` declares `f` to be a polynomial of that degree; then the
/// rule must integrate degree `n_max + poly_degree` exactly or the call is
/// rejected. Without a declared degree the result is flagged approximate.
pub fn legendre_transform<T: Scalar>(
    f: impl Fn(T) -> T,
    n_max: usize,
    rule: &QuadratureRule<T>,
    poly_degree: Option<usize>,
) -> Result<LegendreSeries<T>, LegendreError> {
    if let Some(degree) = poly_degree {
        let required = n_max + degree;
        if required > rule.max_exact_degree() {
            return Err(LegendreError::RuleCapacityExceeded {
                order: rule.order(),
                max_degree: rule.max_exact_degree(),
                required,
            });
        }
    }
    let mut coeffs = vec![T::zero(); n_max + 1];
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        let fx = w * f(x);
        let row = legendre_row(n_max, x);
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c += fx * row[k];
        }
    }
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c *= (T::of_usize(k) + T::of(0.5)).sqrt();
    }
    let mut series = LegendreSeries::new(coeffs, Normalization::Orthonormal);
    series.set_exact(poly_degree.is_some());
    Ok(series)
}
