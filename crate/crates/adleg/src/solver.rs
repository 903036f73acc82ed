//! Restricted Galerkin solves and residual evaluation.
//!
//! `gal` solves `A_Lambda u_Lambda = f_Lambda` by a dense Cholesky
//! factorization (desk scale keeps every restriction small, and a direct
//! solve removes solver tolerance as a confounder in the contraction
//! measurements). `res` evaluates `r = f - A u_Lambda` out to a cutoff with a
//! certified tail bound; Galerkin orthogonality makes the entries indexed in
//! `Lambda` vanish up to the algebraic solve residual.
//!
//! The residual norm drives everything downstream through the equivalence
//! `||r||/a^* <= ||u - u_Lambda|| <= ||r||/a_*` and its energy-norm variant
//! with square roots.

use thiserror::Error;

use crate::basis::{BasisError, BsVector, IndexSet, Role};
use crate::linalg::{CholeskyFactor, LinalgError};
use crate::operator::{OperatorError, StiffnessOperator};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("singular restriction: {0}")]
    SingularRestriction(LinalgError),

    #[error(
        "insufficient residual cutoff k_max={k_max}: tail bound {tail} \
         exceeds 10% of the stored residual norm {stored}"
    )]
    InsufficientKMax {
        k_max: usize,
        tail: f64,
        stored: f64,
    },

    #[error("negative quadratic form v^T A v = {0}; assembly corrupted")]
    NegativeQuadraticForm(f64),

    #[error(transparent)]
    Basis(#[from] BasisError),

    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Solution of the Galerkin problem restricted to an index set.
#[derive(Debug, Clone)]
pub struct GalerkinSolution<T> {
    lambda: IndexSet,
    u: BsVector<T>,
    solve_residual: T,
}

impl<T: Scalar> GalerkinSolution<T> {
    pub fn lambda(&self) -> &IndexSet {
        &self.lambda
    }

    pub fn u(&self) -> &BsVector<T> {
        &self.u
    }

    /// Euclidean norm of the algebraic residual `A_Lambda u - f_Lambda` of
    /// the linear solve (not the PDE residual).
    pub fn solve_residual(&self) -> T {
        self.solve_residual
    }
}

/// Solve the restricted Galerkin system on `lambda`.
///
/// One step of iterative refinement reuses the factorization and keeps the
/// algebraic residual at the level of a few ulps of `||f_Lambda||`.
pub fn gal<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    lambda: &IndexSet,
) -> Result<GalerkinSolution<T>, SolveError> {
    debug_assert_eq!(f.role(), Role::Dual);
    if lambda.is_empty() {
        return Ok(GalerkinSolution {
            lambda: lambda.clone(),
            u: BsVector::zero(Role::Primal),
            solve_residual: T::zero(),
        });
    }
    let indices: Vec<usize> = lambda.iter().collect();
    let matrix = op.dense_on(lambda);
    let rhs: Vec<T> = indices.iter().map(|&k| f.get(k)).collect();
    let factor = CholeskyFactor::new(&matrix).map_err(SolveError::SingularRestriction)?;
    let mut x = factor
        .solve(&rhs)
        .map_err(SolveError::SingularRestriction)?;

    let residual_of = |x: &[T]| -> Vec<T> {
        let ax = matrix.mul_vec(x);
        rhs.iter().zip(&ax).map(|(&b, &a)| b - a).collect()
    };
    // iterative refinement, at most twice
    for _ in 0..2 {
        let r = residual_of(&x);
        let rnorm = norm2(&r);
        let fnorm = norm2(&rhs);
        if rnorm <= T::of(1e-15) * fnorm.max(T::epsilon()) {
            break;
        }
        let dx = factor.solve(&r).map_err(SolveError::SingularRestriction)?;
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += *di;
        }
    }
    let solve_residual = norm2(&residual_of(&x));

    let mut u = BsVector::zero(Role::Primal);
    for (i, &k) in indices.iter().enumerate() {
        if x[i] != T::zero() {
            u.set(k, x[i])?;
        }
    }
    Ok(GalerkinSolution {
        lambda: lambda.clone(),
        u,
        solve_residual,
    })
}

/// Evaluate the residual `r = f - A u_Lambda` up to `k_max`.
///
/// The tail bound combines the tail of `f` with the certified tail of the
/// matrix-vector product. Errors out when the combined tail exceeds 10% of
/// the stored norm, which signals that `k_max` must grow.
pub fn res<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    sol: &GalerkinSolution<T>,
    k_max: usize,
) -> Result<BsVector<T>, SolveError> {
    let au = op.apply(sol.u(), k_max);
    let mut r = BsVector::zero(Role::Dual);
    for k in crate::basis::MIN_INDEX..=k_max {
        let value = f.get(k) - au.get(k);
        if value != T::zero() {
            r.set(k, value)?;
        }
    }
    let tau = f.tail_bound() + au.tail_bound();
    r.set_tail_bound(tau, k_max);
    let stored = r.stored_norm();
    // the 10% rule only matters above the certification floor of the data:
    // an exactly captured solution leaves a [0, tau] interval with tau at
    // the tail-bound floor of f itself, which is a valid answer
    let floor = T::of(1e-11) * f.norm_interval().1;
    if tau > T::of(0.1) * stored && tau > floor {
        return Err(SolveError::InsufficientKMax {
            k_max,
            tail: tau.to_f64_lossy(),
            stored: stored.to_f64_lossy(),
        });
    }
    Ok(r)
}

/// Cutoff policy for [`res`]: past `max(Lambda)` the residual decays at the
/// fitted off-diagonal rate, so `ceil(ln(1/delta)/eta)` extra indices certify
/// the tail to a `delta` fraction; exact-band operators need exactly the
/// bandwidth. The cutoff never falls below the represented range of `f`.
pub fn recommended_k_max<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    lambda: &IndexSet,
    delta: T,
) -> usize {
    let lambda_top = lambda.max().unwrap_or(crate::basis::MIN_INDEX);
    let margin = if op.decay().exact_band().is_some() {
        op.decay().exact_band().unwrap_or(0)
    } else {
        op.tail_margin(delta)
    };
    (lambda_top + margin)
        .max(f.k_max())
        .max(crate::basis::MIN_INDEX)
}

/// Energy norm `|||v||| = sqrt(v^T A v)` of a finitely supported primal
/// vector. A value of `v^T A v` below `-1e-12` signals corrupted assembly.
pub fn energy_norm<T: Scalar>(op: &StiffnessOperator<T>, v: &BsVector<T>) -> Result<T, SolveError> {
    let mut quad = T::zero();
    for (k, vk) in v.iter() {
        for (l, vl) in v.iter() {
            quad += vk * vl * op.entry(k, l);
        }
    }
    if quad < -T::of(1e-12) {
        return Err(SolveError::NegativeQuadraticForm(quad.to_f64_lossy()));
    }
    Ok(quad.max(T::zero()).sqrt())
}

/// Certified error intervals from a residual-norm interval:
/// `||u - u_Lambda|| in [r/a^*, r/a_*]` and
/// `|||u - u_Lambda||| in [r/sqrt(a^*), r/sqrt(a_*)]`, endpoints propagated
/// conservatively.
pub fn error_bounds_from_residual<T: Scalar>(
    r_norm: (T, T),
    alpha_lower: T,
    alpha_upper: T,
) -> ((T, T), (T, T)) {
    let (r_lo, r_hi) = r_norm;
    let h1 = (r_lo / alpha_upper, r_hi / alpha_lower);
    let energy = (r_lo / alpha_upper.sqrt(), r_hi / alpha_lower.sqrt());
    (energy, h1)
}

/// High-resolution reference solution for error measurement: solve on the
/// full range `{2..k}` and double `k` until the residual drops below
/// `tol_rel * ||f||` (or the cap is reached). Used by the test harness and
/// the reporting layer, never by the adaptive loop itself.
pub fn reference_solution<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    tol_rel: T,
    k_cap: usize,
) -> Result<GalerkinSolution<T>, SolveError> {
    let f_norm = f.norm_interval().1.max(T::epsilon());
    let mut k = 32usize.min(k_cap.max(8));
    loop {
        let lambda = IndexSet::full_range(k);
        let sol = gal(op, f, &lambda)?;
        let k_res = recommended_k_max(op, f, &lambda, T::of(1e-6));
        let r = res(op, f, &sol, k_res)?;
        if r.norm_interval().1 <= tol_rel * f_norm || k >= k_cap {
            return Ok(sol);
        }
        k *= 2;
    }
}

fn norm2<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |acc, &v| acc + v * v).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::legendre::{LegendreSeries, Normalization};
    use crate::operator::{ProblemSpec, Rhs};
    use approx::assert_abs_diff_eq;

    fn operator(nu: Vec<f64>, sigma: Vec<f64>) -> StiffnessOperator<f64> {
        let nu = LegendreSeries::new(nu, Normalization::Classical);
        let sigma = if sigma.is_empty() {
            LegendreSeries::zero()
        } else {
            LegendreSeries::new(sigma, Normalization::Classical)
        };
        let spec = ProblemSpec::new(nu, sigma, Rhs::Dual(BsVector::zero(Role::Dual))).unwrap();
        StiffnessOperator::new(spec).unwrap()
    }

    fn dual(pairs: &[(usize, f64)]) -> BsVector<f64> {
        BsVector::from_pairs(Role::Dual, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn empty_lambda_gives_zero_solution() {
        let op = operator(vec![1.0], vec![]);
        let f = dual(&[(2, 1.0), (5, 2.0)]);
        let sol = gal(&op, &f, &IndexSet::empty()).unwrap();
        assert!(sol.u().is_zero());
        assert_eq!(sol.solve_residual(), 0.0);
    }

    #[test]
    fn identity_solve_is_projection() {
        let op = operator(vec![1.0], vec![]);
        let f = dual(&[(2, 1.0), (3, -0.5), (7, 0.25)]);
        let lambda = IndexSet::from_indices([2, 7]).unwrap();
        let sol = gal(&op, &f, &lambda).unwrap();
        assert_abs_diff_eq!(sol.u().get(2), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(sol.u().get(7), 0.25, epsilon = 1e-14);
        assert_eq!(sol.u().get(3), 0.0);
        // r = f - P_Lambda f for the identity operator
        let r = res(&op, &f, &sol, 10).unwrap();
        assert_abs_diff_eq!(r.get(3), -0.5, epsilon = 1e-14);
        assert_eq!(r.get(2), 0.0);
        assert_eq!(r.get(7), 0.0);
    }

    #[test]
    fn galerkin_orthogonality_on_variable_coefficients() {
        // nu = 2 + x, sigma = 0, Lambda = {2, 3, 4}: residual entries inside
        // Lambda vanish up to the algebraic solve accuracy
        let op = operator(vec![2.0, 1.0], vec![]);
        let f = dual(&[(2, 1.0), (3, 0.7), (4, -0.3), (5, 0.2), (6, 0.1)]);
        let lambda = IndexSet::from_indices([2, 3, 4]).unwrap();
        let sol = gal(&op, &f, &lambda).unwrap();
        let f_norm = f.norm_interval().1;
        assert!(sol.solve_residual() <= 1e-12 * f_norm);
        let r = res(&op, &f, &sol, 20).unwrap();
        for k in lambda.iter() {
            assert!(
                r.get(k).abs() <= 1e-11 * f_norm,
                "orthogonality violated at {k}: {}",
                r.get(k)
            );
        }
    }

    #[test]
    fn exact_rhs_gives_zero_residual() {
        // f = A e_2 with Lambda = {2} captures the solution exactly
        let op = operator(vec![2.0, 1.0], vec![1.0, 0.5]);
        let e2 = BsVector::unit(Role::Primal, 2).unwrap();
        let f = op.apply(&e2, 12);
        let lambda = IndexSet::from_indices([2]).unwrap();
        let sol = gal(&op, &f, &lambda).unwrap();
        let r = res(&op, &f, &sol, 14).unwrap();
        let (lo, hi) = r.norm_interval();
        assert_eq!(lo.min(0.0), 0.0);
        assert!(hi <= 1e-10, "residual interval upper end {hi}");
    }

    #[test]
    fn residual_matches_dense_oracle() {
        // manufactured solution with coefficients e^{-k} on {2..11}
        let op = operator(vec![2.0, 1.0], vec![1.0, 0.5]);
        let mut u = BsVector::zero(Role::Primal);
        for k in 2..=25usize {
            u.set(k, (-(k as f64)).exp()).unwrap();
        }
        let f = op.apply(&u, 60);
        let lambda = IndexSet::from_indices(2..=11).unwrap();
        let sol = gal(&op, &f, &lambda).unwrap();
        let r = res(&op, &f, &sol, 40).unwrap();

        // dense-block oracle on a 200-index block
        let n = 200;
        let block = op.dense_block(2, n);
        let mut u_dense = vec![0.0; n];
        for (k, v) in sol.u().iter() {
            u_dense[k - 2] = v;
        }
        let au = block.mul_vec(&u_dense);
        let mut r_dense = vec![0.0; n];
        for (i, r_i) in r_dense.iter_mut().enumerate() {
            *r_i = f.get(i + 2) - au[i];
        }
        let r_oracle: f64 = r_dense.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (lo, hi) = r.norm_interval();
        assert!(
            lo <= r_oracle + 1e-9 && r_oracle <= hi + 1e-9,
            "oracle {r_oracle} outside [{lo}, {hi}]"
        );
        assert!((r.stored_norm() - r_oracle).abs() < 1e-9);
    }

    #[test]
    fn insufficient_cutoff_is_reported() {
        let op = operator(vec![2.0, 1.0], vec![]);
        let mut u = BsVector::zero(Role::Primal);
        for k in 2..=20usize {
            u.set(k, 0.5f64.powi(k as i32)).unwrap();
        }
        let mut f = op.apply(&u, 40);
        // huge declared tail on f forces the 10% check to trip
        f.set_tail_bound(1.0, 40);
        let sol = gal(&op, &f, &IndexSet::from_indices([2]).unwrap()).unwrap();
        assert!(matches!(
            res(&op, &f, &sol, 25),
            Err(SolveError::InsufficientKMax { .. })
        ));
    }

    #[test]
    fn energy_norm_examples() {
        // A = I: energy norm is the coefficient norm
        let id = operator(vec![1.0], vec![]);
        let v = BsVector::from_pairs(Role::Primal, [(2, 3.0), (4, 4.0)]).unwrap();
        assert_abs_diff_eq!(energy_norm(&id, &v).unwrap(), 5.0, epsilon = 1e-12);
        // nu = sigma = 1: |||e_2||| = sqrt(1 + 2/5)
        let op = operator(vec![1.0], vec![1.0]);
        let e2 = BsVector::unit(Role::Primal, 2).unwrap();
        assert_abs_diff_eq!(
            energy_norm(&op, &e2).unwrap(),
            1.4f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn energy_norm_sandwich() {
        let op = operator(vec![2.0, 1.0], vec![1.0, 0.5]);
        let alpha_lo = op.problem().alpha_lower();
        let alpha_hi = op.problem().alpha_upper();
        let vectors = [
            vec![(2, 1.0)],
            vec![(2, 1.0), (3, -1.0), (4, 0.5)],
            vec![(5, 0.3), (9, 2.0), (17, -0.7)],
        ];
        for pairs in vectors {
            let v = BsVector::from_pairs(Role::Primal, pairs).unwrap();
            let e = energy_norm(&op, &v).unwrap();
            let n = v.stored_norm();
            assert!(alpha_lo.sqrt() * n <= e + 1e-12, "lower sandwich");
            assert!(e <= alpha_hi.sqrt() * n + 1e-12, "upper sandwich");
        }
    }

    #[test]
    fn error_bound_intervals() {
        // degenerate constants collapse both intervals onto ||r||
        let (energy, h1) = error_bounds_from_residual((2.0, 2.0), 1.0, 1.0);
        assert_eq!(energy, (2.0, 2.0));
        assert_eq!(h1, (2.0, 2.0));
        // spread constants: h1 = (0.5, 2), energy = (1, 2)
        let (energy, h1) = error_bounds_from_residual((2.0, 2.0), 1.0, 4.0);
        assert_eq!(h1, (0.5, 2.0));
        assert_abs_diff_eq!(energy.0, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(energy.1, 2.0, epsilon = 1e-15);
        // zero residual
        let (energy, h1) = error_bounds_from_residual((0.0, 0.0), 1.0, 4.0);
        assert_eq!(energy, (0.0, 0.0));
        assert_eq!(h1, (0.0, 0.0));
    }

    #[test]
    fn galerkin_is_energy_optimal_and_nested() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let op = operator(vec![2.0, 1.0], vec![1.0, 0.5]);
        let mut u_exact = BsVector::zero(Role::Primal);
        for k in 2..=30usize {
            u_exact.set(k, (-(k as f64) * 0.7).exp()).unwrap();
        }
        let f = op.apply(&u_exact, 70);
        let u_ref = reference_solution(&op, &f, 1e-12, 256).unwrap();

        let lambda = IndexSet::from_indices([2, 3, 5]).unwrap();
        let sol = gal(&op, &f, &lambda).unwrap();
        let err = |v: &BsVector<f64>| {
            let d = u_ref.u().sub(v).unwrap();
            energy_norm(&op, &d).unwrap()
        };
        let base = err(sol.u());
        // optimality among 50 random members of V_Lambda
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let mut v = BsVector::zero(Role::Primal);
            for k in lambda.iter() {
                v.set(k, rng.random_range(-1.5..1.5)).unwrap();
            }
            assert!(base <= err(&v) + 1e-9, "Galerkin not optimal in V_Lambda");
        }
        // nestedness: enlarging Lambda cannot increase the energy error
        let bigger = IndexSet::from_indices([2, 3, 5, 6, 9]).unwrap();
        let sol_big = gal(&op, &f, &bigger).unwrap();
        assert!(err(sol_big.u()) <= base + 1e-9);

        // residual-error equivalence: the measured H1 error lies inside the
        // certified interval
        let k_res = recommended_k_max(&op, &f, &lambda, 1e-6);
        let r = res(&op, &f, &sol, k_res).unwrap();
        let (_, h1) = error_bounds_from_residual(
            r.norm_interval(),
            op.problem().alpha_lower(),
            op.problem().alpha_upper(),
        );
        let measured = u_ref.u().sub(sol.u()).unwrap().stored_norm();
        assert!(
            h1.0 <= measured + 1e-9 && measured <= h1.1 + 1e-9,
            "measured {measured} outside [{}, {}]",
            h1.0,
            h1.1
        );
    }
}
