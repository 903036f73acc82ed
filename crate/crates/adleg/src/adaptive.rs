//! Marking, enrichment, coarsening and the two adaptive drivers.
//!
//! The plain driver alternates Dorfler marking on the residual with a
//! Galerkin solve on the grown index set; its energy error contracts by
//! `rho = sqrt(1 - (a_*/a^*) theta^2)` per iteration. The
//! predictor-corrector driver instead marks aggressively (Dorfler set
//! enriched by a ball of radius `J_theta`, sized so the inverse-matrix tail
//! beyond the ball is negligible), solves, then coarsens the intermediate
//! solution back to a near-minimal set before the final solve of the
//! iteration; its contraction factor `6 (a^*/a_*) sqrt(1 - theta^2)` can be
//! pushed arbitrarily close to zero by taking `theta` near one, at the price
//! of the intermediate set being temporarily too rich.
//!
//! All norm comparisons are interval-safe: stopping uses the upper endpoint
//! of the residual norm (so termination implies the true norm is under the
//! tolerance), marking targets `theta^2` times the squared upper endpoint,
//! and the coarsening accuracy is fed the upper endpoint so its contract
//! `||u - w|| <= eps` stays valid.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{project_complement, BsVector, IndexSet, MIN_INDEX};
use crate::operator::{DecayClass, StiffnessOperator};
use crate::scalar::Scalar;
use crate::solver::{
    error_bounds_from_residual, gal, recommended_k_max, res, GalerkinSolution, SolveError,
};

#[derive(Debug, Error)]
pub enum AdaptiveError<T> {
    #[error("theta must lie strictly between 0 and 1, got {0}")]
    InvalidTheta(f64),

    #[error(
        "residual tail too large for minimal marking: tail {tail} exceeds \
         (1 - theta)/10 of the stored norm {stored}; the cutoff must grow"
    )]
    TailTooLarge { tail: f64, stored: f64 },

    #[error("theta too small for contraction: rho(theta) = {rho} is not below 1")]
    ThetaTooSmall { rho: f64 },

    #[error("inverse decay unavailable: the invertibility condition was not verified")]
    InverseDecayUnavailable,

    #[error("max_iter = {max_iter} exceeded before reaching the tolerance")]
    MaxIterExceeded {
        max_iter: usize,
        completed: Vec<IterationRecord<T>>,
    },

    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Which driver to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Adleg,
    PcAdleg,
}

/// Driver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig<T> {
    /// Marking fraction, strictly inside (0, 1).
    pub theta: T,
    /// Stopping tolerance on the residual norm (upper endpoint).
    pub tol: T,
    pub max_iter: usize,
    pub algorithm: Algorithm,
    /// Factor in the coarsening accuracy `(mult / a_*) sqrt(1-theta^2) ||r||`.
    pub coarsening_multiplier: T,
}

impl<T: Scalar> AdaptiveConfig<T> {
    pub fn new(algorithm: Algorithm, theta: T, tol: T) -> Self {
        Self {
            theta,
            tol,
            max_iter: 200,
            algorithm,
            coarsening_multiplier: T::of(2.0),
        }
    }
}

/// Snapshot of one adaptive iteration.
///
/// For the plain driver the intermediate set equals the final one; for the
/// predictor-corrector it is the enriched set that was solved before
/// coarsening, so `lambda_before subset lambda_hat superset lambda_after`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord<T> {
    pub n: usize,
    pub lambda_before: IndexSet,
    pub lambda_hat: IndexSet,
    pub lambda_after: IndexSet,
    /// Certified interval for the residual norm after the iteration.
    pub residual_norm: (T, T),
    /// Certified H1_0 error interval from the residual equivalence.
    pub error_h1: (T, T),
    /// Certified energy error interval from the residual equivalence.
    pub error_energy: (T, T),
    /// Cardinality of the raw Dorfler set (before any enrichment).
    pub marked_cardinality: usize,
    pub j_theta_used: usize,
    pub wall_time: Duration,
}

// ---------------------------------------------------------------------------
// Marking primitives
// ---------------------------------------------------------------------------

/// Minimal-cardinality bulk chasing: the smallest set of stored indices whose
/// squared coefficients reach `theta^2` times the squared norm upper bound.
///
/// Sorting is by decreasing modulus with ties broken toward the smaller
/// index, which makes runs bit-reproducible. The certified tail must be small
/// relative to the stored norm (`tau <= (1-theta) stored / 10`) for the
/// minimality claim to survive the unseen coefficients.
pub fn doerfler<T: Scalar>(r: &BsVector<T>, theta: T) -> Result<IndexSet, AdaptiveError<T>> {
    let theta_f = theta.to_f64_lossy();
    if !(theta_f > 0.0 && theta_f < 1.0) {
        return Err(AdaptiveError::InvalidTheta(theta_f));
    }
    let (stored, upper) = r.norm_interval();
    if stored == T::zero() && r.tail_bound() == T::zero() {
        return Ok(IndexSet::empty());
    }
    let allowance = (T::one() - theta) * stored / T::of(10.0);
    if r.tail_bound() > allowance {
        return Err(AdaptiveError::TailTooLarge {
            tail: r.tail_bound().to_f64_lossy(),
            stored: stored.to_f64_lossy(),
        });
    }
    let mut entries: Vec<(usize, T)> = r.iter().collect();
    entries.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("finite coefficients")
            .then(a.0.cmp(&b.0))
    });
    let target = theta * theta * upper * upper;
    let mut captured = T::zero();
    let mut selected = Vec::new();
    for (k, value) in entries {
        if captured >= target {
            break;
        }
        captured += value * value;
        selected.push(k);
    }
    Ok(IndexSet::from_indices(selected).expect("residual indices are valid"))
}

/// Enrichment radius for the predictor step: the smallest `J` with
/// `C_{A^{-1}} e^{-eta_bar J} <= sqrt((1-theta^2)/(a_* a^*))`. Degenerate
/// band-0 operators short-circuit to zero.
pub fn compute_j_theta<T: Scalar>(
    theta: T,
    decay: &DecayClass<T>,
    alpha_lower: T,
    alpha_upper: T,
) -> Result<usize, AdaptiveError<T>> {
    if decay.is_diagonal() {
        return Ok(0);
    }
    let inverse = decay
        .inverse()
        .ok_or(AdaptiveError::InverseDecayUnavailable)?;
    let threshold = ((T::one() - theta * theta) / (alpha_lower * alpha_upper)).sqrt();
    if inverse.amplitude <= threshold {
        return Ok(0);
    }
    if inverse.eta == T::infinity() {
        return Ok(1);
    }
    let j = ((inverse.amplitude / threshold).ln() / inverse.eta).ceil();
    Ok(j.to_f64_lossy().max(0.0) as usize)
}

/// Ball enrichment: all indices in `N_2` within distance `j` of the set.
/// The output cardinality is between `|lambda|` and `(2j + 1) |lambda|`.
pub fn enrich(lambda: &IndexSet, j: usize) -> IndexSet {
    if j == 0 {
        return lambda.clone();
    }
    let mut out = std::collections::BTreeSet::new();
    for center in lambda.iter() {
        let lo = center.saturating_sub(j).max(MIN_INDEX);
        for k in lo..=(center + j) {
            out.insert(k);
        }
    }
    IndexSet::from_indices(out).expect("clipped at the minimum index")
}

/// Dorfler marking followed by ball enrichment.
pub fn e_doerfler<T: Scalar>(
    r: &BsVector<T>,
    theta: T,
    j_theta: usize,
) -> Result<IndexSet, AdaptiveError<T>> {
    Ok(enrich(&doerfler(r, theta)?, j_theta))
}

/// Minimal-cardinality coarsening: keep the fewest coefficients of `w` so
/// the dropped mass stays within `2 epsilon` (the caller certifies
/// `||u - w|| <= epsilon`, making the result accurate to `3 epsilon`).
///
/// Smallest moduli are dropped first, ties broken toward dropping the larger
/// index. A nonzero tail bound on `w` consumes part of the drop budget.
pub fn coarse<T: Scalar>(w: &BsVector<T>, epsilon: T) -> IndexSet {
    let mut entries: Vec<(usize, T)> = w.iter().collect();
    // increasing modulus; on ties the larger index comes first (dropped first)
    entries.sort_by(|a, b| {
        a.1.abs()
            .partial_cmp(&b.1.abs())
            .expect("finite coefficients")
            .then(b.0.cmp(&a.0))
    });
    let budget = T::of(4.0) * epsilon * epsilon - w.tail_bound() * w.tail_bound();
    let mut dropped = T::zero();
    let mut cut = 0usize;
    for (i, (_, value)) in entries.iter().enumerate() {
        let next = dropped + *value * *value;
        if next <= budget {
            dropped = next;
            cut = i + 1;
        } else {
            break;
        }
    }
    IndexSet::from_indices(entries[cut..].iter().map(|&(k, _)| k))
        .expect("support indices are valid")
}

// ---------------------------------------------------------------------------
// Drivers
// ---------------------------------------------------------------------------

/// Run the configured driver.
pub fn run<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    config: &AdaptiveConfig<T>,
) -> Result<Vec<IterationRecord<T>>, AdaptiveError<T>> {
    match config.algorithm {
        Algorithm::Adleg => run_adleg(op, f, config),
        Algorithm::PcAdleg => run_pc_adleg(op, f, config),
    }
}

fn validate_theta<T: Scalar>(theta: T) -> Result<(), AdaptiveError<T>> {
    let t = theta.to_f64_lossy();
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(AdaptiveError::InvalidTheta(t))
    }
}

/// Residual evaluation that grows the cutoff until both the 10% tail rule of
/// `res` and the marking precondition hold (or the run is about to stop).
fn residual_for_marking<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    sol: &GalerkinSolution<T>,
    lambda: &IndexSet,
    theta: T,
    tol: T,
) -> Result<BsVector<T>, AdaptiveError<T>> {
    let mut delta = T::of(1e-4).min((T::one() - theta) / T::of(20.0));
    let mut last_err: Option<SolveError> = None;
    for _ in 0..8 {
        let k_max = recommended_k_max(op, f, lambda, delta);
        match res(op, f, sol, k_max) {
            Ok(r) => {
                let stored = r.stored_norm();
                let markable = r.tail_bound() <= (T::one() - theta) * stored / T::of(10.0);
                let stopping = r.norm_interval().1 <= tol;
                if markable || stopping {
                    return Ok(r);
                }
            }
            Err(e @ SolveError::InsufficientKMax { .. }) => last_err = Some(e),
            Err(e) => return Err(e.into()),
        }
        delta *= T::of(1e-2);
    }
    match last_err {
        Some(e) => Err(e.into()),
        None => {
            let k_max = recommended_k_max(op, f, lambda, delta);
            res(op, f, sol, k_max).map_err(Into::into)
        }
    }
}

/// Plain adaptive driver: mark, solve, repeat while the residual exceeds the
/// tolerance. The energy error contracts by
/// `sqrt(1 - (a_*/a^*) theta^2)` per iteration.
pub fn run_adleg<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    config: &AdaptiveConfig<T>,
) -> Result<Vec<IterationRecord<T>>, AdaptiveError<T>> {
    validate_theta(config.theta)?;
    let alpha_lo = op.problem().alpha_lower();
    let alpha_hi = op.problem().alpha_upper();
    let mut lambda = IndexSet::empty();
    let mut r = f.clone();
    let mut records: Vec<IterationRecord<T>> = Vec::new();

    while r.norm_interval().1 > config.tol {
        if records.len() >= config.max_iter {
            return Err(AdaptiveError::MaxIterExceeded {
                max_iter: config.max_iter,
                completed: records,
            });
        }
        let started = Instant::now();
        let lambda_before = lambda.clone();
        // mark on the complement: Galerkin orthogonality keeps in-set
        // entries at roundoff level but they are not candidates
        let marked = doerfler(&project_complement(&r, &lambda), config.theta)?;
        lambda = lambda.union(&marked);
        let sol = gal(op, f, &lambda)?;
        r = residual_for_marking(op, f, &sol, &lambda, config.theta, config.tol)?;
        let r_interval = r.norm_interval();
        let (energy, h1) = error_bounds_from_residual(r_interval, alpha_lo, alpha_hi);
        records.push(IterationRecord {
            n: records.len(),
            lambda_before,
            lambda_hat: lambda.clone(),
            lambda_after: lambda.clone(),
            residual_norm: r_interval,
            error_h1: h1,
            error_energy: energy,
            marked_cardinality: marked.len(),
            j_theta_used: 0,
            wall_time: started.elapsed(),
        });
    }
    Ok(records)
}

/// Predictor-corrector driver: enriched marking, intermediate solve,
/// coarsening to a near-minimal set, final solve. Requires
/// `rho = 6 (a^*/a_*) sqrt(1 - theta^2) < 1`, checked up front.
pub fn run_pc_adleg<T: Scalar>(
    op: &StiffnessOperator<T>,
    f: &BsVector<T>,
    config: &AdaptiveConfig<T>,
) -> Result<Vec<IterationRecord<T>>, AdaptiveError<T>> {
    validate_theta(config.theta)?;
    let alpha_lo = op.problem().alpha_lower();
    let alpha_hi = op.problem().alpha_upper();
    let rho = T::of(6.0) * (alpha_hi / alpha_lo) * (T::one() - config.theta * config.theta).sqrt();
    if !(rho < T::one()) {
        return Err(AdaptiveError::ThetaTooSmall {
            rho: rho.to_f64_lossy(),
        });
    }
    let j_theta = compute_j_theta(config.theta, op.decay(), alpha_lo, alpha_hi)?;

    let mut lambda = IndexSet::empty();
    let mut r = f.clone();
    let mut records: Vec<IterationRecord<T>> = Vec::new();

    while r.norm_interval().1 > config.tol {
        if records.len() >= config.max_iter {
            return Err(AdaptiveError::MaxIterExceeded {
                max_iter: config.max_iter,
                completed: records,
            });
        }
        let started = Instant::now();
        let lambda_before = lambda.clone();
        let r_upper = r.norm_interval().1;

        let marked = doerfler(&project_complement(&r, &lambda), config.theta)?;
        let enriched = enrich(&marked, j_theta);
        let lambda_hat = lambda.union(&enriched);
        let predictor = gal(op, f, &lambda_hat)?;

        // coarsening accuracy: the predictor error is certified to stay
        // within (mult/a_*) sqrt(1-theta^2) ||r_n||, upper endpoint
        let epsilon = config.coarsening_multiplier / alpha_lo
            * (T::one() - config.theta * config.theta).sqrt()
            * r_upper;
        lambda = coarse(predictor.u(), epsilon);
        let sol = gal(op, f, &lambda)?;
        r = residual_for_marking(op, f, &sol, &lambda, config.theta, config.tol)?;
        let r_interval = r.norm_interval();
        let (energy, h1) = error_bounds_from_residual(r_interval, alpha_lo, alpha_hi);
        records.push(IterationRecord {
            n: records.len(),
            lambda_before,
            lambda_hat,
            lambda_after: lambda.clone(),
            residual_norm: r_interval,
            error_h1: h1,
            error_energy: energy,
            marked_cardinality: marked.len(),
            j_theta_used: j_theta,
            wall_time: started.elapsed(),
        });
    }
    Ok(records)
}
