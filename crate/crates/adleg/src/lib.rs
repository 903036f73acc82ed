//! Adaptive Legendre-Galerkin solvers for the 1-D elliptic problem
//! `-D(nu D u) + sigma u = f` on `(-1, 1)` with homogeneous Dirichlet
//! conditions, plus the nonlinear-approximation toolkit needed to measure
//! how close the adaptive iterates stay to best N-term optimality.
//!
//! The layers, bottom up:
//!
//! * [`legendre`] - polynomial evaluation, Gauss-Legendre quadrature,
//!   transforms, and the product-linearization coefficients behind the
//!   stiffness formulas;
//! * [`basis`] - the Babuska-Shen basis `eta_k = (L_{k-2} - L_k)/sqrt(4k-2)`,
//!   orthonormal in H1_0, with sparse coefficient vectors carrying certified
//!   tail bounds;
//! * [`operator`] - lazy assembly of the stiffness matrix from the Legendre
//!   coefficients of `nu` and `sigma`, exponential decay-class fitting,
//!   banded truncations;
//! * [`solver`] - restricted Galerkin solves, residuals with certified
//!   tails, energy norms, residual/error equivalence;
//! * [`adaptive`] - Dorfler marking, enrichment, coarsening and the two
//!   drivers (plain and predictor-corrector);
//! * [`sparsity`] - best N-term errors, exponential class norms, decay fits
//!   and class propagation through the operator.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (any `num-traits`
//! float); the `*64`/`*32` aliases below pin the common instantiations. The
//! stated tolerances throughout assume `f64`.

// Negated float comparisons like `!(x > 0)` double as NaN guards: the
// rejecting branch must also be taken when x is NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod basis;
pub mod legendre;
pub mod linalg;
pub mod operator;
pub mod scalar;
pub mod solver;
pub mod sparsity;

pub use adaptive::{
    coarse, compute_j_theta, doerfler, e_doerfler, enrich, run, run_adleg, run_pc_adleg,
    AdaptiveConfig, AdaptiveError, Algorithm, IterationRecord,
};
pub use basis::{
    bs_to_legendre_derivative, eval_bs_function, eval_eta, norm, project, project_complement,
    BasisError, BsVector, IndexSet, Role,
};
pub use legendre::{
    adams_a, adams_product_coeff, b_coeff, c_coeff, eval_legendre, eval_legendre_with_derivative,
    eval_phi, gauss_legendre_rule, legendre_row, legendre_transform, ln_adams_a, LegendreError,
    LegendreSeries, Normalization, QuadratureRule,
};
pub use linalg::{min_eigenvalue_spd, spectral_norm_sym, CholeskyFactor, DenseMatrix, LinalgError};
pub use operator::{
    dual_expansion, entry_diffusion, entry_reaction, fit_coefficient_rate, fit_decay_class,
    ingest_classical_series, inverse_decay_rate, DecayClass, InverseDecay, OperatorError,
    ProblemSpec, Rhs, StiffnessOperator,
};
pub use scalar::Scalar;
pub use solver::{
    energy_norm, error_bounds_from_residual, gal, recommended_k_max, reference_solution, res,
    GalerkinSolution, SolveError,
};
pub use sparsity::{
    best_n_term_errors, class_norm_ag, class_norm_lg, fit_decay, fit_decay_series,
    fit_decay_with_floor, gevrey_norm, n_epsilon, predict_image_class, predict_residual_class,
    predict_residual_class_banded, zeta, ClassNormEstimate, OperatorKind, SparsityError,
    SparsityParams,
};

// Concrete instantiations at the working precisions.
pub type LegendreSeries64 = LegendreSeries<f64>;
pub type LegendreSeries32 = LegendreSeries<f32>;
pub type QuadratureRule64 = QuadratureRule<f64>;
pub type QuadratureRule32 = QuadratureRule<f32>;
pub type BsVector64 = BsVector<f64>;
pub type BsVector32 = BsVector<f32>;
pub type ProblemSpec64 = ProblemSpec<f64>;
pub type StiffnessOperator64 = StiffnessOperator<f64>;
pub type GalerkinSolution64 = GalerkinSolution<f64>;
pub type AdaptiveConfig64 = AdaptiveConfig<f64>;
pub type IterationRecord64 = IterationRecord<f64>;
pub type SparsityParams64 = SparsityParams<f64>;
