//! Built-in problems and named functions.
//!
//! The catalog covers the three structurally distinct cases of the solver:
//!
//! * `p1` - constant coefficients, identity stiffness matrix (the fast path);
//! * `p2` - degree-1 polynomial coefficients, exactly banded matrix;
//! * `p3` - analytic non-polynomial diffusion `1/(2 - x)`, dense matrix with
//!   exponentially decaying entries.
//!
//! Manufactured solutions are turned into Babuska-Shen coefficients through
//! their derivative (`v_k = -(Du)^_{k-1}`), and the right-hand side is then
//! produced in coefficient space as `f = A u`, so no symbolic differentiation
//! of the full operator ever enters the data path.

use adleg::{
    gauss_legendre_rule, ingest_classical_series, legendre_transform, BsVector, LegendreSeries,
    Normalization, OperatorError, ProblemSpec, Rhs, Role,
};

use crate::config::{CoefficientSpec, ConfigError, ProblemConfig, ProblemRef, SolutionSpec};

/// A catalog entry: name, short description, and the inline definition.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub description: &'static str,
    pub problem: ProblemConfig,
}

/// The built-in problem list.
pub fn catalog() -> Vec<CatalogEntry> {
    vec![
        CatalogEntry {
            name: "p1",
            description: "nu = 1, sigma = 0, u = sin(pi x); identity matrix fast path",
            problem: ProblemConfig {
                nu: CoefficientSpec::Coeffs { coeffs: vec![1.0] },
                sigma: None,
                manufactured_u: Some(SolutionSpec::Named {
                    named: "sin-pi".into(),
                }),
                f: None,
            },
        },
        CatalogEntry {
            name: "p2",
            description: "nu = 2 + x, sigma = 1 + x/2, u = (1 - x^2) e^x; banded matrix",
            problem: ProblemConfig {
                nu: CoefficientSpec::Coeffs {
                    coeffs: vec![2.0, 1.0],
                },
                sigma: Some(CoefficientSpec::Coeffs {
                    coeffs: vec![1.0, 0.5],
                }),
                manufactured_u: Some(SolutionSpec::Named {
                    named: "bump-exp".into(),
                }),
                f: None,
            },
        },
        CatalogEntry {
            name: "p3",
            description: "nu = 1/(2 - x) (analytic, dense decay), sigma = 0, u = sin(pi x)",
            problem: ProblemConfig {
                nu: CoefficientSpec::Named {
                    named: "inv-two-minus-x".into(),
                },
                sigma: None,
                manufactured_u: Some(SolutionSpec::Named {
                    named: "sin-pi".into(),
                }),
                f: None,
            },
        },
    ]
}

pub fn lookup(name: &str) -> Result<ProblemConfig, ConfigError> {
    catalog()
        .into_iter()
        .find(|entry| entry.name == name)
        .map(|entry| entry.problem)
        .ok_or_else(|| ConfigError::UnknownProblem(name.to_string()))
}

/// Resolve a problem reference to its inline form.
pub fn resolve(problem: &ProblemRef) -> Result<ProblemConfig, ConfigError> {
    match problem {
        ProblemRef::Named(name) => lookup(name),
        ProblemRef::Inline(config) => {
            config.validate()?;
            Ok(config.clone())
        }
    }
}

/// Named coefficient function table.
fn coefficient_function(name: &str) -> Result<fn(f64) -> f64, ConfigError> {
    match name {
        "inv-two-minus-x" => Ok(|x| (2.0 - x).recip()),
        _ => Err(ConfigError::UnknownFunction(name.to_string())),
    }
}

/// A manufactured solution and its derivative.
type SolutionPair = (fn(f64) -> f64, fn(f64) -> f64);

/// Named manufactured solutions: `(u, u')` pairs with `u(+-1) = 0`.
fn solution_function(name: &str) -> Result<SolutionPair, ConfigError> {
    match name {
        "sin-pi" => Ok((
            |x| (std::f64::consts::PI * x).sin(),
            |x| std::f64::consts::PI * (std::f64::consts::PI * x).cos(),
        )),
        "bump-exp" => Ok((
            |x| (1.0 - x * x) * x.exp(),
            |x| (1.0 - 2.0 * x - x * x) * x.exp(),
        )),
        _ => Err(ConfigError::UnknownFunction(name.to_string())),
    }
}

/// A resolved problem: the validated spec plus the exact solution when the
/// right-hand side was manufactured.
pub struct BuiltProblem {
    pub spec: ProblemSpec<f64>,
    pub u_exact: Option<BsVector<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum BuildError {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Build the operator-level problem from its config description.
pub fn build_problem(config: &ProblemConfig) -> Result<BuiltProblem, BuildError> {
    config.validate()?;
    let mut warnings = Vec::new();
    let nu = build_series(&config.nu, "nu", &mut warnings)?;
    let sigma = match &config.sigma {
        Some(spec) => build_series(spec, "sigma", &mut warnings)?,
        None => LegendreSeries::zero(),
    };
    let (rhs, u_exact) = match (&config.manufactured_u, &config.f) {
        (Some(solution), None) => {
            let u = build_solution(solution)?;
            (Rhs::ManufacturedFrom(u.clone()), Some(u))
        }
        (None, Some(f)) => {
            let mut v = BsVector::zero(Role::Dual);
            for &(k, value) in &f.bs {
                v.set(k, value).map_err(OperatorError::from)?;
            }
            (Rhs::Dual(v), None)
        }
        _ => return Err(ConfigError::RhsExclusivity.into()),
    };
    let spec = ProblemSpec::new(nu, sigma, rhs)?;
    Ok(BuiltProblem { spec, u_exact })
}

fn build_series(
    spec: &CoefficientSpec,
    label: &str,
    warnings: &mut Vec<String>,
) -> Result<LegendreSeries<f64>, BuildError> {
    match spec {
        CoefficientSpec::Coeffs { coeffs } => Ok(LegendreSeries::new(
            coeffs.clone(),
            Normalization::Classical,
        )),
        CoefficientSpec::Named { named } => {
            let f = coefficient_function(named)?;
            Ok(ingest_classical_series(f, label, warnings)?)
        }
    }
}

/// Babuska-Shen coefficients of a manufactured solution via its derivative:
/// expand `u'` in the orthonormal Legendre basis and shift,
/// `v_k = -(Du)^_{k-1}` for `k >= 2`. The zeroth derivative coefficient
/// vanishes for admissible (boundary-zero) solutions.
fn build_solution(spec: &SolutionSpec) -> Result<BsVector<f64>, BuildError> {
    match spec {
        SolutionSpec::Bs { bs } => {
            let mut v = BsVector::zero(Role::Primal);
            for &(k, value) in bs {
                v.set(k, value).map_err(OperatorError::from)?;
            }
            Ok(v)
        }
        SolutionSpec::Named { named } => {
            let (_, du) = solution_function(named)?;
            Ok(bs_coefficients_from_derivative(du))
        }
    }
}

fn bs_coefficients_from_derivative(du: impl Fn(f64) -> f64) -> BsVector<f64> {
    let mut n = 32usize;
    loop {
        let rule = gauss_legendre_rule::<f64>(n + 16).expect("n >= 1");
        let ortho = legendre_transform(&du, n, &rule, None).expect("rule order sufficient");
        let scale = ortho
            .coeffs()
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.abs()));
        let trailing = ortho.coeffs()[n.saturating_sub(4)..]
            .iter()
            .fold(0.0f64, |acc, c| acc.max(c.abs()));
        if trailing <= 1e-15 * scale || n >= 512 {
            let floor = 1e-15 * scale;
            let mut v = BsVector::zero(Role::Primal);
            for h in 1..=n.saturating_sub(1) {
                let coeff = -ortho.coeff(h);
                if coeff.abs() > floor {
                    v.set(h + 1, coeff).expect("h + 1 >= 2");
                }
            }
            v.set_tail_bound(10.0 * trailing + floor, n + 1);
            return v;
        }
        n *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use adleg::eval_bs_function;

    #[test]
    fn catalog_has_the_three_reference_problems() {
        let names: Vec<&str> = catalog().iter().map(|e| e.name).collect();
        assert_eq!(names, ["p1", "p2", "p3"]);
        for entry in catalog() {
            let built = build_problem(&entry.problem).unwrap();
            assert!(built.spec.alpha_lower() > 0.0);
            assert!(built.u_exact.is_some());
        }
    }

    #[test]
    fn lookup_rejects_unknown_names() {
        assert!(matches!(lookup("p99"), Err(ConfigError::UnknownProblem(_))));
    }

    #[test]
    fn p2_bounds_and_band() {
        let built = build_problem(&lookup("p2").unwrap()).unwrap();
        // nu in [1, 3], sigma in [0.5, 1.5]
        assert!((built.spec.alpha_lower() - 1.0).abs() < 1e-9);
        assert!(built.spec.alpha_upper() >= 3.0);
        assert_eq!(built.spec.exact_band(), Some(3));
    }

    #[test]
    fn p3_is_dense_with_positive_nu() {
        let built = build_problem(&lookup("p3").unwrap()).unwrap();
        assert_eq!(built.spec.exact_band(), None);
        // nu = 1/(2-x): range [1/3, 1]
        assert!((built.spec.alpha_lower() - 1.0 / 3.0).abs() < 1e-9);
        assert!((built.spec.alpha_upper() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn manufactured_solutions_evaluate_pointwise() {
        // the BS expansion of each named solution reproduces it pointwise
        let sin_pi: fn(f64) -> f64 = |x| (std::f64::consts::PI * x).sin();
        let bump_exp: fn(f64) -> f64 = |x| (1.0 - x * x) * x.exp();
        let cases = [("sin-pi", sin_pi), ("bump-exp", bump_exp)];
        for (name, u) in cases {
            let v = build_solution(&SolutionSpec::Named { named: name.into() }).unwrap();
            for &x in &[-0.9, -0.4, 0.0, 0.3, 0.8] {
                let approx = eval_bs_function(&v, x).unwrap();
                assert!(
                    (approx - u(x)).abs() < 1e-11,
                    "{name} at {x}: {approx} vs {}",
                    u(x)
                );
            }
        }
    }
}
