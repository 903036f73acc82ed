//! Experiment configuration: a single self-contained TOML file.
//!
//! A problem is either a catalog name or an inline table with `nu`/`sigma`
//! given as classical Legendre coefficient lists or named functions, and
//! exactly one of a manufactured exact solution or an explicit right-hand
//! side in dual coefficients. Numbers are decimal strings parsed at full
//! precision by the TOML layer; there is no environment-variable
//! configuration, so a config file pins a run completely.

use std::path::{Path, PathBuf};

use adleg::{AdaptiveConfig, Algorithm};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("invalid config: exactly one of `manufactured_u` and `f` must be present")]
    RhsExclusivity,

    #[error("invalid config: theta = {0} must lie strictly between 0 and 1")]
    ThetaOutOfRange(f64),

    #[error("invalid config: tol = {0} must be nonnegative")]
    NegativeTolerance(f64),

    #[error("invalid config: max_iter must be at least 1")]
    ZeroMaxIter,

    #[error("invalid config: coefficient list for {0} is empty")]
    EmptyCoefficients(&'static str),

    #[error("unknown catalog problem `{0}` (run `adleg catalog` for the list)")]
    UnknownProblem(String),

    #[error("unknown named function `{0}`")]
    UnknownFunction(String),

    #[error("invalid config: dual coefficient index {0} is below 2")]
    IndexBelowRange(usize),
}

/// Coefficient description for `nu` or `sigma`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    /// Classical Legendre coefficients, constant term first.
    Coeffs { coeffs: Vec<f64> },
    /// A named function from the built-in table.
    Named { named: String },
}

/// Manufactured exact solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SolutionSpec {
    /// A named function with homogeneous boundary values.
    Named { named: String },
    /// Babuska-Shen coefficients given directly as `[index, value]` pairs.
    Bs { bs: Vec<(usize, f64)> },
}

/// Explicit right-hand side in dual Babuska-Shen coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhsSpec {
    pub bs: Vec<(usize, f64)>,
}

/// Inline problem definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub nu: CoefficientSpec,
    #[serde(default)]
    pub sigma: Option<CoefficientSpec>,
    #[serde(default)]
    pub manufactured_u: Option<SolutionSpec>,
    #[serde(default)]
    pub f: Option<RhsSpec>,
}

/// Either a catalog name or an inline problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemRef {
    Named(String),
    Inline(ProblemConfig),
}

/// Adaptive-driver section of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSection {
    pub algorithm: Algorithm,
    pub theta: f64,
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_coarsening_multiplier")]
    pub coarsening_multiplier: f64,
}

fn default_max_iter() -> usize {
    200
}

fn default_coarsening_multiplier() -> f64 {
    2.0
}

impl AdaptiveSection {
    pub fn to_config(&self) -> AdaptiveConfig<f64> {
        AdaptiveConfig {
            theta: self.theta,
            tol: self.tol,
            max_iter: self.max_iter,
            algorithm: self.algorithm,
            coarsening_multiplier: self.coarsening_multiplier,
        }
    }
}

/// Output paths (both optional; omitted outputs are skipped).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

/// A fully described experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    /// Seed echoed into reports; runs are deterministic regardless.
    #[serde(default)]
    pub seed: u64,
    /// Cap on the reference-solve resolution.
    #[serde(default = "default_k_ref")]
    pub k_ref: usize,
    pub problem: ProblemRef,
    pub adaptive: AdaptiveSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn default_k_ref() -> usize {
    600
}

impl ExperimentConfig {
    /// Parse and validate a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_str_validated(text: &str) -> Result<Self, ConfigError> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Check every invariant that does not need the assembled operator.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.adaptive.theta > 0.0 && self.adaptive.theta < 1.0) {
            return Err(ConfigError::ThetaOutOfRange(self.adaptive.theta));
        }
        if self.adaptive.tol < 0.0 {
            return Err(ConfigError::NegativeTolerance(self.adaptive.tol));
        }
        if self.adaptive.max_iter == 0 {
            return Err(ConfigError::ZeroMaxIter);
        }
        if let ProblemRef::Inline(problem) = &self.problem {
            problem.validate()?;
        }
        Ok(())
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match (&self.manufactured_u, &self.f) {
            (Some(_), None) | (None, Some(_)) => {}
            _ => return Err(ConfigError::RhsExclusivity),
        }
        if let CoefficientSpec::Coeffs { coeffs } = &self.nu {
            if coeffs.is_empty() {
                return Err(ConfigError::EmptyCoefficients("nu"));
            }
        }
        if let Some(f) = &self.f {
            for &(k, _) in &f.bs {
                if k < 2 {
                    return Err(ConfigError::IndexBelowRange(k));
                }
            }
        }
        if let Some(SolutionSpec::Bs { bs }) = &self.manufactured_u {
            for &(k, _) in bs {
                if k < 2 {
                    return Err(ConfigError::IndexBelowRange(k));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [problem]
        nu = { coeffs = [1.0] }
        manufactured_u = { named = "sin-pi" }

        [adaptive]
        algorithm = "adleg"
        theta = 0.5
        tol = 1e-8
    "#;

    #[test]
    fn minimal_config_is_valid() {
        let config = ExperimentConfig::from_str_validated(MINIMAL).unwrap();
        assert_eq!(config.adaptive.max_iter, 200);
        assert_eq!(config.adaptive.coarsening_multiplier, 2.0);
        assert_eq!(config.k_ref, 600);
        match &config.problem {
            ProblemRef::Inline(p) => {
                assert!(p.sigma.is_none());
                assert!(p.f.is_none());
            }
            other => panic!("expected inline problem, got {other:?}"),
        }
    }

    #[test]
    fn both_rhs_and_solution_rejected() {
        let text = r#"
            [problem]
            nu = { coeffs = [1.0] }
            manufactured_u = { named = "sin-pi" }
            f = { bs = [[2, 1.0]] }

            [adaptive]
            algorithm = "adleg"
            theta = 0.5
            tol = 1e-8
        "#;
        assert!(matches!(
            ExperimentConfig::from_str_validated(text),
            Err(ConfigError::RhsExclusivity)
        ));
    }

    #[test]
    fn neither_rhs_nor_solution_rejected() {
        let text = r#"
            [problem]
            nu = { coeffs = [1.0] }

            [adaptive]
            algorithm = "adleg"
            theta = 0.5
            tol = 1e-8
        "#;
        assert!(matches!(
            ExperimentConfig::from_str_validated(text),
            Err(ConfigError::RhsExclusivity)
        ));
    }

    #[test]
    fn theta_bounds_enforced() {
        let text = MINIMAL.replace("theta = 0.5", "theta = 1.5");
        assert!(matches!(
            ExperimentConfig::from_str_validated(&text),
            Err(ConfigError::ThetaOutOfRange(_))
        ));
    }

    #[test]
    fn named_problem_reference_parses() {
        let text = r#"
            problem = "p2"

            [adaptive]
            algorithm = "pc_adleg"
            theta = 0.999
            tol = 1e-8
        "#;
        let config = ExperimentConfig::from_str_validated(text).unwrap();
        assert_eq!(config.problem, ProblemRef::Named("p2".into()));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ExperimentConfig::from_str_validated("theta = ]").unwrap_err();
        let message = err.to_string();
        assert!(message.contains("parse error"), "{message}");
    }
}
