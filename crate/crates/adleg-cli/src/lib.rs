//! Experiment front end for the adaptive Legendre-Galerkin solvers: config
//! loading, the built-in problem catalog, run orchestration with theorem
//! verdicts, report serialization, and the acceptance suite.

pub mod acceptance;
pub mod catalog;
pub mod config;
pub mod experiment;
pub mod report;

pub use acceptance::{run_all, run_one, CriterionOutcome};
pub use catalog::{build_problem, catalog, lookup, BuildError, BuiltProblem, CatalogEntry};
pub use config::{
    AdaptiveSection, CoefficientSpec, ConfigError, ExperimentConfig, OutputSection, ProblemConfig,
    ProblemRef, RhsSpec, SolutionSpec,
};
pub use experiment::{emit_outputs, energy_error_quadrature, run_experiment, ExperimentError};
pub use report::{emit_report, ReportFormat, ReportRow, RunReport, TheoremCheck, Totals, Verdict};
