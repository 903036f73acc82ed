//! Run reports: per-iteration rows with measured errors, theorem verdicts
//! with margins, CSV (plot-ready, fixed column order) and a lossless JSON
//! mirror.

use std::io::Write;
use std::path::Path;

use adleg::SparsityParams;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

/// Serialization formats for a run report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Plot-ready CSV, one row per iteration, fixed column order.
    Csv,
    /// Lossless JSON mirror of the full report.
    Structured,
}

/// Write a report to `path` in the requested format.
pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> std::io::Result<()> {
    match format {
        ReportFormat::Csv => report.write_csv(path),
        ReportFormat::Structured => report.write_json(path),
    }
}

/// Tri-state verdict with the measured margin retained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    NotApplicable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => f.write_str("pass"),
            Verdict::Fail => f.write_str("fail"),
            Verdict::NotApplicable => f.write_str("not-applicable"),
        }
    }
}

/// One named theorem check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremCheck {
    pub name: String,
    pub verdict: Verdict,
    /// Signed margin: nonnegative means the bound held with that much slack.
    pub margin: f64,
    pub detail: String,
}

/// One adaptive iteration with certified intervals and measured quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub n: usize,
    pub card_lambda: usize,
    /// Intermediate (enriched) cardinality; `None` for the plain driver.
    pub card_lambda_hat: Option<usize>,
    pub r_lo: f64,
    pub r_hi: f64,
    pub err_h1_lo: f64,
    pub err_h1_hi: f64,
    pub err_energy_lo: f64,
    pub err_energy_hi: f64,
    /// Measured energy error against the reference solution.
    pub err_energy_measured: f64,
    /// Measured per-iteration contraction ratio.
    pub ratio_energy: f64,
    pub bound_rho: f64,
    pub verdict: Verdict,
    pub j_theta: usize,
    pub marked: usize,
    pub wall_ms: f64,
}

/// Aggregate totals of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub iterations: usize,
    pub final_residual_lo: f64,
    pub final_residual_hi: f64,
    pub final_dofs: usize,
    pub total_wall_ms: f64,
    /// Set when the run stopped early (`max_iter`) and the report only
    /// covers the completed iterations.
    pub truncated: bool,
}

/// Full record of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub rho_bound: f64,
    pub j_theta: Option<usize>,
    pub f_norm_lo: f64,
    pub f_norm_hi: f64,
    pub rows: Vec<ReportRow>,
    pub u_ref_fit: Option<SparsityParams<f64>>,
    pub residual_fits: Vec<Option<SparsityParams<f64>>>,
    pub checks: Vec<TheoremCheck>,
    pub totals: Totals,
}

impl RunReport {
    /// True when no theorem check failed (not-applicable does not fail).
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
            && self.rows.iter().all(|r| r.verdict != Verdict::Fail)
    }

    /// Fixed-column CSV, one row per iteration. Floats print in shortest
    /// round-trip form with a '.' separator, so identical runs produce
    /// byte-identical files.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "n,card_lambda,card_lambda_hat,r_lo,r_hi,err_h1_lo,err_h1_hi,\
             err_energy_lo,err_energy_hi,ratio_energy,bound_rho,verdict\n",
        );
        for row in &self.rows {
            let hat = row
                .card_lambda_hat
                .map(|v| v.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{}\n",
                row.n,
                row.card_lambda,
                hat,
                row.r_lo,
                row.r_hi,
                row.err_h1_lo,
                row.err_h1_hi,
                row.err_energy_lo,
                row.err_energy_hi,
                row.ratio_energy,
                row.bound_rho,
                row.verdict,
            ));
        }
        out
    }

    /// Lossless JSON mirror (stable field order from the struct layout).
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_json().as_bytes())
    }

    /// Copy with wall-clock fields zeroed, for determinism comparisons.
    pub fn with_timings_zeroed(&self) -> Self {
        let mut out = self.clone();
        for row in &mut out.rows {
            row.wall_ms = 0.0;
        }
        out.totals.total_wall_ms = 0.0;
        out
    }
}
