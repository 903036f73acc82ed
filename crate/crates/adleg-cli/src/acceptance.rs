//! Acceptance suite: the ten verification criteria behind `adleg check`.
//!
//! Each criterion is a self-contained function returning pass/fail with a
//! human-readable detail line; tolerances and runtime budgets are pinned
//! here, not configurable. The same functions back the `acceptance`
//! integration test target, so `cargo test` and `adleg check` exercise one
//! code path.

use std::time::{Duration, Instant};

use adleg::{
    b_coeff, best_n_term_errors, doerfler, eval_legendre_with_derivative, fit_coefficient_rate,
    fit_decay, gauss_legendre_rule, legendre_row, n_epsilon, predict_residual_class,
    spectral_norm_sym, BsVector, Role, SparsityParams, StiffnessOperator,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use crate::catalog::{build_problem, lookup};
use crate::config::{AdaptiveSection, ExperimentConfig, OutputSection, ProblemRef};
use crate::experiment::run_experiment;
use crate::report::Verdict;

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub runtime: Duration,
}

impl CriterionOutcome {
    pub fn summary_line(&self) -> String {
        format!(
            "{} criterion {:>2}: {} ({:.2}s) - {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.runtime.as_secs_f64(),
            self.detail
        )
    }
}

type CriterionFn = fn() -> Result<String, String>;

const CRITERIA: [(usize, &str, CriterionFn); 10] = [
    (1, "basis identities", criterion_1),
    (2, "product formula", criterion_2),
    (3, "assembly vs quadrature", criterion_3),
    (4, "decay class", criterion_4),
    (5, "plain-driver contraction", criterion_5),
    (6, "predictor-corrector contraction", criterion_6),
    (7, "coarsening optimality", criterion_7),
    (8, "marking minimality", criterion_8),
    (9, "sparsity toolkit", criterion_9),
    (10, "class propagation", criterion_10),
];

/// Run every criterion (optionally filtered by substring of the name or by
/// id) and collect outcomes.
pub fn run_all(filter: Option<&str>) -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .filter(|(id, name, _)| match filter {
            None => true,
            Some(f) => name.contains(f) || id.to_string() == f,
        })
        .map(|&(id, name, body)| {
            let started = Instant::now();
            let result = body();
            let runtime = started.elapsed();
            let (passed, detail) = match result {
                Ok(detail) => (true, detail),
                Err(detail) => (false, detail),
            };
            CriterionOutcome {
                id,
                name,
                passed,
                detail,
                runtime,
            }
        })
        .collect()
}

pub fn run_one(id: usize) -> CriterionOutcome {
    let outcomes = run_all(Some(&id.to_string()));
    outcomes
        .into_iter()
        .next()
        .unwrap_or_else(|| panic!("no criterion with id {id}"))
}

fn budget(started: Instant, limit: Duration, label: &str) -> Result<(), String> {
    let elapsed = started.elapsed();
    if elapsed > limit {
        Err(format!(
            "{label} took {:.2}s, over the {:.0}s budget",
            elapsed.as_secs_f64(),
            limit.as_secs_f64()
        ))
    } else {
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// 1. Basis identities
// ---------------------------------------------------------------------------

fn criterion_1() -> Result<String, String> {
    let started = Instant::now();
    let n = 100usize;
    let rule = gauss_legendre_rule::<f64>(n + 2).map_err(|e| e.to_string())?;
    // per-node tables of L_k and L_k'
    let mut values = Vec::new();
    let mut derivs = Vec::new();
    for &x in rule.nodes() {
        values.push(legendre_row(n, x));
        let row: Vec<f64> = (0..=n)
            .map(|k| eval_legendre_with_derivative(k, x).1)
            .collect();
        derivs.push(row);
    }
    let mut worst_h1 = 0.0f64;
    let mut worst_l2 = 0.0f64;
    for k in 2..=n {
        for m in 2..=k {
            let mut h1 = 0.0;
            let mut l2 = 0.0;
            for (j, &w) in rule.weights().iter().enumerate() {
                let scale_k = ((4 * k - 2) as f64).sqrt();
                let scale_m = ((4 * m - 2) as f64).sqrt();
                let dk = (derivs[j][k - 2] - derivs[j][k]) / scale_k;
                let dm = (derivs[j][m - 2] - derivs[j][m]) / scale_m;
                let ek = (values[j][k - 2] - values[j][k]) / scale_k;
                let em = (values[j][m - 2] - values[j][m]) / scale_m;
                h1 += w * dk * dm;
                l2 += w * ek * em;
            }
            let h1_expected = if k == m { 1.0 } else { 0.0 };
            worst_h1 = worst_h1.max((h1 - h1_expected).abs());
            let l2_expected = if k == m {
                2.0 / (((2 * k - 3) * (2 * k + 1)) as f64)
            } else if k == m + 2 {
                -1.0 / ((2 * m + 1) as f64 * (((2 * m - 1) * (2 * m + 3)) as f64).sqrt())
            } else {
                0.0
            };
            worst_l2 = worst_l2.max((l2 - l2_expected).abs());
        }
    }
    if worst_h1 >= 1e-11 {
        return Err(format!("H1 Gram deviation {worst_h1:.3e} >= 1e-11"));
    }
    if worst_l2 >= 1e-12 {
        return Err(format!("L2 Gram deviation {worst_l2:.3e} >= 1e-12"));
    }
    // closed-form spot values at k = 2
    let spot_diag = 2.0 / 5.0;
    let spot_off = -1.0 / (5.0 * 21.0f64.sqrt());
    let sigma_one = adleg::LegendreSeries::constant(1.0f64);
    let d22: f64 = adleg::entry_reaction(2, 2, &sigma_one);
    let d24: f64 = adleg::entry_reaction(2, 4, &sigma_one);
    if (d22 - spot_diag).abs() >= 1e-12 || (d24 - spot_off).abs() >= 1e-12 {
        return Err(format!(
            "spot mass values off: {d22} vs {spot_diag}, {d24} vs {spot_off}"
        ));
    }
    budget(started, Duration::from_secs(5), "basis identities")?;
    Ok(format!(
        "H1 Gram within {worst_h1:.2e}, L2 Gram within {worst_l2:.2e} for k <= {n}"
    ))
}

// ---------------------------------------------------------------------------
// 2. Product formula
// ---------------------------------------------------------------------------

fn criterion_2() -> Result<String, String> {
    let started = Instant::now();
    let rule = gauss_legendre_rule::<f64>(100).map_err(|e| e.to_string())?;
    let rows: Vec<Vec<f64>> = rule.nodes().iter().map(|&x| legendre_row(80, x)).collect();
    let mut worst = 0.0f64;
    for m in 0..=40usize {
        for n in 0..=40usize {
            let coeffs: Vec<f64> = (0..=m.min(n))
                .map(|r| adleg::adams_product_coeff(m, n, r).expect("r in range"))
                .collect();
            for row in &rows {
                let mut sum = 0.0;
                for (r, &a) in coeffs.iter().enumerate() {
                    sum += a * row[m + n - 2 * r];
                }
                worst = worst.max((sum - row[m] * row[n]).abs());
            }
        }
    }
    if worst > 1e-10 {
        return Err(format!("pointwise product error {worst:.3e} > 1e-10"));
    }
    let mut b_max = 0.0f64;
    for m in 0..=200usize {
        for n in 0..=200usize {
            for r in 0..=m.min(n) {
                let b: f64 = b_coeff(m, n, r).expect("r in range");
                b_max = b_max.max(b);
            }
        }
    }
    if b_max > 10.0 {
        return Err(format!("B coefficient {b_max:.3} exceeds 10"));
    }
    budget(started, Duration::from_secs(30), "product formula")?;
    Ok(format!(
        "pointwise error {worst:.2e} (m,n <= 40); max B = {b_max:.3} (m,n <= 200)"
    ))
}

// ---------------------------------------------------------------------------
// 3. Assembly vs quadrature
// ---------------------------------------------------------------------------

fn criterion_3() -> Result<String, String> {
    let started = Instant::now();
    let mut detail = String::new();
    for name in ["p2", "p3"] {
        let built =
            build_problem(&lookup(name).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let spec = built.spec;
        let top = 60usize;
        let rule = gauss_legendre_rule::<f64>(160).map_err(|e| e.to_string())?;
        let mut values = Vec::new();
        let mut derivs = Vec::new();
        let mut nu_vals = Vec::new();
        let mut sigma_vals = Vec::new();
        let has_sigma = spec.sigma().degree().is_some();
        for &x in rule.nodes() {
            values.push(legendre_row(top, x));
            derivs.push(
                (0..=top)
                    .map(|k| eval_legendre_with_derivative(k, x).1)
                    .collect::<Vec<f64>>(),
            );
            nu_vals.push(spec.nu().eval(x));
            sigma_vals.push(if has_sigma { spec.sigma().eval(x) } else { 0.0 });
        }
        let mut worst = 0.0f64;
        for m in 2..=top {
            for n in 2..=m {
                let formula = adleg::entry_diffusion(m, n, spec.nu())
                    + adleg::entry_reaction(m, n, spec.sigma());
                let mut quad = 0.0;
                for (j, &w) in rule.weights().iter().enumerate() {
                    let sm = ((4 * m - 2) as f64).sqrt();
                    let sn = ((4 * n - 2) as f64).sqrt();
                    let dm = (derivs[j][m - 2] - derivs[j][m]) / sm;
                    let dn = (derivs[j][n - 2] - derivs[j][n]) / sn;
                    let em = (values[j][m - 2] - values[j][m]) / sm;
                    let en = (values[j][n - 2] - values[j][n]) / sn;
                    quad += w * (nu_vals[j] * dm * dn + sigma_vals[j] * em * en);
                }
                worst = worst.max((formula - quad).abs());
            }
        }
        if worst > 1e-10 {
            return Err(format!(
                "{name}: assembly vs quadrature error {worst:.3e} > 1e-10"
            ));
        }
        detail.push_str(&format!("{name}: {worst:.2e}; "));
    }
    budget(started, Duration::from_secs(60), "assembly vs quadrature")?;
    Ok(format!(
        "max |formula - quadrature| over 60x60 blocks: {detail}"
    ))
}

// ---------------------------------------------------------------------------
// 4. Decay class
// ---------------------------------------------------------------------------

fn criterion_4() -> Result<String, String> {
    let built =
        build_problem(&lookup("p3").map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (nu_rate, _) = fit_coefficient_rate(built.spec.nu())
        .ok_or("could not fit the coefficient decay rate of nu")?;
    let op = StiffnessOperator::new(built.spec).map_err(|e| e.to_string())?;
    let eta_l = op.decay().eta();
    if eta_l < 0.9 * nu_rate {
        return Err(format!(
            "fitted off-diagonal rate {eta_l:.4} below 0.9 * nu rate {nu_rate:.4}"
        ));
    }
    // truncation error on a 60x60 block decays at >= 0.9 eta_L
    let size = 60usize;
    let block = op.dense_block(2, size);
    let mut gaps = Vec::new();
    for band in 0..22usize {
        let gap = spectral_norm_sym(&block.sub(&op.truncated(band).dense_block(2, size)));
        if gap > 1e-13 {
            gaps.push((band as f64, gap.ln()));
        } else {
            break;
        }
    }
    if gaps.len() < 4 {
        return Err("too few usable truncation gaps to fit a rate".into());
    }
    let n = gaps.len() as f64;
    let sx: f64 = gaps.iter().map(|g| g.0).sum();
    let sy: f64 = gaps.iter().map(|g| g.1).sum();
    let sxx: f64 = gaps.iter().map(|g| g.0 * g.0).sum();
    let sxy: f64 = gaps.iter().map(|g| g.0 * g.1).sum();
    let rate = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
    if rate < 0.9 * eta_l {
        return Err(format!(
            "truncation decay rate {rate:.4} below 0.9 * eta_L = {:.4}",
            0.9 * eta_l
        ));
    }
    Ok(format!(
        "nu rate {nu_rate:.3}, eta_L {eta_l:.3}, truncation rate {rate:.3}"
    ))
}

// ---------------------------------------------------------------------------
// 5. Plain-driver contraction
// ---------------------------------------------------------------------------

fn experiment(problem: &str, section: AdaptiveSection) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(format!("acceptance-{problem}")),
        seed: 0,
        k_ref: 600,
        problem: ProblemRef::Named(problem.into()),
        adaptive: section,
        output: OutputSection::default(),
    }
}

fn criterion_5() -> Result<String, String> {
    let mut detail = String::new();
    for problem in ["p1", "p2", "p3"] {
        let alpha_lower = {
            let built = build_problem(&lookup(problem).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            built.spec.alpha_lower()
        };
        for theta in [0.3, 0.5, 0.8] {
            let started = Instant::now();
            let config = experiment(
                problem,
                AdaptiveSection {
                    algorithm: adleg::Algorithm::Adleg,
                    theta,
                    // residual tolerance sized so the final H1 error is 1e-9
                    tol: 1e-9 * alpha_lower,
                    max_iter: 500,
                    coarsening_multiplier: 2.0,
                },
            );
            let report = run_experiment(&config).map_err(|e| format!("{problem}: {e}"))?;
            if report.totals.truncated {
                return Err(format!(
                    "{problem} theta={theta}: run truncated at max_iter"
                ));
            }
            let contraction = report
                .checks
                .iter()
                .find(|c| c.name == "contraction")
                .expect("check always present");
            if contraction.verdict == Verdict::Fail {
                return Err(format!(
                    "{problem} theta={theta}: contraction failed ({})",
                    contraction.detail
                ));
            }
            budget(
                started,
                Duration::from_secs(60),
                &format!("{problem} theta={theta}"),
            )?;
            detail.push_str(&format!(
                "{problem}/t{theta}: {} iters, margin {:.2e}; ",
                report.totals.iterations, contraction.margin
            ));
        }
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 6. Predictor-corrector contraction
// ---------------------------------------------------------------------------

fn criterion_6() -> Result<String, String> {
    let mut detail = String::new();
    // theta = 0.999 for p1/p3; p2 needs theta with 6 (a^*/a_*) sqrt(1-t^2)
    // at or below 0.9 given its larger constant ratio
    for (problem, theta) in [("p1", 0.999), ("p2", 0.9993), ("p3", 0.999)] {
        let alpha_lower = {
            let built = build_problem(&lookup(problem).map_err(|e| e.to_string())?)
                .map_err(|e| e.to_string())?;
            built.spec.alpha_lower()
        };
        let config = experiment(
            problem,
            AdaptiveSection {
                algorithm: adleg::Algorithm::PcAdleg,
                theta,
                tol: 1e-8 * alpha_lower,
                max_iter: 500,
                coarsening_multiplier: 2.0,
            },
        );
        let report = run_experiment(&config).map_err(|e| format!("{problem}: {e}"))?;
        if report.rho_bound >= 1.0 {
            return Err(format!("{problem}: rho = {} not below 1", report.rho_bound));
        }
        if problem == "p2" && report.rho_bound > 0.9 {
            return Err(format!(
                "p2: rho = {} above the 0.9 target for its theta",
                report.rho_bound
            ));
        }
        for name in ["contraction", "predictor_bound"] {
            let check = report
                .checks
                .iter()
                .find(|c| c.name == name)
                .expect("check always present");
            if check.verdict == Verdict::Fail {
                return Err(format!("{problem}: {name} failed ({})", check.detail));
            }
        }
        detail.push_str(&format!(
            "{problem}: rho {:.3}, {} iters; ",
            report.rho_bound, report.totals.iterations
        ));
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 7. Coarsening optimality
// ---------------------------------------------------------------------------

fn criterion_7() -> Result<String, String> {
    // (a) brute-force minimal cardinality over 1000 randomized small vectors
    let mut rng = StdRng::seed_from_u64(20120624);
    for trial in 0..1000 {
        let support = rng.random_range(1..=8usize);
        let mut w = BsVector::<f64>::zero(Role::Primal);
        let mut keys = Vec::new();
        while keys.len() < support {
            let k = rng.random_range(2..30usize);
            if w.get(k) == 0.0 {
                let value = 10f64.powf(rng.random_range(-3.0..1.0));
                w.set(k, value).expect("k >= 2");
                keys.push(k);
            }
        }
        let eps = rng.random_range(0.05..0.45) * w.stored_norm();
        let kept = adleg::coarse(&w, eps);
        let budget_sq = 4.0 * eps * eps;
        let mut best = usize::MAX;
        for mask in 0u32..(1 << keys.len()) {
            let dropped: f64 = keys
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask & (1 << bit) == 0)
                .map(|(_, &k)| w.get(k).powi(2))
                .sum();
            if dropped <= budget_sq {
                best = best.min(mask.count_ones() as usize);
            }
        }
        if kept.len() != best {
            return Err(format!(
                "trial {trial}: greedy kept {} but minimal is {best}",
                kept.len()
            ));
        }
    }

    // (b) dof growth on p1 under the predictor-corrector driver
    let config = experiment(
        "p1",
        AdaptiveSection {
            algorithm: adleg::Algorithm::PcAdleg,
            theta: 0.999,
            tol: 1e-9,
            max_iter: 500,
            coarsening_multiplier: 2.0,
        },
    );
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    let slope = report
        .checks
        .iter()
        .find(|c| c.name == "cardinality_slope")
        .expect("check always present");
    if slope.verdict == Verdict::Fail {
        return Err(format!("cardinality slope failed ({})", slope.detail));
    }
    if slope.verdict == Verdict::NotApplicable {
        return Err(format!(
            "cardinality slope not applicable on p1 ({})",
            slope.detail
        ));
    }
    Ok(format!(
        "1000 brute-force trials minimal; p1 slope check: {}",
        slope.detail
    ))
}

// ---------------------------------------------------------------------------
// 8. Marking minimality
// ---------------------------------------------------------------------------

fn criterion_8() -> Result<String, String> {
    let mut rng = StdRng::seed_from_u64(777);
    for trial in 0..1000 {
        let support = rng.random_range(1..=12usize);
        let mut r = BsVector::<f64>::zero(Role::Dual);
        let mut keys = Vec::new();
        while keys.len() < support {
            let k = rng.random_range(2..60usize);
            if r.get(k) == 0.0 {
                let value = 10f64.powf(rng.random_range(-3.0..1.0))
                    * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                r.set(k, value).expect("k >= 2");
                keys.push(k);
            }
        }
        let theta: f64 = rng.random_range(0.05..0.95);
        let set = doerfler(&r, theta).map_err(|e| format!("trial {trial}: {e}"))?;
        let target = theta * theta * r.norm_interval().1.powi(2);
        let captured: f64 = set.iter().map(|k| r.get(k).powi(2)).sum();
        if captured < target {
            return Err(format!(
                "trial {trial}: capture {captured} below target {target}"
            ));
        }
        // removing any selected index breaks the inequality
        for k in set.iter() {
            if captured - r.get(k).powi(2) >= target {
                return Err(format!(
                    "trial {trial}: removing index {k} keeps the capture, set not minimal"
                ));
            }
        }
        // exhaustive minimal cardinality agrees with the sort-prefix result
        let mut best = usize::MAX;
        for mask in 0u32..(1 << keys.len()) {
            let sum: f64 = keys
                .iter()
                .enumerate()
                .filter(|(bit, _)| mask & (1 << bit) != 0)
                .map(|(_, &k)| r.get(k).powi(2))
                .sum();
            if sum >= target {
                best = best.min(mask.count_ones() as usize);
            }
        }
        if set.len() != best {
            return Err(format!(
                "trial {trial}: greedy used {} indices, minimum is {best}",
                set.len()
            ));
        }
    }
    Ok("1000 randomized trials: capture, irredundancy and minimal cardinality all hold".into())
}

// ---------------------------------------------------------------------------
// 9. Sparsity toolkit
// ---------------------------------------------------------------------------

fn criterion_9() -> Result<String, String> {
    // E_N against brute-force subset minimization
    let mut rng = StdRng::seed_from_u64(4242);
    for trial in 0..200 {
        let support = rng.random_range(1..=10usize);
        let mut v = BsVector::<f64>::zero(Role::Primal);
        let mut keys = Vec::new();
        while keys.len() < support {
            let k = rng.random_range(2..40usize);
            if v.get(k) == 0.0 {
                v.set(k, rng.random_range(-2.0..2.0f64)).expect("k >= 2");
                keys.push(k);
            }
        }
        keys.retain(|&k| v.get(k) != 0.0);
        let errors = best_n_term_errors(&v);
        for (n, error) in errors.iter().enumerate() {
            let mut best = f64::INFINITY;
            for mask in 0u32..(1 << keys.len()) {
                if mask.count_ones() as usize != n {
                    continue;
                }
                let dropped: f64 = keys
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask & (1 << bit) == 0)
                    .map(|(_, &k)| v.get(k).powi(2))
                    .sum();
                best = best.min(dropped.sqrt());
            }
            if (error.0 - best).abs() > 1e-10 {
                return Err(format!(
                    "trial {trial}: E_{n} = {} vs brute force {best}",
                    error.0
                ));
            }
        }
    }

    // n_epsilon dominates the true minimal N on geometric sequences
    for trial in 0..50 {
        let ratio: f64 = rng.random_range(0.2..0.9);
        let eta = -ratio.ln();
        let mut v = BsVector::<f64>::zero(Role::Primal);
        let mut k = 2usize;
        while ratio.powi(k as i32) > 1e-14 {
            v.set(k, ratio.powi(k as i32)).expect("k >= 2");
            k += 1;
        }
        let params = fit_decay(&v).map_err(|e| format!("geometric fit failed: {e}"))?;
        if (params.eta - eta).abs() > 0.1 * eta {
            return Err(format!(
                "trial {trial}: geometric rate {eta:.3} fitted as {:.3}",
                params.eta
            ));
        }
        let errors = best_n_term_errors(&v);
        for exponent in 1..6 {
            let eps = (-(exponent as f64)).exp() * params.class_norm;
            let bound = n_epsilon(eps, &params).map_err(|e| e.to_string())?;
            let actual = errors
                .iter()
                .position(|&(_, hi)| hi <= eps)
                .expect("errors reach the tail bound");
            if actual > bound {
                return Err(format!(
                    "trial {trial}: true minimal N {actual} exceeds bound {bound}"
                ));
            }
        }
    }

    // decay-fit recovery on synthetic e^{-eta k^t}
    for &eta in &[0.5, 1.0, 2.0] {
        for &t in &[0.5, 1.0] {
            let mut v = BsVector::<f64>::zero(Role::Primal);
            let mut k = 2usize;
            loop {
                let value = (-eta * (k as f64).powf(t)).exp();
                if value < 1e-14 || k > 5000 {
                    break;
                }
                v.set(k, value).expect("k >= 2");
                k += 1;
            }
            let params = fit_decay(&v).map_err(|e| format!("fit ({eta}, {t}): {e}"))?;
            if (params.eta - eta).abs() > 0.1 * eta {
                return Err(format!(
                    "eta {eta} (t = {t}) recovered as {:.4}, off by more than 10%",
                    params.eta
                ));
            }
            if (params.t - t).abs() > 0.05 {
                return Err(format!("t {t} (eta = {eta}) recovered as {:.3}", params.t));
            }
        }
    }
    Ok("E_N brute-force, N_eps bound and (eta, t) recovery all within tolerance".into())
}

// ---------------------------------------------------------------------------
// 10. Class propagation
// ---------------------------------------------------------------------------

fn criterion_10() -> Result<String, String> {
    // closed form at t = 1
    let params = SparsityParams {
        eta: 1.0,
        t: 1.0,
        class_norm: 1.0,
    };
    let out = predict_residual_class(&params);
    if out.t != 0.25 {
        return Err(format!("t_bar = {} instead of exactly 0.25", out.t));
    }
    let zeta = |t: f64| ((1.0 + t) / 2.0f64).powf(t / (1.0 + t));
    let product = 0.5f64.powf(1.0 / 3.0) * zeta(1.0 / 3.0) * zeta(0.5) * zeta(1.0);
    if (out.eta / params.eta - product).abs() > 1e-6 {
        return Err(format!(
            "eta_bar/eta = {} differs from the independent product {product}",
            out.eta / params.eta
        ));
    }

    // residual-class conformance on p3 under the predictor-corrector driver
    let config = experiment(
        "p3",
        AdaptiveSection {
            algorithm: adleg::Algorithm::PcAdleg,
            theta: 0.999,
            tol: 1e-8 / 3.0,
            max_iter: 500,
            coarsening_multiplier: 2.0,
        },
    );
    let report = run_experiment(&config).map_err(|e| e.to_string())?;
    let check = report
        .checks
        .iter()
        .find(|c| c.name == "residual_class")
        .expect("check always present");
    if check.verdict == Verdict::Fail {
        return Err(format!(
            "residual class conformance failed ({})",
            check.detail
        ));
    }
    if check.verdict == Verdict::NotApplicable {
        return Err(format!(
            "residual class check not applicable ({})",
            check.detail
        ));
    }
    Ok(format!(
        "eta_bar/eta = {product:.6}; p3 conformance: {}",
        check.detail
    ))
}
