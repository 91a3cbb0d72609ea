//! Cross-module invariant suite with one named pass/fail entry per check.

use anyhow::Result;
use pleijel::constants::first_bessel_zero;
use pleijel::hardy::{hardy_weight, random_test_fields, semibound_constant, verify_hardy};
use pleijel::nodal::{central_cell_bound, count_nodal_domains, ims_check, localize_domains, nodal_bound_report};
use pleijel::partition::{audit_cover, overlap_limit};
use pleijel::spectral::{counting_lower_bound, exact_counting_ho};
use pleijel::weyl::{bracket_sums_with, exponent_fit_with, BracketOptions};
use pleijel::{AnnularLayout, Case, DimensionalConstants, EigenPair, Grid};
use serde::{Deserialize, Serialize};

use crate::config::{is_planar_oscillator, EigenSource, ExperimentConfig};
use crate::pipeline::{bound_partition, config_grid, ladder_levels, ladder_pair, localization_partition, solve_spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub config_hash: String,
    pub checks: Vec<Check>,
}

impl VerifyReport {
    /// No check failed (skipped checks do not count).
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Grid eigenfunctions used by the localisation and IMS checks: the
/// solver's output, or sampled ladder functions for the exact source.
fn check_pairs(cfg: &ExperimentConfig) -> Result<Vec<EigenPair>> {
    match cfg.eigen_source {
        EigenSource::Grid => solve_spectrum(cfg),
        EigenSource::ExactLadder => ladder_levels(cfg).into_iter().take(36).map(|l| ladder_pair(cfg, l)).collect(),
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn record(&mut self, name: &str, outcome: Result<(bool, String)>) {
        let (status, detail) = match outcome {
            Ok((true, d)) => (Status::Pass, d),
            Ok((false, d)) => (Status::Fail, d),
            Err(e) => (Status::Fail, format!("error: {e:#}")),
        };
        self.checks.push(Check { name: name.into(), status, detail });
    }

    fn skip(&mut self, name: &str, why: &str) {
        self.checks.push(Check { name: name.into(), status: Status::Skipped, detail: why.into() });
    }
}

pub const CHECK_NAMES: [&str; 13] = [
    "admissibility",
    "constants",
    "partition_audit",
    "annular_layout",
    "localization",
    "counting_chain",
    "bracketing",
    "exponent_fit",
    "hardy_margins",
    "semibound",
    "central_bound",
    "ims",
    "eigensolver",
];

/// Runs every check; failures are report entries, never errors.
pub fn verify_suite(cfg: &ExperimentConfig) -> VerifyReport {
    let mut suite = Suite { checks: Vec::new() };
    let adm = cfg.admissibility();
    suite.record("admissibility", Ok((adm.ok, format!("margin {:.6}", adm.margin))));
    if !adm.ok {
        for name in &CHECK_NAMES[1..] {
            suite.skip(name, "admissibility failed");
        }
        return VerifyReport { config_hash: cfg.hash(), checks: suite.checks };
    }
    let d = cfg.dimension;
    let spec = &cfg.potential;
    let case_b = spec.case == Case::B;

    suite.record("constants", check_constants(d));
    suite.record("partition_audit", check_partition_audit(cfg));
    if case_b {
        suite.record("annular_layout", check_layout(cfg));
    } else {
        suite.skip("annular_layout", "lattice partition in Case A");
    }

    let pairs = check_pairs(cfg);
    let pairs = match pairs {
        Ok(p) => {
            if cfg.eigen_source == EigenSource::ExactLadder {
                // Closed-form eigenfunctions only approximately satisfy the discrete operator.
                suite.skip("eigensolver", "closed-form eigenfunctions");
            } else {
                let worst = p.iter().map(|q| q.residual).fold(0.0, f64::max);
                suite.record("eigensolver", Ok((worst <= 1e-4, format!("{} eigenpairs, max residual {worst:.3e}", p.len()))));
            }
            Some(p)
        }
        Err(e) => {
            suite.record("eigensolver", Err(e));
            None
        }
    };
    let pairs = pairs.as_deref();
    match pairs {
        Some(p) if !p.is_empty() => {
            suite.record("localization", check_localization(cfg, p));
            suite.record("counting_chain", check_counting(cfg, p));
        }
        _ => {
            suite.skip("localization", "no eigenpairs");
            suite.skip("counting_chain", "no eigenpairs");
        }
    }
    if cfg.lambda_schedule.is_empty() {
        suite.skip("bracketing", "empty lambda_schedule");
    } else {
        suite.record("bracketing", check_bracketing(cfg));
    }
    if cfg.lambda_schedule.len() < 2 {
        suite.skip("exponent_fit", "need at least two levels");
    } else {
        suite.record("exponent_fit", check_fit(cfg));
    }
    if case_b {
        suite.record("hardy_margins", check_hardy(cfg));
        match pairs {
            Some(p) if !p.is_empty() => {
                suite.record("semibound", check_semibound(cfg, p));
                suite.record("central_bound", check_central(cfg, p));
            }
            _ => {
                suite.skip("semibound", "no eigenpairs");
                suite.skip("central_bound", "no eigenpairs");
            }
        }
    } else {
        suite.skip("hardy_margins", "no poles in Case A");
        suite.skip("semibound", "V is bounded below in Case A");
        suite.skip("central_bound", "no central cell in Case A");
    }
    match pairs.and_then(|p| p.first()) {
        Some(ground) => suite.record("ims", check_ims(cfg, ground)),
        None => suite.skip("ims", "no eigenpairs"),
    }
    let order = |c: &Check| CHECK_NAMES.iter().position(|n| *n == c.name).unwrap_or(usize::MAX);
    suite.checks.sort_by_key(order);
    VerifyReport { config_hash: cfg.hash(), checks: suite.checks }
}

fn check_constants(d: usize) -> Result<(bool, String)> {
    let c = DimensionalConstants::new(d)?;
    let mut ok = c.pleijel > 0.0 && c.pleijel < 1.0 && c.faber_krahn > 0.0;
    if d == 2 {
        let j0 = first_bessel_zero(0.0)?;
        ok &= (c.pleijel - 4.0 / (j0 * j0)).abs() < 1e-12;
    }
    Ok((ok, format!("pleijel constant {:.10}, Faber-Krahn constant {:.10}", c.pleijel, c.faber_krahn)))
}

fn reference_level(cfg: &ExperimentConfig) -> f64 {
    cfg.lambda_schedule.first().copied().unwrap_or(match cfg.potential.case {
        Case::A => 10.0,
        Case::B => -0.5,
    })
}

fn check_partition_audit(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let p = localization_partition(cfg, reference_level(cfg))?;
    let audit = audit_cover(&p, 4000, cfg.seeds.audit);
    let m = overlap_limit(cfg.dimension) as usize;
    let ok = audit.max_multiplicity <= m && audit.worst_partition_defect < 1e-9 && audit.worst_gradient_ratio <= 1.0 + 1e-9;
    Ok((
        ok,
        format!(
            "{} cells, multiplicity {} (limit {m}), Σ A² defect {:.2e}, gradient ratio {:.4}",
            p.len(),
            audit.max_multiplicity,
            audit.worst_partition_defect,
            audit.worst_gradient_ratio
        ),
    ))
}

fn check_layout(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let layout = AnnularLayout::with_layers(cfg.inner_radius(), cfg.scale(), 100)?;
    let props = layout.check_properties();
    let (lo, hi) = layout.ratio_bounds();
    let (obs_lo, obs_hi) = layout.observed_ratio_range().unwrap_or((lo, hi));
    let ok = props.is_ok() && obs_lo >= lo * (1.0 - 1e-12) && obs_hi <= hi * (1.0 + 1e-12);
    let detail = match props {
        Ok(()) => format!("100 layers; ratios in [{obs_lo:.4}, {obs_hi:.4}] within [{lo:.4}, {hi:.4}]"),
        Err(e) => e,
    };
    Ok((ok, detail))
}

fn check_localization(cfg: &ExperimentConfig, pairs: &[EigenPair]) -> Result<(bool, String)> {
    let mut violations = 0;
    let mut domains = 0;
    for pair in pairs {
        let dec = count_nodal_domains(&pair.field, cfg.zero_tol)?;
        let audit = localize_domains(&dec, &localization_partition(cfg, pair.lambda)?, &pair.field)?;
        violations += audit.violations.len();
        domains += dec.mu;
    }
    Ok((violations == 0, format!("{domains} domains over {} eigenfunctions, {violations} not localised", pairs.len())))
}

fn check_counting(cfg: &ExperimentConfig, pairs: &[EigenPair]) -> Result<(bool, String)> {
    let spec = &cfg.potential;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for pair in pairs {
        if spec.case == Case::B && pair.lambda >= 0.0 {
            continue;
        }
        let mu = count_nodal_domains(&pair.field, cfg.zero_tol)?.mu as f64;
        let level = if spec.case == Case::A { pair.lambda.max(1.5) } else { pair.lambda };
        let bound = nodal_bound_report(spec, pair.lambda, &bound_partition(cfg, level)?, cfg.dimension, None)?.total;
        worst = worst.max(mu / bound);
        if mu > bound {
            failures.push(format!("λ = {:.4}: μ = {mu} > {bound:.3}", pair.lambda));
        }
    }
    if is_planar_oscillator(spec, cfg.dimension) {
        for &lambda in &cfg.lambda_schedule {
            let lower = counting_lower_bound(spec, lambda, &bound_partition(cfg, lambda)?.cells)?;
            let exact = exact_counting_ho(lambda);
            if lower > exact {
                failures.push(format!("λ = {lambda}: lower count {lower} > {exact}"));
            }
        }
    }
    let detail = if failures.is_empty() { format!("max μ/bound {worst:.4}") } else { failures.join("; ") };
    Ok((failures.is_empty(), detail))
}

fn check_bracketing(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let options = BracketOptions { gradient_term: None, allow_any_scale: cfg.partition.scale.is_some() };
    let mut failures = Vec::new();
    for &lambda in &cfg.lambda_schedule {
        let r = bracket_sums_with(&cfg.potential, lambda, &bound_partition(cfg, lambda)?, cfg.dimension, options)?;
        if !(r.lower_sum <= r.weyl && r.weyl <= r.upper_sum) {
            failures.push(format!("λ = {lambda}: {} <= {} <= {} fails", r.lower_sum, r.weyl, r.upper_sum));
        }
    }
    let detail = if failures.is_empty() { format!("m <= W <= M at {} levels", cfg.lambda_schedule.len()) } else { failures.join("; ") };
    Ok((failures.is_empty(), detail))
}

fn check_fit(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let fit = exponent_fit_with(&cfg.potential, &cfg.lambda_schedule, cfg.dimension, cfg.partition.delta)?;
    let ok = (fit.fitted_slope_weyl - fit.predicted_slope_weyl).abs() <= 0.1 && fit.fitted_slope_defect <= fit.predicted_slope_defect + 0.3;
    Ok((
        ok,
        format!(
            "W slope {:.4} (predicted {:.4}); defect slope {:.4} (predicted at most {:.4})",
            fit.fitted_slope_weyl, fit.predicted_slope_weyl, fit.fitted_slope_defect, fit.predicted_slope_defect
        ),
    ))
}

fn check_hardy(cfg: &ExperimentConfig) -> Result<(bool, String)> {
    let d = cfg.dimension;
    let poles: Vec<Vec<f64>> = cfg.potential.poles.iter().map(|p| p.location.clone()).collect();
    let reach = poles.iter().map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
    let (radius, half_width) = if d == 2 { (Some(2.0 * (reach + 1.0)), 2.0 * (reach + 1.0) + 0.5) } else { (None, reach + 3.0) };
    let n = if d == 2 { 127 } else { 47 };
    let grid = Grid::new(d, half_width, n)?;
    let w = hardy_weight(&poles, d, radius)?;
    let report = verify_hardy(&w, &random_test_fields(grid, &poles, radius, 50, cfg.seeds.hardy))?;
    Ok((report.min_relative_margin >= -1e-3, format!("50 fields, min relative margin {:.3e}", report.min_relative_margin)))
}

fn check_semibound(cfg: &ExperimentConfig, pairs: &[EigenPair]) -> Result<(bool, String)> {
    let c = semibound_constant(&cfg.potential, cfg.dimension)?;
    let lowest = pairs.iter().map(|p| p.lambda).fold(f64::INFINITY, f64::min);
    Ok((lowest >= -c - 0.05, format!("λ_min {lowest:.6} against -{c:.6}")))
}

fn check_central(cfg: &ExperimentConfig, pairs: &[EigenPair]) -> Result<(bool, String)> {
    let p = localization_partition(cfg, reference_level(cfg))?;
    let mu0 = central_cell_bound(&cfg.potential, &p)?;
    let mut same = true;
    for pair in pairs.iter().filter(|p| p.lambda < 0.0) {
        same &= nodal_bound_report(&cfg.potential, pair.lambda, &p, cfg.dimension, None)?.mu0 == mu0;
    }
    Ok((mu0.is_finite() && same, format!("central-cell bound {mu0:.6}, identical across eigenvalues: {same}")))
}

/// Share of the field's squared mass on nodes inside a box.
fn mass_in_box(field: &pleijel::SampledField, lo: &[f64], hi: &[f64]) -> f64 {
    let grid = field.grid;
    let total: f64 = field.values.iter().map(|v| v * v).sum();
    if total == 0.0 {
        return 0.0;
    }
    let h = grid.spacing();
    let ranges: Vec<(usize, usize)> = (0..grid.d)
        .map(|k| {
            let first = ((lo[k] + grid.half_width) / h - 1.0).ceil().max(0.0) as usize;
            let last = (((hi[k] + grid.half_width) / h - 1.0).floor().max(-1.0) + 1.0) as usize;
            (first.min(grid.n), last.min(grid.n))
        })
        .collect();
    if ranges.iter().any(|(a, b)| a >= b) {
        return 0.0;
    }
    let extents: Vec<usize> = ranges.iter().map(|(a, b)| b - a).collect();
    let mut inside = 0.0;
    for mut t in 0..extents.iter().product::<usize>() {
        let idx: Vec<usize> = (0..grid.d)
            .map(|k| {
                let v = ranges[k].0 + t % extents[k];
                t /= extents[k];
                v
            })
            .collect();
        inside += field.values[grid.flat_index(&idx)].powi(2);
    }
    inside / total
}

/// Largest IMS relative error over cells whose support stays four grid
/// spacings inside the box and carries at least `min_mass` of the field's
/// squared mass (the central cell is excluded in Case B). Returns the
/// error and the number of cells checked.
pub fn ims_worst(cfg: &ExperimentConfig, ground: &EigenPair, min_mass: f64) -> Result<(f64, usize)> {
    let grid = config_grid(cfg)?;
    let p = localization_partition(cfg, ground.lambda)?;
    let limit = grid.half_width - 4.0 * grid.spacing();
    let central = p.central_cell();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (i, cell) in p.cells.iter().enumerate() {
        let (lo, hi) = cell.support_bounds();
        if Some(i) == central || !lo.iter().chain(&hi).all(|v| v.abs() < limit) {
            continue;
        }
        if min_mass > 0.0 && mass_in_box(&ground.field, &lo, &hi) < min_mass {
            continue;
        }
        worst = worst.max(ims_check(ground, &p, i, &cfg.potential)?.rel_err);
        count += 1;
    }
    Ok((worst, count))
}

/// Cells below this mass share are dominated by eigensolver noise.
const IMS_MIN_MASS: f64 = 1e-6;

fn check_ims(cfg: &ExperimentConfig, ground: &EigenPair) -> Result<(bool, String)> {
    let (worst, count) = ims_worst(cfg, ground, IMS_MIN_MASS)?;
    Ok((count > 0 && worst < 1e-2, format!("{count} interior cells, max relative error {worst:.3e}")))
}
