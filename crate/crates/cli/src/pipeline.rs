//! End-to-end Pleijel experiment: eigenpairs, nodal counts, bounds and the
//! ratio report.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use pleijel::nodal::{count_nodal_domains, nodal_upper_bound};
use pleijel::partition::{build_annular_layout, build_lattice_partition, tile_annuli};
use pleijel::spectral::{
    assemble_hamiltonian, counting_lower_bound, exact_counting_ho, ho_ladder, ho_reference, lowest_eigenpairs_with, AssemblyOptions,
    EigenOptions, HoLevel,
};
use pleijel::weyl::{bracketing_partition_scaled, weyl_integral};
use pleijel::{Case, DimensionalConstants, EigenPair, Grid, PartitionOfUnity};
use serde::{Deserialize, Serialize};

use crate::config::{is_planar_oscillator, require_admissible, EigenSource, ExperimentConfig};
use crate::svg::ratio_scatter;

/// One eigenvalue with its nodal count; the sampled eigenfunction is kept
/// only for grid sources.
#[derive(Debug, Clone)]
pub struct Eigenvalue {
    pub n: usize,
    pub lambda: f64,
    pub mu: u64,
    pub residual: Option<f64>,
    pub level: Option<HoLevel>,
    pub pair: Option<EigenPair>,
}

/// One CSV row of the Pleijel report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleijelRow {
    pub config_hash: String,
    pub n: usize,
    pub lambda: f64,
    pub mu: u64,
    pub n_lower: Option<u64>,
    /// `#{λ_k <= λ_n}`.
    pub n_exact: Option<u64>,
    /// `#{λ_k < λ_n}`.
    pub n_exact_strict: Option<u64>,
    pub bound: Option<f64>,
    pub weyl: Option<f64>,
    pub mu_over_n: f64,
    /// `μ / N(λ_n)` with the exact count when known, the lower bound otherwise.
    pub mu_over_count: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config_hash: String,
    pub dimension: usize,
    pub eigen_source: EigenSource,
    pub forced: bool,
    pub admissible: bool,
    /// Bound columns are skipped for forced runs: the partitions need
    /// admissible exponents.
    pub bounds_computed: bool,
    pub admissibility_margin: f64,
    pub rows: usize,
    pub n_min: usize,
    pub pleijel_constant: f64,
    pub pleijel_constant_printed: f64,
    /// Largest `μ/N(λ_n)` over `n >= n_min`.
    pub max_ratio: Option<f64>,
    pub max_ratio_n: Option<usize>,
    /// Largest `μ/n` over `n >= n_min`.
    pub max_mu_over_n: Option<f64>,
    pub max_mu_over_n_n: Option<usize>,
    /// Largest `μ / bound` over all rows.
    pub max_bound_ratio: Option<f64>,
    /// Rows with `μ > bound`.
    pub bound_violations: usize,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

/// Grid of the configuration.
pub fn config_grid(cfg: &ExperimentConfig) -> Result<Grid> {
    Ok(Grid::new(cfg.dimension, cfg.grid.half_width, cfg.grid.n)?)
}

/// Lowest `n_eigenpairs` eigenpairs of the grid operator.
pub fn solve_spectrum(cfg: &ExperimentConfig) -> Result<Vec<EigenPair>> {
    if cfg.n_eigenpairs == 0 {
        return Ok(Vec::new());
    }
    let op = assemble_hamiltonian(&cfg.potential, config_grid(cfg)?, &AssemblyOptions::default())?;
    let opts = EigenOptions { tol: cfg.solver_tol, seed: cfg.seeds.solver, ..EigenOptions::default() };
    lowest_eigenpairs_with(&op, cfg.n_eigenpairs, &opts).context("eigensolver")
}

/// Ladder levels requested by the configuration, in ladder order.
pub fn ladder_levels(cfg: &ExperimentConfig) -> Vec<HoLevel> {
    match cfg.lambda_max {
        // exclusive cut-off: 60 gives the 435 levels below it
        Some(max) => ho_ladder(max),
        None => {
            let mut shells = 0usize;
            while shells * (shells + 1) / 2 < cfg.n_eigenpairs {
                shells += 1;
            }
            let mut levels = ho_ladder(2.0 * shells as f64 + 1.0);
            levels.truncate(cfg.n_eigenpairs);
            levels
        }
    }
}

/// Eigenvalues and nodal counts from the configured source.
pub fn eigenvalues(cfg: &ExperimentConfig) -> Result<Vec<Eigenvalue>> {
    match cfg.eigen_source {
        EigenSource::ExactLadder => Ok(ladder_levels(cfg)
            .into_iter()
            .enumerate()
            .map(|(i, level)| Eigenvalue { n: i + 1, lambda: level.lambda(), mu: level.nodal_count(), residual: None, level: Some(level), pair: None })
            .collect()),
        EigenSource::Grid => solve_spectrum(cfg)?
            .into_iter()
            .enumerate()
            .map(|(i, pair)| {
                let dec = count_nodal_domains(&pair.field, cfg.zero_tol)?;
                Ok(Eigenvalue { n: i + 1, lambda: pair.lambda, mu: dec.mu as u64, residual: Some(pair.residual), level: None, pair: Some(pair) })
            })
            .collect(),
    }
}

/// Sampled closed-form oscillator eigenfunction for a ladder level.
pub fn ladder_pair(cfg: &ExperimentConfig, level: HoLevel) -> Result<EigenPair> {
    Ok(ho_reference(level.k1, level.k2, config_grid(cfg)?)?)
}

/// Inclusive and strict oscillator counts at the level nearest `λ`.
fn oscillator_counts(lambda: f64) -> Option<(u64, u64)> {
    let level = 2.0 * (lambda / 2.0).round();
    if level < 2.0 || (lambda - level).abs() > 0.25 {
        return None;
    }
    // levels are spaced by 2
    Some((exact_counting_ho(level + 1.0), exact_counting_ho(level)))
}

/// Cover used for nodal localisation at level `λ`: the λ-matched lattice
/// over the grid box (Case A) or the annuli reaching its corners (Case B).
pub fn localization_partition(cfg: &ExperimentConfig, lambda: f64) -> Result<PartitionOfUnity> {
    let reach = cfg.grid.half_width * (cfg.dimension as f64).sqrt();
    Ok(match cfg.potential.case {
        Case::A => build_lattice_partition(lambda.max(1.5), cfg.scale(), cfg.partition.delta, reach, cfg.dimension)?,
        Case::B => tile_annuli(&build_annular_layout(cfg.inner_radius(), cfg.scale(), reach)?, cfg.dimension, cfg.partition.delta)?,
    })
}

/// Cover on which the nodal bound, lower count and bracketing sums are
/// evaluated at level `λ`.
pub fn bound_partition(cfg: &ExperimentConfig, lambda: f64) -> Result<PartitionOfUnity> {
    Ok(bracketing_partition_scaled(&cfg.potential, lambda, cfg.dimension, cfg.partition.delta, cfg.scale(), cfg.inner_radius())?)
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    n_lower: u64,
    bound: f64,
    weyl: f64,
}

fn bounds_at(cfg: &ExperimentConfig, lambda: f64) -> Result<Option<Bounds>> {
    let usable = match cfg.potential.case {
        Case::A => lambda > 1.0,
        Case::B => lambda < 0.0,
    };
    if !usable {
        return Ok(None);
    }
    let spec = &cfg.potential;
    let p = bound_partition(cfg, lambda)?;
    Ok(Some(Bounds {
        n_lower: counting_lower_bound(spec, lambda, &p.cells)?,
        bound: nodal_upper_bound(spec, lambda, &p, cfg.dimension, None)?,
        weyl: weyl_integral(spec, lambda, cfg.dimension)?,
    }))
}

/// Per-eigenvalue rows of the report; bound columns are filled when
/// `with_bounds` is set.
pub fn pleijel_rows(cfg: &ExperimentConfig, values: &[Eigenvalue], with_bounds: bool) -> Result<Vec<PleijelRow>> {
    let hash = cfg.hash();
    let oscillator = is_planar_oscillator(&cfg.potential, cfg.dimension);
    let mut cache: HashMap<u64, Option<Bounds>> = HashMap::new();
    values
        .iter()
        .map(|v| {
            let bounds = if with_bounds {
                match cache.get(&v.lambda.to_bits()) {
                    Some(b) => *b,
                    None => {
                        let b = bounds_at(cfg, v.lambda).with_context(|| format!("bounds at λ = {}", v.lambda))?;
                        cache.insert(v.lambda.to_bits(), b);
                        b
                    }
                }
            } else {
                None
            };
            let counts = if oscillator { oscillator_counts(v.lambda) } else { None };
            let n_exact = counts.map(|c| c.0);
            let n_lower = bounds.map(|b| b.n_lower);
            let denominator = n_exact.or(n_lower).filter(|&c| c > 0);
            Ok(PleijelRow {
                config_hash: hash.clone(),
                n: v.n,
                lambda: v.lambda,
                mu: v.mu,
                n_lower,
                n_exact,
                n_exact_strict: counts.map(|c| c.1),
                bound: bounds.map(|b| b.bound),
                weyl: bounds.map(|b| b.weyl),
                mu_over_n: v.mu as f64 / v.n as f64,
                mu_over_count: denominator.map(|c| v.mu as f64 / c as f64),
            })
        })
        .collect()
}

fn arg_max(items: impl Iterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    items.fold(None, |best, (n, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((n, v)),
    })
}

pub fn summarize(cfg: &ExperimentConfig, rows: &[PleijelRow], forced: bool, bounds_computed: bool, csv: PathBuf, svg: Option<PathBuf>) -> Result<Summary> {
    let constants = DimensionalConstants::new(cfg.dimension)?;
    let adm = cfg.admissibility();
    let eligible = || rows.iter().filter(|r| r.n >= cfg.n_min);
    let ratio = arg_max(eligible().filter_map(|r| r.mu_over_count.map(|v| (r.n, v))));
    let per_n = arg_max(eligible().map(|r| (r.n, r.mu_over_n)));
    let bound_ratio = rows.iter().filter_map(|r| r.bound.map(|b| r.mu as f64 / b)).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))));
    Ok(Summary {
        config_hash: cfg.hash(),
        dimension: cfg.dimension,
        eigen_source: cfg.eigen_source,
        forced,
        admissible: adm.ok,
        bounds_computed,
        admissibility_margin: adm.margin,
        rows: rows.len(),
        n_min: cfg.n_min,
        pleijel_constant: constants.pleijel,
        pleijel_constant_printed: constants.pleijel_printed,
        max_ratio: ratio.map(|r| r.1),
        max_ratio_n: ratio.map(|r| r.0),
        max_mu_over_n: per_n.map(|r| r.1),
        max_mu_over_n_n: per_n.map(|r| r.0),
        max_bound_ratio: bound_ratio,
        bound_violations: rows.iter().filter(|r| r.bound.is_some_and(|b| r.mu as f64 > b)).count(),
        csv,
        svg,
    })
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a CSV whose header must exist even when there are no rows.
pub fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if !rows.is_empty() {
        return write_csv(path, rows);
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    w.flush()?;
    Ok(())
}

pub const PLEIJEL_COLUMNS: [&str; 11] =
    ["config_hash", "n", "lambda", "mu", "n_lower", "n_exact", "n_exact_strict", "bound", "weyl", "mu_over_n", "mu_over_count"];

/// Runs the experiment and writes `pleijel.csv`, `summary.json` and
/// optionally `pleijel.svg` into the output directory.
pub fn run_pipeline(cfg: &ExperimentConfig, svg: bool) -> Result<Summary> {
    let adm = require_admissible(cfg)?;
    let forced = !adm.ok;
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))?;
    let values = eigenvalues(cfg)?;
    let with_bounds = cfg.compute_bounds && !forced;
    let rows = pleijel_rows(cfg, &values, with_bounds)?;
    let csv_path = cfg.output_dir.join("pleijel.csv");
    write_csv_with_header(&csv_path, &PLEIJEL_COLUMNS, &rows)?;
    let svg_path = if svg {
        let path = cfg.output_dir.join("pleijel.svg");
        let gamma = DimensionalConstants::new(cfg.dimension)?.pleijel;
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mu_over_n)).collect();
        fs::write(&path, ratio_scatter(&points, gamma, "μ(f_n)/n"))?;
        Some(path)
    } else {
        None
    };
    let summary = summarize(cfg, &rows, forced, with_bounds, csv_path, svg_path)?;
    fs::write(cfg.output_dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(summary)
}
