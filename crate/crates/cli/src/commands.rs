//! Subcommand bodies. Each writes its artifacts into the configured output
//! directory and returns the text to print.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use pleijel::field::save_labels;
use pleijel::nodal::{count_nodal_domains, localize_domains};
use pleijel::partition::audit_cover;
use pleijel::DimensionalConstants;
use serde::Serialize;

use crate::config::{require_admissible, EigenSource, ExperimentConfig};
use crate::pipeline::{eigenvalues, ladder_levels, ladder_pair, localization_partition, run_pipeline, write_csv_with_header};
use crate::verify::{verify_suite, Status};
use crate::ChecksFailed;

fn prepare(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).with_context(|| format!("creating {}", cfg.output_dir.display()))
}

pub fn constants(d: usize) -> Result<String> {
    let c = DimensionalConstants::new(d)?;
    Ok(serde_json::to_string_pretty(&c)?)
}

#[derive(Serialize)]
struct LayerRow {
    config_hash: String,
    layer: usize,
    r: f64,
    d: f64,
    n: u64,
}

#[derive(Serialize)]
struct CellRow {
    config_hash: String,
    cell: usize,
    layer: i32,
    center: String,
    side: f64,
    gradient_bound: f64,
}

/// Builds the localisation cover at the first scheduled level and writes
/// its cells, the annular layer table (Case B) and a sampled audit.
pub fn partition(cfg: &ExperimentConfig) -> Result<String> {
    prepare(cfg)?;
    let hash = cfg.hash();
    let level = cfg.lambda_schedule.first().copied().unwrap_or(10.0);
    let p = localization_partition(cfg, level)?;
    let cells: Vec<CellRow> = p
        .cells
        .iter()
        .zip(&p.gradient_bounds)
        .enumerate()
        .map(|(i, (c, &b))| CellRow {
            config_hash: hash.clone(),
            cell: i,
            layer: c.layer,
            center: c.center.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            side: c.side,
            gradient_bound: b,
        })
        .collect();
    write_csv_with_header(&cfg.output_dir.join("cells.csv"), &["config_hash", "cell", "layer", "center", "side", "gradient_bound"], &cells)?;
    if let Some(layout) = p.annular_layout() {
        let rows: Vec<LayerRow> =
            layout.layers.iter().enumerate().map(|(i, l)| LayerRow { config_hash: hash.clone(), layer: i, r: l.r, d: l.d, n: l.n }).collect();
        write_csv_with_header(&cfg.output_dir.join("layers.csv"), &["config_hash", "layer", "r", "d", "n"], &rows)?;
        fs::write(cfg.output_dir.join("layout.json"), serde_json::to_string_pretty(layout)? + "\n")?;
    }
    let audit = audit_cover(&p, 4000, cfg.seeds.audit);
    let text = serde_json::to_string_pretty(&serde_json::json!({ "config_hash": hash, "cells": p.len(), "audit": audit }))?;
    fs::write(cfg.output_dir.join("partition.json"), text.clone() + "\n")?;
    Ok(text)
}

#[derive(Serialize)]
struct SpectrumRow {
    config_hash: String,
    n: usize,
    lambda: f64,
    mu: u64,
    residual: Option<f64>,
}

/// Eigenvalues with nodal counts; grid eigenfunctions are saved as
/// `fields/eigen_NNNN.{bin,json}`.
pub fn spectrum(cfg: &ExperimentConfig) -> Result<String> {
    require_admissible(cfg)?;
    prepare(cfg)?;
    let hash = cfg.hash();
    let values = eigenvalues(cfg)?;
    let dir = cfg.output_dir.join("fields");
    for v in &values {
        if let Some(pair) = &v.pair {
            fs::create_dir_all(&dir)?;
            pair.field.save(&dir.join(format!("eigen_{:04}", v.n)), Some(pair.lambda), Some(pair.residual))?;
        }
    }
    let rows: Vec<SpectrumRow> =
        values.iter().map(|v| SpectrumRow { config_hash: hash.clone(), n: v.n, lambda: v.lambda, mu: v.mu, residual: v.residual }).collect();
    write_csv_with_header(&cfg.output_dir.join("spectrum.csv"), &["config_hash", "n", "lambda", "mu", "residual"], &rows)?;
    Ok(rows.iter().map(|r| format!("{:>5} {:>14.8} {:>5}", r.n, r.lambda, r.mu)).collect::<Vec<_>>().join("\n"))
}

#[derive(Serialize)]
struct NodalRow {
    config_hash: String,
    n: usize,
    lambda: f64,
    mu: usize,
    violations: usize,
    smallest_ratio: f64,
    uncovered_mass_fraction: f64,
}

#[derive(Serialize)]
struct RatioRow {
    config_hash: String,
    n: usize,
    domain: i32,
    cell: usize,
    ratio: f64,
    localized: bool,
}

/// Nodal labels and the localisation audit of every eigenfunction; fails
/// the check when a domain is localised in no cell.
pub fn nodal(cfg: &ExperimentConfig) -> Result<String> {
    require_admissible(cfg)?;
    prepare(cfg)?;
    let hash = cfg.hash();
    let pairs = match cfg.eigen_source {
        EigenSource::Grid => eigenvalues(cfg)?.into_iter().filter_map(|v| v.pair).collect::<Vec<_>>(),
        EigenSource::ExactLadder => ladder_levels(cfg).into_iter().map(|l| ladder_pair(cfg, l)).collect::<Result<Vec<_>>>()?,
    };
    let labels_dir = cfg.output_dir.join("labels");
    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let n = i + 1;
        let dec = count_nodal_domains(&pair.field, cfg.zero_tol)?;
        let audit = localize_domains(&dec, &localization_partition(cfg, pair.lambda)?, &pair.field)?;
        fs::create_dir_all(&labels_dir)?;
        save_labels(&labels_dir.join(format!("labels_{n:04}")), dec.grid, &dec.labels)?;
        ratios.extend(audit.entries.iter().map(|e| RatioRow {
            config_hash: hash.clone(),
            n,
            domain: e.domain,
            cell: e.cell,
            ratio: e.ratio,
            localized: e.localized,
        }));
        rows.push(NodalRow {
            config_hash: hash.clone(),
            n,
            lambda: pair.lambda,
            mu: dec.mu,
            violations: audit.violations.len(),
            smallest_ratio: audit.smallest_ratio(),
            uncovered_mass_fraction: audit.uncovered_mass_fraction,
        });
    }
    write_csv_with_header(
        &cfg.output_dir.join("nodal.csv"),
        &["config_hash", "n", "lambda", "mu", "violations", "smallest_ratio", "uncovered_mass_fraction"],
        &rows,
    )?;
    write_csv_with_header(&cfg.output_dir.join("localization.csv"), &["config_hash", "n", "domain", "cell", "ratio", "localized"], &ratios)?;
    let violations: usize = rows.iter().map(|r| r.violations).sum();
    let text = rows.iter().map(|r| format!("{:>5} {:>14.8} {:>5} {:>3}", r.n, r.lambda, r.mu, r.violations)).collect::<Vec<_>>().join("\n");
    if violations > 0 {
        bail!(ChecksFailed(format!("{text}\n{violations} nodal domains are not localised in any cell")));
    }
    Ok(text)
}

pub fn pleijel(cfg: &ExperimentConfig, svg: bool) -> Result<String> {
    let summary = run_pipeline(cfg, svg)?;
    let text = serde_json::to_string_pretty(&summary)?;
    if summary.bound_violations > 0 {
        bail!(ChecksFailed(format!("{text}\n{} eigenfunctions exceed the nodal upper bound", summary.bound_violations)));
    }
    Ok(text)
}

/// Writes `verify.json` and fails when any check fails.
pub fn verify(cfg: &ExperimentConfig) -> Result<String> {
    prepare(cfg)?;
    let report = verify_suite(cfg);
    fs::write(cfg.output_dir.join("verify.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let text = report
        .checks
        .iter()
        .map(|c| {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skipped => "SKIP",
            };
            format!("{tag} {:<16} {}", c.name, c.detail)
        })
        .collect::<Vec<_>>()
        .join("\n");
    if !report.passed() {
        bail!(ChecksFailed(text));
    }
    Ok(text)
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::load(path)
}
