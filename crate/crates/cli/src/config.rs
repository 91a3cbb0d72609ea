//! Experiment configuration (JSON).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use pleijel::potentials::{check_admissibility, AdmissibilityReport};
use pleijel::{Case, PotentialSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Marks errors that come from an invalid configuration (exit code 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "caseA")]
    CaseA,
    #[serde(rename = "caseB")]
    CaseB,
}

/// Where eigenpairs come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenSource {
    /// Grid eigensolver.
    #[default]
    Grid,
    /// Closed-form ladder of the planar harmonic oscillator.
    ExactLadder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Half-width `L` of the box `[-L, L]^d`.
    #[serde(rename = "L")]
    pub half_width: f64,
    /// Interior nodes per axis.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub delta: f64,
    /// Overrides the lattice exponent `m` (Case A) or the annular exponent
    /// `q` (Case B).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Inner radius of the annular layout (default: the potential's central radius).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub solver: u64,
    pub audit: u64,
    pub hardy: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { solver: 0x1ee7, audit: 17, hardy: 7 }
    }
}

fn default_tol() -> f64 {
    1e-7
}
fn default_zero_tol() -> f64 {
    pleijel::nodal::DEFAULT_ZERO_TOL
}
fn default_n_min() -> usize {
    20
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub dimension: usize,
    pub mode: Mode,
    pub n_eigenpairs: usize,
    pub grid: GridConfig,
    pub partition: PartitionConfig,
    /// Levels used for bracketing sums and exponent fits.
    #[serde(default)]
    pub lambda_schedule: Vec<f64>,
    #[serde(default)]
    pub seeds: Seeds,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub eigen_source: EigenSource,
    /// Exclusive ladder cut-off for the exact source (otherwise the first
    /// `n_eigenpairs` levels are used).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max: Option<f64>,
    #[serde(default = "default_n_min")]
    pub n_min: usize,
    #[serde(default = "default_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
    /// Evaluate the nodal upper bound, counting lower bound and Weyl
    /// integral per eigenvalue.
    #[serde(default = "default_true")]
    pub compute_bounds: bool,
    /// Run even when the admissibility inequality fails.
    #[serde(default)]
    pub force: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| config_error(format!("invalid config {}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let want = match self.mode {
            Mode::CaseA => Case::A,
            Mode::CaseB => Case::B,
        };
        if self.potential.case != want {
            return Err(config_error(format!("mode {:?} does not match the potential's case {}", self.mode, self.potential.case)));
        }
        if self.dimension < 2 {
            return Err(config_error("dimension must be at least 2"));
        }
        if self.potential.poles.iter().any(|p| p.location.len() != self.dimension) {
            return Err(config_error("pole coordinates do not match the dimension"));
        }
        if !(self.grid.half_width > 0.0) || self.grid.n < 3 {
            return Err(config_error("grid needs L > 0 and n >= 3"));
        }
        if !(self.partition.delta > 0.0 && self.partition.delta <= 0.5) {
            return Err(config_error("partition delta must lie in (0, 1/2]"));
        }
        if !(0.0..=0.1).contains(&self.zero_tol) {
            return Err(config_error("zero_tol must lie in [0, 0.1]"));
        }
        if self.eigen_source == EigenSource::ExactLadder && !is_planar_oscillator(&self.potential, self.dimension) {
            return Err(config_error("the exact ladder is only available for V = |x|² in two dimensions"));
        }
        if self.mode == Mode::CaseB && self.lambda_schedule.iter().any(|&l| l >= 0.0) {
            return Err(config_error("Case B lambda_schedule entries must be negative"));
        }
        if self.mode == Mode::CaseA && self.lambda_schedule.iter().any(|&l| l <= 1.0) {
            return Err(config_error("Case A lambda_schedule entries must exceed 1"));
        }
        Ok(())
    }

    /// Lattice exponent `m` (Case A) or annular exponent `q` (Case B).
    pub fn scale(&self) -> f64 {
        self.partition.scale.unwrap_or(match self.mode {
            Mode::CaseA => self.potential.lattice_scale_exponent(),
            Mode::CaseB => self.potential.annular_exponent(),
        })
    }

    pub fn inner_radius(&self) -> f64 {
        self.partition.inner_radius.unwrap_or_else(|| self.potential.central_radius())
    }

    pub fn admissibility(&self) -> AdmissibilityReport {
        check_admissibility(&self.potential, self.dimension)
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))[..16].to_string()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// Planar harmonic oscillator on the default grid.
    pub fn harmonic_oscillator(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            potential: PotentialSpec::harmonic_oscillator(),
            dimension: 2,
            mode: Mode::CaseA,
            n_eigenpairs: 10,
            grid: GridConfig { half_width: 8.0, n: 255 },
            partition: PartitionConfig { delta: 0.25, scale: None, inner_radius: None },
            lambda_schedule: vec![20.0, 40.0, 80.0, 160.0],
            seeds: Seeds::default(),
            output_dir: output_dir.into(),
            eigen_source: EigenSource::Grid,
            lambda_max: None,
            n_min: 20,
            solver_tol: default_tol(),
            zero_tol: default_zero_tol(),
            compute_bounds: true,
            force: false,
        }
    }

    /// Planar Coulomb problem `V = -2/|x|`.
    pub fn coulomb(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            potential: PotentialSpec::coulomb(2.0, 1.0, 2).expect("valid Coulomb spec"),
            mode: Mode::CaseB,
            n_eigenpairs: 4,
            grid: GridConfig { half_width: 40.0, n: 383 },
            partition: PartitionConfig { delta: 0.05, scale: None, inner_radius: None },
            lambda_schedule: vec![-0.04, -0.02, -0.01, -0.005],
            ..Self::harmonic_oscillator(output_dir)
        }
    }
}

pub fn is_planar_oscillator(spec: &PotentialSpec, d: usize) -> bool {
    d == 2 && spec.case == Case::A && matches!(spec.family, pleijel::Family::Power { strength, exponent } if strength == 1.0 && exponent == 2.0)
}

/// Fails unless the admissibility inequality holds or `force` is set.
pub fn require_admissible(cfg: &ExperimentConfig) -> Result<AdmissibilityReport> {
    let report = cfg.admissibility();
    if !report.ok && !cfg.force {
        bail!(ConfigError(format!(
            "admissibility inequality fails for (a, b, c) = ({}, {}, {}) in d = {} (margin {:.4}); pass --force to run anyway",
            cfg.potential.a, cfg.potential.b, cfg.potential.c, cfg.dimension, report.margin
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_roundtrip_and_hash() {
        for cfg in [ExperimentConfig::harmonic_oscillator("out"), ExperimentConfig::coulomb("out")] {
            let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.hash(), cfg.hash());
        }
        let a = ExperimentConfig::harmonic_oscillator("out");
        let mut b = a.clone();
        b.n_eigenpairs = 11;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn scale_defaults() {
        let a = ExperimentConfig::harmonic_oscillator("out");
        assert!((a.scale() - 1.0 / 6.0).abs() < 1e-15);
        let b = ExperimentConfig::coulomb("out");
        assert!((b.scale() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mode_mismatch_is_a_config_error() {
        let mut cfg = ExperimentConfig::harmonic_oscillator("out");
        cfg.mode = Mode::CaseB;
        let err = cfg.validate().unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }
}
