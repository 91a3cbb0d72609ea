//! Uniform Dirichlet grids on `[-L, L]^d` and scalar fields sampled on
//! their interior nodes.
//!
//! Nodes are stored row-major with the last axis fastest. Fields persist
//! as a flat little-endian `f64` file next to a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n` interior nodes per axis at spacing `h = 2L/(n+1)`; boundary nodes
/// carry the Dirichlet value zero and are not stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub half_width: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(d: usize, half_width: f64, n: usize) -> Result<Self> {
        if d < 1 {
            return Err(Error::Domain("grid dimension must be at least 1".into()));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::Domain(format!("grid half-width must be positive, got {half_width}")));
        }
        if n < 1 {
            return Err(Error::Domain("grid needs at least one interior node per axis".into()));
        }
        n.checked_pow(d as u32)
            .filter(|&t| t <= 1 << 28)
            .ok_or_else(|| Error::Resource(format!("grid {n}^{d} is too large")))?;
        Ok(Self { d, half_width, n })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 + 1.0)
    }

    /// Quadrature weight `h^d` of one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.d as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coordinate of node `i` along any axis.
    pub fn coordinate(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 1.0) * self.spacing()
    }

    /// Per-axis indices of a flat index.
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d];
        for k in (0..self.d).rev() {
            idx[k] = flat % self.n;
            flat /= self.n;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).into_iter().map(|i| self.coordinate(i)).collect()
    }

    /// Flat stride of axis `k`.
    pub fn stride(&self, k: usize) -> usize {
        self.n.pow((self.d - 1 - k) as u32)
    }

    /// Face neighbours of a node (at most `2d`; boundary neighbours are
    /// Dirichlet nodes and omitted).
    pub fn neighbours(&self, flat: usize) -> impl Iterator<Item = usize> + '_ {
        let idx = self.multi_index(flat);
        (0..self.d).flat_map(move |k| {
            let s = self.stride(k);
            let lower = (idx[k] > 0).then(|| flat - s);
            let upper = (idx[k] + 1 < self.n).then(|| flat + s);
            lower.into_iter().chain(upper)
        })
    }

    /// Index of the node nearest to `x` (clamped to the grid).
    pub fn nearest_node(&self, x: &[f64]) -> Vec<usize> {
        let h = self.spacing();
        x.iter()
            .map(|&v| (((v + self.half_width) / h).round() - 1.0).clamp(0.0, self.n as f64 - 1.0) as usize)
            .collect()
    }

    /// Samples `f` on every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(&self.point(i))).collect()
    }
}

/// Metadata written next to persisted arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub grid: Grid,
    pub dtype: String,
    pub len: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

/// Values on the interior nodes of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

fn sidecar_path(base: &Path) -> PathBuf {
    base.with_extension("json")
}

fn data_path(base: &Path) -> PathBuf {
    base.with_extension("bin")
}

impl SampledField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Inconsistency(format!("field has {} values for a grid of {} nodes", values.len(), grid.len())));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = grid.sample(f);
        Self { grid, values }
    }

    /// `sqrt(Σ u² h^d)`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes `<base>.bin` and `<base>.json`.
    pub fn save(&self, base: &Path, lambda: Option<f64>, residual: Option<f64>) -> Result<()> {
        let bytes: Vec<u8> = self.values.iter().flat_map(|v| v.to_le_bytes()).collect();
        fs::write(data_path(base), bytes)?;
        let meta = Sidecar { grid: self.grid, dtype: "f64le".into(), len: self.values.len(), lambda, residual };
        fs::write(sidecar_path(base), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<(Self, Sidecar)> {
        let meta: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(base))?)?;
        if meta.dtype != "f64le" {
            return Err(Error::Io(format!("expected f64le data, sidecar says {}", meta.dtype)));
        }
        let bytes = fs::read(data_path(base))?;
        if bytes.len() != 8 * meta.len {
            return Err(Error::Io(format!("data file holds {} bytes, sidecar expects {}", bytes.len(), 8 * meta.len)));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
        Ok((Self::new(meta.grid, values)?, meta))
    }
}

/// Writes an integer label grid as little-endian `i32` plus sidecar.
pub fn save_labels(base: &Path, grid: Grid, labels: &[i32]) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(data_path(base), bytes)?;
    let meta = Sidecar { grid, dtype: "i32le".into(), len: labels.len(), lambda: None, residual: None };
    fs::write(sidecar_path(base), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_labels(base: &Path) -> Result<(Grid, Vec<i32>)> {
    let meta: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(base))?)?;
    if meta.dtype != "i32le" {
        return Err(Error::Io(format!("expected i32le labels, sidecar says {}", meta.dtype)));
    }
    let bytes = fs::read(data_path(base))?;
    if bytes.len() != 4 * meta.len {
        return Err(Error::Io("label file length does not match sidecar".into()));
    }
    Ok((meta.grid, bytes.chunks_exact(4).map(|c| i32::from_le_bytes(c.try_into().expect("4-byte chunk"))).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrip() {
        let g = Grid::new(3, 1.0, 5).unwrap();
        for flat in [0, 7, 63, 124] {
            assert_eq!(g.flat_index(&g.multi_index(flat)), flat);
        }
        assert_eq!(g.len(), 125);
        assert!((g.spacing() - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.coordinate(0) + 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(g.neighbours(0).count(), 3);
        assert_eq!(g.neighbours(g.flat_index(&[2, 2, 2])).count(), 6);
    }

    #[test]
    fn nearest_node_centre() {
        let g = Grid::new(2, 1.0, 5).unwrap();
        assert_eq!(g.nearest_node(&[0.0, 0.0]), vec![2, 2]);
        assert_eq!(g.nearest_node(&[5.0, -5.0]), vec![4, 0]);
    }

    #[test]
    fn field_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 2.0, 7).unwrap();
        let f = SampledField::from_fn(g, |x| x[0] - 0.5 * x[1]);
        let base = dir.path().join("u");
        f.save(&base, Some(2.0), Some(1e-9)).unwrap();
        let (back, meta) = SampledField::load(&base).unwrap();
        assert_eq!(back, f);
        assert_eq!(meta.lambda, Some(2.0));

        let labels: Vec<i32> = (0..g.len() as i32).collect();
        save_labels(&dir.path().join("l"), g, &labels).unwrap();
        assert_eq!(load_labels(&dir.path().join("l")).unwrap().1, labels);
        assert!(SampledField::load(&dir.path().join("l")).is_err());
    }
}
