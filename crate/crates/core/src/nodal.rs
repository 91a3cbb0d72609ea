//! Nodal domains of sampled fields, their localisation in partition cells,
//! the IMS localisation identity and the Faber–Krahn nodal upper bound.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::DimensionalConstants;
use crate::error::{Error, Result};
use crate::field::{Grid, SampledField};
use crate::hardy::{hardy_weight, weighted_infimum};
use crate::partition::{overlap_limit, PartitionOfUnity};
use crate::potentials::{Case, PotentialSpec};
use crate::spectral::{sample_potential_at, AssemblyOptions, EigenPair};

/// Relative threshold below which nodes belong to the zero band.
pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalDomain {
    pub id: i32,
    /// `+1` or `-1`.
    pub sign: i8,
    pub nodes: Vec<usize>,
}

/// Face-connected same-sign components of a field outside its zero band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodalDecomposition {
    pub grid: Grid,
    /// 0 marks the zero band; domains are numbered from 1.
    pub labels: Vec<i32>,
    pub mu: usize,
    pub domains: Vec<NodalDomain>,
    pub zero_tol: f64,
}

pub fn count_nodal_domains(field: &SampledField, zero_tol: f64) -> Result<NodalDecomposition> {
    if !(0.0..=0.1).contains(&zero_tol) {
        return Err(Error::Domain(format!("zero tolerance must lie in [0, 0.1], got {zero_tol}")));
    }
    if field.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("field has non-finite values".into()));
    }
    let grid = field.grid;
    let threshold = zero_tol * field.max_abs();
    let sign = |v: f64| -> i8 {
        if v.abs() <= threshold {
            0
        } else if v > 0.0 {
            1
        } else {
            -1
        }
    };
    let signs: Vec<i8> = field.values.iter().map(|&v| sign(v)).collect();
    if signs.iter().all(|&s| s == 0) {
        return Err(Error::DegenerateField(format!("every node lies in the zero band (tolerance {zero_tol})")));
    }

    let mut labels = vec![0i32; grid.len()];
    let mut domains = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..grid.len() {
        if signs[start] == 0 || labels[start] != 0 {
            continue;
        }
        let id = domains.len() as i32 + 1;
        let s = signs[start];
        labels[start] = id;
        queue.push_back(start);
        let mut nodes = Vec::new();
        while let Some(node) = queue.pop_front() {
            nodes.push(node);
            for nb in grid.neighbours(node) {
                if labels[nb] == 0 && signs[nb] == s {
                    labels[nb] = id;
                    queue.push_back(nb);
                }
            }
        }
        nodes.sort_unstable();
        domains.push(NodalDomain { id, sign: s, nodes });
    }
    Ok(NodalDecomposition { grid, labels, mu: domains.len(), domains, zero_tol })
}

/// Partition weights `A_i` and gradients at every grid node, stored
/// compactly (most nodes meet one to `2^d` cells).
#[derive(Debug, Clone)]
pub struct NodeWeights {
    d: usize,
    offsets: Vec<usize>,
    cells: Vec<usize>,
    values: Vec<f64>,
    gradients: Vec<f64>,
}

impl NodeWeights {
    pub fn compute(grid: &Grid, partition: &PartitionOfUnity) -> Result<Self> {
        if grid.d != partition.d {
            return Err(Error::Inconsistency(format!("grid dimension {} differs from partition dimension {}", grid.d, partition.d)));
        }
        let per_node: Vec<_> = (0..grid.len()).into_par_iter().map(|i| partition.weights_at(&grid.point(i))).collect();
        let mut out = Self { d: grid.d, offsets: Vec::with_capacity(grid.len() + 1), cells: Vec::new(), values: Vec::new(), gradients: Vec::new() };
        out.offsets.push(0);
        for list in per_node {
            for w in list {
                out.cells.push(w.cell);
                out.values.push(w.value);
                out.gradients.extend_from_slice(&w.gradient);
            }
            out.offsets.push(out.cells.len());
        }
        Ok(out)
    }

    /// `(cell, A_i, ∇A_i)` for every cell whose weight is nonzero at `node`.
    pub fn at(&self, node: usize) -> impl Iterator<Item = (usize, f64, &[f64])> + '_ {
        (self.offsets[node]..self.offsets[node + 1]).map(move |e| (self.cells[e], self.values[e], &self.gradients[e * self.d..(e + 1) * self.d]))
    }

    /// Nodes with no nonzero weight.
    pub fn uncovered(&self) -> usize {
        self.offsets.windows(2).filter(|w| w[0] == w[1]).count()
    }
}

/// Mass ratio of one domain in one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainCellRatio {
    pub domain: i32,
    pub cell: usize,
    /// `Σ_{Ω∩U_i} f² / Σ_Ω A_i² f²`.
    pub ratio: f64,
    pub localized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationAudit {
    /// Localisation constant `2^d`.
    pub m: f64,
    pub entries: Vec<DomainCellRatio>,
    /// Cells in which each domain (in id order) is localised.
    pub localized_cells: Vec<Vec<usize>>,
    /// Domains localised in no cell.
    pub violations: Vec<i32>,
    /// Fraction of the field's mass on nodes outside every support. Mass
    /// integrals only use nodes lying in both the domain and a support.
    pub uncovered_mass_fraction: f64,
}

impl LocalizationAudit {
    pub fn smallest_ratio(&self) -> f64 {
        self.entries.iter().map(|e| e.ratio).fold(f64::INFINITY, f64::min)
    }
}

pub fn localize_domains(decomp: &NodalDecomposition, partition: &PartitionOfUnity, field: &SampledField) -> Result<LocalizationAudit> {
    let weights = NodeWeights::compute(&decomp.grid, partition)?;
    localize_with_weights(decomp, &weights, field)
}

/// As [`localize_domains`] with precomputed node weights, so several fields
/// on one grid can share them.
pub fn localize_with_weights(decomp: &NodalDecomposition, weights: &NodeWeights, field: &SampledField) -> Result<LocalizationAudit> {
    if field.grid != decomp.grid {
        return Err(Error::Inconsistency("field and decomposition live on different grids".into()));
    }
    let m = overlap_limit(decomp.grid.d);
    let per_domain: Vec<Result<(Vec<DomainCellRatio>, Vec<usize>)>> = decomp
        .domains
        .par_iter()
        .map(|dom| {
            let mut sums: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for &node in &dom.nodes {
                let f2 = field.values[node] * field.values[node];
                for (cell, a, _) in weights.at(node) {
                    let e = sums.entry(cell).or_insert((0.0, 0.0));
                    e.0 += f2;
                    e.1 += a * a * f2;
                }
            }
            let rows: Vec<DomainCellRatio> = sums
                .into_iter()
                .filter(|(_, (_, den))| *den > 0.0)
                .map(|(cell, (num, den))| {
                    let ratio = num / den;
                    DomainCellRatio { domain: dom.id, cell, ratio, localized: ratio <= m }
                })
                .collect();
            if rows.is_empty() {
                return Err(Error::Inconsistency(format!("nodal domain {} meets no cell with positive weighted mass; the partition does not cover it", dom.id)));
            }
            let hit = rows.iter().filter(|r| r.localized).map(|r| r.cell).collect();
            Ok((rows, hit))
        })
        .collect();

    let mut entries = Vec::new();
    let mut localized_cells = Vec::new();
    let mut violations = Vec::new();
    for (dom, res) in decomp.domains.iter().zip(per_domain) {
        let (rows, hit) = res?;
        if hit.is_empty() {
            violations.push(dom.id);
        }
        entries.extend(rows);
        localized_cells.push(hit);
    }
    let total: f64 = field.values.iter().map(|v| v * v).sum();
    let outside: f64 = (0..field.values.len()).filter(|&i| weights.at(i).next().is_none()).map(|i| field.values[i] * field.values[i]).sum();
    let uncovered_mass_fraction = if total > 0.0 { outside / total } else { 0.0 };
    Ok(LocalizationAudit { m, entries, localized_cells, violations, uncovered_mass_fraction })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImsReport {
    /// `∫ |∇(A f)|²`.
    pub lhs: f64,
    /// `∫ (λ - V)(A f)² + ∫ |∇A|² f²`.
    pub rhs: f64,
    pub rel_err: f64,
}

/// Fourth-order central difference along axis `k`, extending the field by
/// zero on the boundary and oddly beyond it.
fn axis_derivative(field: &SampledField, node: usize, idx: &[usize], k: usize) -> f64 {
    let grid = field.grid;
    let n = grid.n as i64;
    let s = grid.stride(k) as i64;
    let i = idx[k] as i64;
    let at = |o: i64| -> f64 {
        let j = i + o;
        if (0..n).contains(&j) {
            field.values[(node as i64 + o * s) as usize]
        } else if j == -1 || j == n {
            0.0
        } else if j == -2 {
            -field.values[(node as i64 - i * s) as usize]
        } else {
            -field.values[(node as i64 + (n - 1 - i) * s) as usize]
        }
    };
    (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * grid.spacing())
}

/// Minimal sub-samples per grid interval and axis in [`ims_check`].
pub const IMS_SUBSAMPLES: usize = 4;
/// Sub-samples placed across the narrowest overlap ramp in [`ims_check`].
const IMS_RAMP_SAMPLES: f64 = 8.0;
const IMS_MAX_SUBSAMPLES: usize = 64;

/// Cubic Lagrange weights on nodes `0..4` at position `u` (node units).
fn cubic_weights(u: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for (j, wj) in w.iter_mut().enumerate() {
        for m in 0..4 {
            if m != j {
                *wj *= (u - m as f64) / (j as f64 - m as f64);
            }
        }
    }
    w
}

/// Grid check of `∫|∇(A f)|² = ∫(λ - V)(A f)² + ∫|∇A|² f²` for the weight
/// of one partition cell. `∇f` uses fourth-order differences and `V` is
/// sampled as in the grid Hamiltonian; both, with `f`, are interpolated by
/// tensor cubics onto midpoints of a sub-grid, where the analytic `A` and
/// `∇A` are evaluated. The sub-grid has at least [`IMS_SUBSAMPLES`] points
/// per interval and axis and resolves the narrowest overlap ramp among the
/// cell and its neighbours, which may be thinner than the grid spacing.
pub fn ims_check(pair: &EigenPair, partition: &PartitionOfUnity, cell: usize, spec: &PotentialSpec) -> Result<ImsReport> {
    let field = &pair.field;
    let grid = field.grid;
    let d = grid.d;
    if cell >= partition.len() {
        return Err(Error::Domain(format!("cell {cell} out of range")));
    }
    if grid.n < 4 {
        return Err(Error::Domain("IMS check needs at least 4 nodes per axis".into()));
    }
    let (lo, hi) = partition.cells[cell].support_bounds();
    let h = grid.spacing();
    let n = grid.n;
    let position = |x: f64| (x + grid.half_width) / h - 1.0;
    // intervals [x_i, x_{i+1}] meeting the support, per axis
    let intervals: Vec<(usize, usize)> = (0..d)
        .map(|k| {
            let first = position(lo[k]).floor().clamp(0.0, (n - 2) as f64) as usize;
            let last = position(hi[k]).floor().clamp(0.0, (n - 2) as f64) as usize;
            (first, last)
        })
        .collect();
    let stencil_start = |i: usize| i.saturating_sub(1).min(n - 4);
    let nodes_lo: Vec<usize> = intervals.iter().map(|&(a, _)| stencil_start(a)).collect();
    let nodes_hi: Vec<usize> = intervals.iter().map(|&(_, b)| stencil_start(b) + 3).collect();
    let extents: Vec<usize> = (0..d).map(|k| nodes_hi[k] - nodes_lo[k] + 1).collect();
    let local_len: usize = extents.iter().product();
    let local_index = |idx: &[usize]| -> usize { (0..d).rev().fold(0, |acc, k| acc * extents[k] + (idx[k] - nodes_lo[k])) };
    let global_nodes: Vec<usize> = (0..local_len)
        .map(|mut t| {
            let idx: Vec<usize> = (0..d)
                .map(|k| {
                    let v = nodes_lo[k] + t % extents[k];
                    t /= extents[k];
                    v
                })
                .collect();
            grid.flat_index(&idx)
        })
        .collect();
    let potential = sample_potential_at(spec, &grid, &AssemblyOptions::default(), &global_nodes)?;
    // per local node: f, ∂_1 f, ..., ∂_d f
    let stride = d + 1;
    let mut data = vec![0.0; local_len * stride];
    for (t, &node) in global_nodes.iter().enumerate() {
        let idx = grid.multi_index(node);
        data[t * stride] = field.values[node];
        for k in 0..d {
            data[t * stride + 1 + k] = axis_derivative(field, node, &idx, k);
        }
    }

    let ramp = std::iter::once(cell)
        .chain(partition.neighbours(cell))
        .map(|c| partition.cells[c].delta * partition.cells[c].side)
        .fold(f64::INFINITY, f64::min);
    let s = ((IMS_RAMP_SAMPLES * h / ramp).ceil() as usize).clamp(IMS_SUBSAMPLES, IMS_MAX_SUBSAMPLES);
    let counts: Vec<usize> = intervals.iter().map(|&(a, b)| (b - a + 1) * s).collect();
    let total: usize = counts.iter().product();
    let stencil_len = 4usize.pow(d as u32);
    let (lhs, rhs) = (0..total)
        .into_par_iter()
        .map(|mut t| {
            let mut x = vec![0.0; d];
            let mut start = vec![0usize; d];
            let mut weights = vec![[0.0; 4]; d];
            for k in 0..d {
                let j = t % counts[k];
                t /= counts[k];
                let i = intervals[k].0 + j / s;
                let frac = ((j % s) as f64 + 0.5) / s as f64;
                x[k] = grid.coordinate(i) + frac * h;
                start[k] = stencil_start(i);
                weights[k] = cubic_weights((i - start[k]) as f64 + frac);
            }
            let (a, grad_a) = partition.weight(cell, &x);
            if a == 0.0 && grad_a.iter().all(|g| *g == 0.0) {
                return (0.0, 0.0);
            }
            let mut interp = vec![0.0; stride];
            let mut v = 0.0;
            let mut idx = vec![0usize; d];
            for mut m in 0..stencil_len {
                let mut w = 1.0;
                for k in 0..d {
                    let o = m % 4;
                    m /= 4;
                    idx[k] = start[k] + o;
                    w *= weights[k][o];
                }
                let li = local_index(&idx);
                for (acc, val) in interp.iter_mut().zip(&data[li * stride..(li + 1) * stride]) {
                    *acc += w * val;
                }
                v += w * potential[li];
            }
            let f = interp[0];
            let mut grad_af = 0.0;
            let mut grad_a2 = 0.0;
            for k in 0..d {
                grad_af += (a * interp[1 + k] + f * grad_a[k]).powi(2);
                grad_a2 += grad_a[k] * grad_a[k];
            }
            (grad_af, (pair.lambda - v) * a * a * f * f + grad_a2 * f * f)
        })
        .reduce(|| (0.0, 0.0), |p, q| (p.0 + q.0, p.1 + q.1));
    let vol = grid.cell_volume() / (s as f64).powi(d as i32);
    let (lhs, rhs) = (lhs * vol, rhs * vol);
    let scale = lhs.abs().max(rhs.abs());
    let rel_err = if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 };
    Ok(ImsReport { lhs, rhs, rel_err })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodalBound {
    pub total: f64,
    /// Central-cell contribution (zero in Case A).
    pub mu0: f64,
    pub cell_sum: f64,
    /// Localisation constant `2^d`.
    pub m: f64,
}

/// Upper bound on the number of nodal domains of any eigenfunction with
/// eigenvalue `λ`: `μ₀ + K_d^{-d/2} Σ_i |U_i| sup_{U_i}(λ - V + M|∇A_i|²)₊^{d/2}`.
pub fn nodal_upper_bound(spec: &PotentialSpec, lambda: f64, partition: &PartitionOfUnity, d: usize, mu0_override: Option<f64>) -> Result<f64> {
    nodal_bound_report(spec, lambda, partition, d, mu0_override).map(|b| b.total)
}

pub fn nodal_bound_report(spec: &PotentialSpec, lambda: f64, partition: &PartitionOfUnity, d: usize, mu0_override: Option<f64>) -> Result<NodalBound> {
    if partition.d != d {
        return Err(Error::Inconsistency(format!("partition has dimension {}, expected {d}", partition.d)));
    }
    let consts = DimensionalConstants::new(d)?;
    let m = overlap_limit(d);
    let central = partition.central_cell().filter(|_| spec.case == Case::B);
    let mu0 = match (spec.case, mu0_override, central) {
        (Case::A, _, _) => mu0_override.unwrap_or(0.0),
        (Case::B, Some(v), _) => v,
        (Case::B, None, Some(_)) => central_cell_bound(spec, partition)?,
        (Case::B, None, None) => {
            return Err(Error::Configuration("Case B needs a central-cell bound: use an annular partition or pass an override".into()));
        }
    };
    let half_d = d as f64 / 2.0;
    let mut cell_sum = 0.0;
    for (i, (cell, b)) in partition.cells.iter().zip(&partition.gradient_bounds).enumerate() {
        if Some(i) == central {
            continue;
        }
        let (lo, hi) = cell.support_bounds();
        let (inf_v, _) = spec.range_on_box(&lo, &hi)?;
        if inf_v == f64::NEG_INFINITY {
            return Err(Error::Configuration(format!("cell {i} contains a pole but is not the central cell")));
        }
        let top = lambda - inf_v + m * b * b;
        if top > 0.0 {
            cell_sum += cell.support_volume() * top.powf(half_d);
        }
    }
    cell_sum *= consts.nodal_prefactor();
    Ok(NodalBound { total: mu0 + cell_sum, mu0, cell_sum, m })
}

/// `μ₀ = (C/K_d)^{d/2} |B_{0,δ}|` with `C = -inf(2V + h) + 2M sup|∇A₀|²`
/// and `h` the Hardy weight valid on the inflated central box. Does not
/// depend on `λ`.
pub fn central_cell_bound(spec: &PotentialSpec, partition: &PartitionOfUnity) -> Result<f64> {
    let d = partition.d;
    let i0 = partition.central_cell().ok_or_else(|| Error::Configuration("partition has no central cell".into()))?;
    let cell = &partition.cells[i0];
    let poles: Vec<Vec<f64>> = spec.poles.iter().map(|p| p.location.clone()).collect();
    let radius = (d == 2).then(|| cell.support_half_width() * (d as f64).sqrt() * 1.001);
    let w = hardy_weight(&poles, d, radius)?;
    let inf = weighted_infimum(spec, &w, 2.0)?;
    let b0 = partition.gradient_bounds[i0];
    let c = (-inf + 2.0 * overlap_limit(d) * b0 * b0).max(0.0);
    let kd = DimensionalConstants::new(d)?.faber_krahn;
    Ok((c / kd).powf(d as f64 / 2.0) * cell.support_volume())
}
