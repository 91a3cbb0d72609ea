//! Eigenpairs of grid Hamiltonians, exact harmonic-oscillator references and
//! Dirichlet-bracketing eigenvalue counts.

mod lobpcg;
mod operator;

pub use lobpcg::{lobpcg, LobpcgOptions, LobpcgResult};
pub use operator::{
    assemble_hamiltonian, sample_potential, sample_potential_at, AssemblyOptions, GridHamiltonian, NoPreconditioner, PoleRegularization,
    Preconditioner, SinePreconditioner, SymmetricOperator,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, SampledField};
use crate::partition::CubeCell;
use crate::potentials::{Case, PotentialSpec};

/// Eigenvalue, sampled eigenfunction (`Σ u² h^d = 1`) and residual
/// `‖Hu - λu‖/‖u‖` under the grid operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub lambda: f64,
    pub field: SampledField,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub seed: u64,
    pub guard: usize,
    pub max_iter: usize,
    /// Shift `σ` of the `(-Δ_h + σ)^{-1}` preconditioner; `None` picks
    /// `max(1, mean V)`, which tracks the potential scale of confining
    /// problems and stays small for attractive wells.
    pub preconditioner_shift: Option<f64>,
}

impl Default for EigenOptions {
    fn default() -> Self {
        let base = LobpcgOptions::default();
        Self { tol: base.tol, seed: base.seed, guard: base.guard, max_iter: base.max_iter, preconditioner_shift: None }
    }
}

/// Flips the sign so that the largest-magnitude entry is positive.
pub fn normalize_sign(values: &mut [f64]) {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = i;
        }
    }
    if values.get(best).is_some_and(|v| *v < 0.0) {
        values.iter_mut().for_each(|v| *v = -*v);
    }
}

/// `‖H u - λ u‖ / ‖u‖` in the Euclidean norm of node values.
pub fn residual_norm(op: &dyn SymmetricOperator, u: &[f64], lambda: f64) -> f64 {
    let mut hu = vec![0.0; u.len()];
    op.apply(u, &mut hu);
    let num: f64 = hu.iter().zip(u).map(|(a, b)| (a - lambda * b).powi(2)).sum();
    let den: f64 = u.iter().map(|v| v * v).sum();
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

fn to_pair(grid: Grid, op: &dyn SymmetricOperator, mut values: Vec<f64>, lambda: f64) -> EigenPair {
    normalize_sign(&mut values);
    let norm = (values.iter().map(|v| v * v).sum::<f64>() * grid.cell_volume()).sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    let residual = residual_norm(op, &values, lambda);
    EigenPair { lambda, field: SampledField { grid, values }, residual }
}

/// The `k` lowest eigenpairs with residual at most `tol`.
pub fn lowest_eigenpairs(op: &GridHamiltonian, k: usize, tol: f64) -> Result<Vec<EigenPair>> {
    lowest_eigenpairs_with(op, k, &EigenOptions { tol, ..Default::default() })
}

pub fn lowest_eigenpairs_with(op: &GridHamiltonian, k: usize, opts: &EigenOptions) -> Result<Vec<EigenPair>> {
    if !(opts.tol > 0.0) {
        return Err(Error::Domain("eigensolver tolerance must be positive".into()));
    }
    let sigma = opts.preconditioner_shift.unwrap_or_else(|| op.potential_mean().max(1.0));
    let pre = SinePreconditioner::new(op.grid, sigma)?;
    let lob = LobpcgOptions { tol: opts.tol, max_iter: opts.max_iter, guard: opts.guard, seed: opts.seed };
    let res = lobpcg(op, &pre, k, &lob)?;
    Ok((0..res.eigenvalues.len())
        .map(|j| to_pair(op.grid, op, res.vectors.column(j).iter().copied().collect(), res.eigenvalues[j]))
        .collect())
}

/// Physicists' Hermite polynomial `H_k(x)` by the three-term recurrence.
pub fn hermite(k: u32, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * x);
    if k == 0 {
        return prev;
    }
    for j in 1..k {
        let next = 2.0 * x * cur - 2.0 * j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Unnormalised exact eigenfunction `H_{k1}(x) H_{k2}(y) e^{-|x|²/2}`.
pub fn ho_eigenfunction(k1: u32, k2: u32, x: &[f64]) -> f64 {
    hermite(k1, x[0]) * hermite(k2, x[1]) * (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp()
}

/// Exact eigenpair `λ = 2(k1 + k2 + 1)` of `-Δ + |x|²` in two dimensions,
/// sampled on `grid`; the residual is measured under the grid operator.
pub fn ho_reference(k1: u32, k2: u32, grid: Grid) -> Result<EigenPair> {
    if grid.d != 2 {
        return Err(Error::Domain(format!("harmonic-oscillator references are two-dimensional, grid has d = {}", grid.d)));
    }
    let op = assemble_hamiltonian(&PotentialSpec::harmonic_oscillator(), grid, &AssemblyOptions::default())?;
    let values = grid.sample(|x| ho_eigenfunction(k1, k2, x));
    Ok(to_pair(grid, &op, values, 2.0 * (k1 + k2 + 1) as f64))
}

/// Largest `|ψ|` on boundary-adjacent nodes relative to `max|ψ|`; the
/// reference is meaningful when this is far below the solver tolerance.
pub fn ho_boundary_tail(k1: u32, k2: u32, grid: Grid) -> f64 {
    let values = grid.sample(|x| ho_eigenfunction(k1, k2, x));
    let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let edge = (0..grid.len())
        .filter(|&i| grid.multi_index(i).iter().any(|&j| j == 0 || j + 1 == grid.n))
        .fold(0.0f64, |m, i| m.max(values[i].abs()));
    if peak == 0.0 {
        0.0
    } else {
        edge / peak
    }
}

/// Harmonic-oscillator level `(k1, k2)` with `λ = 2(k1 + k2 + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoLevel {
    pub k1: u32,
    pub k2: u32,
}

impl HoLevel {
    pub fn lambda(&self) -> f64 {
        2.0 * (self.k1 + self.k2 + 1) as f64
    }

    /// Nodal-domain count `(k1 + 1)(k2 + 1)` of the product eigenfunction.
    pub fn nodal_count(&self) -> u64 {
        (self.k1 as u64 + 1) * (self.k2 as u64 + 1)
    }
}

/// Every level with `λ < lambda_max`, ordered by `λ` then `k1`.
pub fn ho_ladder(lambda_max: f64) -> Vec<HoLevel> {
    let mut out = Vec::new();
    let mut s = 0u32;
    while 2.0 * (s as f64 + 1.0) < lambda_max {
        out.extend((0..=s).map(|k1| HoLevel { k1, k2: s - k1 }));
        s += 1;
    }
    out
}

/// `#{(k1, k2) : 2(k1 + k2) + 2 < λ}`.
pub fn exact_counting_ho(lambda: f64) -> u64 {
    let mut total = 0;
    let mut s = 0u64;
    while 2.0 * s as f64 + 2.0 < lambda {
        total += s + 1;
        s += 1;
    }
    total
}

/// Default enumeration budget of [`cube_dirichlet_count`].
pub const DIRICHLET_COUNT_BUDGET: u64 = 50_000_000;

/// `#{k ∈ ℤ^d_{≥1} : (π/side)² |k|² < threshold}`.
pub fn cube_dirichlet_count(side: f64, threshold: f64, d: usize) -> Result<u64> {
    cube_dirichlet_count_with_budget(side, threshold, d, DIRICHLET_COUNT_BUDGET)
}

pub fn cube_dirichlet_count_with_budget(side: f64, threshold: f64, d: usize, budget: u64) -> Result<u64> {
    if !(side > 0.0) || d == 0 {
        return Err(Error::Domain(format!("cube count needs side > 0 and d >= 1, got side = {side}, d = {d}")));
    }
    if threshold.is_nan() {
        return Err(Error::Domain("threshold is NaN".into()));
    }
    let scaled = threshold * (side / std::f64::consts::PI).powi(2);
    if scaled <= d as f64 {
        return Ok(0);
    }
    let mut work = 0u64;
    count_below(scaled, d, &mut work, budget)
}

/// Largest `k >= 0` with `k² < bound`.
fn largest_below(bound: f64) -> u64 {
    if bound <= 1.0 {
        return 0;
    }
    let mut k = bound.sqrt().floor() as u64;
    while k > 0 && (k * k) as f64 >= bound {
        k -= 1;
    }
    while ((k + 1) * (k + 1)) as f64 <= bound && ((k + 1) * (k + 1)) as f64 != bound {
        k += 1;
    }
    k
}

fn count_below(bound: f64, d: usize, work: &mut u64, budget: u64) -> Result<u64> {
    if d == 1 {
        return Ok(largest_below(bound));
    }
    let mut total = 0;
    let mut k = 1u64;
    // the remaining d-1 coordinates need at least d-1
    while (k * k) as f64 + ((d - 1) as f64) < bound {
        *work += 1;
        if *work > budget {
            return Err(Error::Resource(format!("Dirichlet count enumeration exceeded {budget} steps")));
        }
        total += count_below(bound - (k * k) as f64, d - 1, work, budget)?;
        k += 1;
    }
    Ok(total)
}

/// Dirichlet-bracketing lower bound `Σ_cells #{cube eigenvalues < λ - sup V}`
/// over disjoint core cubes. In Case B the central box is skipped.
pub fn counting_lower_bound(spec: &PotentialSpec, lambda: f64, cells: &[CubeCell]) -> Result<u64> {
    let mut total = 0;
    for cell in cells {
        if spec.case == Case::B && cell.layer == 0 {
            continue;
        }
        let (lo, hi) = cell.core_bounds();
        let (_, sup) = spec.range_on_box(&lo, &hi)?;
        total += cube_dirichlet_count(cell.side, lambda - sup, cell.dim())?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn cube_counts() {
        assert_eq!(cube_dirichlet_count(PI, 3.0, 2).unwrap(), 1);
        assert_eq!(cube_dirichlet_count(PI, 6.0, 2).unwrap(), 3);
        assert_eq!(cube_dirichlet_count(PI, 2.0, 2).unwrap(), 0);
        assert_eq!(cube_dirichlet_count(PI, 5.0, 2).unwrap(), 1);
        assert_eq!(cube_dirichlet_count(PI, 3.0, 3).unwrap(), 0);
        assert_eq!(cube_dirichlet_count(PI, 3.0 + 1e-12, 3).unwrap(), 1);
        assert_eq!(cube_dirichlet_count(PI, 7.0, 3).unwrap(), 4);
        assert!(matches!(cube_dirichlet_count_with_budget(PI, 1e8, 3, 1000), Err(Error::Resource(_))));
    }

    #[test]
    fn cube_counts_match_brute_force() {
        for threshold in [10.0, 37.5, 50.0, 101.0] {
            let mut brute = 0;
            for a in 1..20u64 {
                for b in 1..20u64 {
                    if ((a * a + b * b) as f64) < threshold {
                        brute += 1;
                    }
                }
            }
            assert_eq!(cube_dirichlet_count(PI, threshold, 2).unwrap(), brute);
        }
    }

    #[test]
    fn ho_counting() {
        assert_eq!(exact_counting_ho(2.0), 0);
        assert_eq!(exact_counting_ho(10.0), 10);
        assert_eq!(exact_counting_ho(60.0), 435);
        assert_eq!(ho_ladder(60.0).len(), 435);
        let ladder = ho_ladder(8.0);
        assert_eq!(ladder[1], HoLevel { k1: 0, k2: 1 });
        assert_eq!(ladder[2], HoLevel { k1: 1, k2: 0 });
    }

    #[test]
    fn hermite_recurrence() {
        assert_abs_diff_eq!(hermite(3, 0.7), 8.0 * 0.343 - 12.0 * 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(hermite(4, 1.1), 16.0 * 1.1f64.powi(4) - 48.0 * 1.21 + 12.0, epsilon = 1e-10);
    }

    #[test]
    fn reference_eigenvalues() {
        let g = Grid::new(2, 8.0, 63).unwrap();
        assert_eq!(ho_reference(0, 0, g).unwrap().lambda, 2.0);
        assert_eq!(ho_reference(2, 3, g).unwrap().lambda, 12.0);
        let p = ho_reference(0, 0, g).unwrap();
        assert!(p.field.values.iter().all(|&v| v > 0.0));
        assert_abs_diff_eq!(p.field.l2_norm(), 1.0, epsilon = 1e-12);
        assert!(ho_boundary_tail(0, 0, g) < 1e-12);
        // high modes reach the boundary of an L = 8 box above that level
        assert!(ho_boundary_tail(5, 5, g) > 1e-12);
    }

    #[test]
    fn free_box_ground_state() {
        let grid = Grid::new(2, PI / 2.0, 63).unwrap();
        let op = GridHamiltonian::from_potential(grid, vec![0.0; grid.len()]).unwrap();
        let pairs = lowest_eigenpairs(&op, 1, 1e-8).unwrap();
        let h = grid.spacing();
        let exact = 2.0 * (2.0 / h * (PI * h / (4.0 * grid.half_width)).sin()).powi(2);
        assert_abs_diff_eq!(pairs[0].lambda, exact, epsilon = 1e-9);
        assert!((pairs[0].lambda - 2.0).abs() < 2e-3);
        assert!(pairs[0].field.values.iter().all(|&v| v > 0.0));
        assert!(pairs[0].residual <= 1e-8);
    }

    #[test]
    fn coarse_oscillator_spectrum() {
        let grid = Grid::new(2, 7.0, 95).unwrap();
        let op = assemble_hamiltonian(&PotentialSpec::harmonic_oscillator(), grid, &AssemblyOptions::default()).unwrap();
        let pairs = lowest_eigenpairs(&op, 6, 1e-7).unwrap();
        let exact = [2.0, 4.0, 4.0, 6.0, 6.0, 6.0];
        for (p, e) in pairs.iter().zip(exact) {
            assert!((p.lambda - e).abs() / e < 0.01, "{} vs {e}", p.lambda);
            assert!(p.residual <= 1e-7);
        }
        for i in 0..pairs.len() {
            for j in 0..i {
                let dot: f64 = pairs[i].field.values.iter().zip(&pairs[j].field.values).map(|(a, b)| a * b).sum::<f64>()
                    * grid.cell_volume();
                assert!(dot.abs() < 1e-8);
            }
        }
    }
}
