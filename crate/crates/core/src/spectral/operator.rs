//! Finite-difference Hamiltonian `-Δ_h + V` on a Dirichlet grid and the
//! fast sine-transform preconditioner.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Grid;
use crate::potentials::{Family, PotentialSpec};
use crate::quadrature;

/// Symmetric linear operator on `ℝ^n`.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Approximate inverse used to precondition residuals.
pub trait Preconditioner: Sync {
    /// `z ≈ A^{-1} r`.
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

/// Identity preconditioner.
pub struct NoPreconditioner;

impl Preconditioner for NoPreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// How `V` is sampled at nodes close to a pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoleRegularization {
    /// Exact average of the singular term over the node's dual cell
    /// (`d = 2`, built-in multipoles); other families fall back to a cap of
    /// radius `h/2`.
    #[default]
    CellAverage,
    /// Evaluate `V` at radial distance `max(radius, dist)` from the pole;
    /// `None` means `h/2`.
    Cap { radius: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct AssemblyOptions {
    pub regularization: PoleRegularization,
    /// Constant added to the diagonal.
    pub shift: f64,
}

/// `-Δ_h + V` with the `(2d+1)`-point stencil.
#[derive(Debug, Clone)]
pub struct GridHamiltonian {
    pub grid: Grid,
    /// `V` (plus shift) at each node.
    pub potential: Vec<f64>,
    inv_h2: f64,
}

const ROW_CHUNK: usize = 4096;

impl GridHamiltonian {
    pub fn from_potential(grid: Grid, potential: Vec<f64>) -> Result<Self> {
        if potential.len() != grid.len() {
            return Err(Error::Inconsistency("potential length does not match grid".into()));
        }
        let h = grid.spacing();
        Ok(Self { grid, potential, inv_h2: 1.0 / (h * h) })
    }

    pub fn potential_mean(&self) -> f64 {
        self.potential.iter().sum::<f64>() / self.potential.len().max(1) as f64
    }

    /// Minimum of the diagonal potential.
    pub fn potential_min(&self) -> f64 {
        self.potential.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl SymmetricOperator for GridHamiltonian {
    fn dim(&self) -> usize {
        self.grid.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let g = &self.grid;
        let (n, d) = (g.n, g.d);
        let strides: Vec<usize> = (0..d).map(|k| g.stride(k)).collect();
        let centre = 2.0 * d as f64 * self.inv_h2;
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(chunk, out)| {
            let start = chunk * ROW_CHUNK;
            for (off, yi) in out.iter_mut().enumerate() {
                let i = start + off;
                let mut acc = (centre + self.potential[i]) * x[i];
                for &s in &strides {
                    let pos = (i / s) % n;
                    if pos > 0 {
                        acc -= self.inv_h2 * x[i - s];
                    }
                    if pos + 1 < n {
                        acc -= self.inv_h2 * x[i + s];
                    }
                }
                *yi = acc;
            }
        });
    }
}

/// `∫∫_{[0,w]×[0,v]} |y|^{-a} dy` for a rectangle with the pole at a corner.
fn corner_rectangle_integral(w: f64, v: f64, a: f64) -> f64 {
    if w <= 0.0 || v <= 0.0 {
        return 0.0;
    }
    // polar split along the diagonal; with t = tan θ each triangle is
    // w^{2-a}/(2-a) ∫_0^{v/w} (1+t²)^{-a/2} dt
    let tri = |w: f64, v: f64| w.powf(2.0 - a) / (2.0 - a) * tangent_integral(v / w, a);
    tri(w, v) + tri(v, w)
}

/// `∫_0^T (1+t²)^{-a/2} dt` on geometric panels.
fn tangent_integral(t_max: f64, a: f64) -> f64 {
    let f = |t: f64| (1.0 + t * t).powf(-0.5 * a);
    let mut total = 0.0;
    let mut lo = 0.0;
    let mut hi = t_max.min(1.0);
    loop {
        total += quadrature::integrate(f, lo, hi, 12);
        if hi >= t_max {
            break;
        }
        lo = hi;
        hi = (2.0 * hi).min(t_max);
    }
    total
}

/// Mean of `|y - p|^{-a}` over the square `x ± h/2` (which contains `p`).
fn cell_average_2d(x: &[f64], p: &[f64], h: f64, a: f64) -> f64 {
    let half = 0.5 * h;
    let (dx, dy) = (p[0] - x[0], p[1] - x[1]);
    let (left, right) = (half + dx, half - dx);
    let (down, up) = (half + dy, half - dy);
    let total = corner_rectangle_integral(left, down, a)
        + corner_rectangle_integral(left, up, a)
        + corner_rectangle_integral(right, down, a)
        + corner_rectangle_integral(right, up, a);
    total / (h * h)
}

fn capped_value(spec: &PotentialSpec, x: &[f64], radius: f64) -> Result<f64> {
    for pole in &spec.poles {
        let diff: Vec<f64> = x.iter().zip(&pole.location).map(|(a, b)| a - b).collect();
        let dist = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
        if dist < radius {
            let moved: Vec<f64> = if dist > 0.0 {
                pole.location.iter().zip(&diff).map(|(p, v)| p + v * radius / dist).collect()
            } else {
                let mut m = pole.location.clone();
                m[0] += radius;
                m
            };
            return spec.evaluate(&moved);
        }
    }
    spec.evaluate(x)
}

struct NodeSampler<'a> {
    spec: &'a PotentialSpec,
    h: f64,
    cell_average: bool,
    cap: f64,
    shift: f64,
}

impl<'a> NodeSampler<'a> {
    fn new(spec: &'a PotentialSpec, grid: &Grid, options: &AssemblyOptions) -> Result<Self> {
        let h = grid.spacing();
        let cell_average = matches!(options.regularization, PoleRegularization::CellAverage)
            && grid.d == 2
            && matches!(spec.family, Family::CoulombMultipole);
        let cap = match options.regularization {
            PoleRegularization::Cap { radius } => radius.unwrap_or(0.5 * h),
            PoleRegularization::CellAverage => 0.5 * h,
        };
        if !(cap >= 0.0) {
            return Err(Error::Domain(format!("pole cap radius must be non-negative, got {cap}")));
        }
        Ok(Self { spec, h, cell_average, cap, shift: options.shift })
    }

    fn at(&self, x: &[f64]) -> Result<f64> {
        let (spec, h) = (self.spec, self.h);
        let v = if self.cell_average {
            let mut v = 0.0;
            for pole in &spec.poles {
                let inside = x.iter().zip(&pole.location).all(|(a, b)| (a - b).abs() <= 0.5 * h);
                v -= pole.strength
                    * if inside {
                        cell_average_2d(x, &pole.location, h, pole.exponent)
                    } else {
                        let r: f64 = x.iter().zip(&pole.location).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                        r.powf(-pole.exponent)
                    };
            }
            v
        } else if self.cap > 0.0 {
            capped_value(spec, x, self.cap)?
        } else {
            spec.evaluate(x)?
        };
        Ok(v + self.shift)
    }
}

/// Diagonal potential values on the grid.
pub fn sample_potential(spec: &PotentialSpec, grid: &Grid, options: &AssemblyOptions) -> Result<Vec<f64>> {
    let sampler = NodeSampler::new(spec, grid, options)?;
    (0..grid.len()).into_par_iter().map(|i| sampler.at(&grid.point(i))).collect()
}

/// Potential values at selected nodes, identical to the corresponding
/// entries of [`sample_potential`].
pub fn sample_potential_at(spec: &PotentialSpec, grid: &Grid, options: &AssemblyOptions, nodes: &[usize]) -> Result<Vec<f64>> {
    let sampler = NodeSampler::new(spec, grid, options)?;
    nodes.iter().map(|&i| sampler.at(&grid.point(i))).collect()
}

/// Grid Hamiltonian of `spec`.
pub fn assemble_hamiltonian(spec: &PotentialSpec, grid: Grid, options: &AssemblyOptions) -> Result<GridHamiltonian> {
    if let Some(p) = spec.poles.first() {
        if p.location.len() != grid.d {
            return Err(Error::Configuration(format!("pole dimension {} does not match grid dimension {}", p.location.len(), grid.d)));
        }
    }
    let potential = sample_potential(spec, &grid, options)?;
    GridHamiltonian::from_potential(grid, potential)
}

/// Exact inverse of `-Δ_h + σ` on the grid by sine transforms along each
/// axis (odd extension to length `2(n+1)` and a complex FFT).
pub struct SinePreconditioner {
    grid: Grid,
    sigma: f64,
    /// 1-D eigenvalues of `-d²/dx²_h`.
    axis_eigs: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl SinePreconditioner {
    pub fn new(grid: Grid, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("preconditioner shift must be positive, got {sigma}")));
        }
        let n = grid.n;
        let h = grid.spacing();
        let axis_eigs = (1..=n).map(|j| (2.0 / h * (PI * j as f64 / (2.0 * (n as f64 + 1.0))).sin()).powi(2)).collect();
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Ok(Self { grid, sigma, axis_eigs, fft })
    }

    /// Unnormalised DST-I of every line along `axis`. Two real lines share
    /// one complex FFT: odd real data transforms to a purely imaginary
    /// spectrum, so the second line can ride in the imaginary part.
    fn transform_axis(&self, data: &mut [f64], axis: usize) {
        let n = self.grid.n;
        let len = 2 * (n + 1);
        let stride = self.grid.stride(axis);
        let starts: Vec<usize> = (0..data.len()).filter(|&s| (s / stride) % n == 0).collect();
        let mut buf = vec![Complex::new(0.0, 0.0); len];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        for pair in starts.chunks(2) {
            let (a, b) = (pair[0], pair.get(1).copied());
            buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
            for k in 0..n {
                let va = data[a + k * stride];
                let vb = b.map_or(0.0, |b| data[b + k * stride]);
                buf[k + 1] = Complex::new(va, vb);
                buf[len - 1 - k] = Complex::new(-va, -vb);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for j in 0..n {
                data[a + j * stride] = -0.5 * buf[j + 1].im;
                if let Some(b) = b {
                    data[b + j * stride] = 0.5 * buf[j + 1].re;
                }
            }
        }
    }

    fn eigenvalue(&self, flat: usize) -> f64 {
        self.grid.multi_index(flat).iter().map(|&j| self.axis_eigs[j]).sum::<f64>() + self.sigma
    }
}

impl Preconditioner for SinePreconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        let d = self.grid.d;
        for axis in 0..d {
            self.transform_axis(z, axis);
        }
        // the DST-I squares to (n+1)/2 per axis
        let norm = (2.0 / (self.grid.n as f64 + 1.0)).powi(d as i32);
        for (i, v) in z.iter_mut().enumerate() {
            *v *= norm / self.eigenvalue(i);
        }
        for axis in 0..d {
            self.transform_axis(z, axis);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn corner_integral_matches_closed_form() {
        // ∫∫_{[0,1]²} 1/|y| = 2 ln(1+√2)
        let v = corner_rectangle_integral(1.0, 1.0, 1.0);
        assert_abs_diff_eq!(v, 2.0 * (1.0 + 2f64.sqrt()).ln(), epsilon = 1e-13);
        // a = 0 gives the area
        assert_abs_diff_eq!(corner_rectangle_integral(0.3, 2.0, 0.0), 0.6, epsilon = 1e-13);
        // elongated rectangle against the split into two squares-and-strip pieces
        let total = corner_rectangle_integral(1.0, 5.0, 1.0);
        let by_parts = corner_rectangle_integral(1.0, 1.0, 1.0)
            + quadrature::integrate(|y| quadrature::integrate(|x| 1.0 / (x * x + y * y).sqrt(), 0.0, 1.0, 20), 1.0, 5.0, 20);
        assert_abs_diff_eq!(total, by_parts, epsilon = 1e-10);
    }

    #[test]
    fn centred_cell_average() {
        let h = 0.2;
        let avg = cell_average_2d(&[0.0, 0.0], &[0.0, 0.0], h, 1.0);
        assert_abs_diff_eq!(avg, 4.0 * (1.0 + 2f64.sqrt()).ln() / h, epsilon = 1e-10);
    }

    #[test]
    fn shift_adds_identity() {
        let spec = PotentialSpec::harmonic_oscillator();
        let grid = Grid::new(2, 4.0, 15).unwrap();
        let a = assemble_hamiltonian(&spec, grid, &AssemblyOptions::default()).unwrap();
        let b = assemble_hamiltonian(&spec, grid, &AssemblyOptions { shift: 1.5, ..Default::default() }).unwrap();
        let x: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let (mut ya, mut yb) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        a.apply(&x, &mut ya);
        b.apply(&x, &mut yb);
        for i in 0..x.len() {
            assert_abs_diff_eq!(yb[i] - ya[i], 1.5 * x[i], epsilon = 1e-11);
        }
    }

    #[test]
    fn operator_is_symmetric() {
        let spec = PotentialSpec::coulomb(2.0, 1.0, 2).unwrap();
        let grid = Grid::new(2, 3.0, 12).unwrap();
        let h = assemble_hamiltonian(&spec, grid, &AssemblyOptions::default()).unwrap();
        let x: Vec<f64> = (0..grid.len()).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let y: Vec<f64> = (0..grid.len()).map(|i| ((i * 3) % 5) as f64).collect();
        let (mut hx, mut hy) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        h.apply(&x, &mut hx);
        h.apply(&y, &mut hy);
        let a: f64 = hx.iter().zip(&y).map(|(p, q)| p * q).sum();
        let b: f64 = hy.iter().zip(&x).map(|(p, q)| p * q).sum();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn pole_on_node_without_cap_is_singular() {
        let spec = PotentialSpec::coulomb(2.0, 1.0, 2).unwrap();
        let grid = Grid::new(2, 1.0, 3).unwrap();
        let opts = AssemblyOptions { regularization: PoleRegularization::Cap { radius: Some(0.0) }, shift: 0.0 };
        assert!(matches!(assemble_hamiltonian(&spec, grid, &opts), Err(Error::Singularity { .. })));
        let opts = AssemblyOptions { regularization: PoleRegularization::Cap { radius: None }, shift: 0.0 };
        let h = assemble_hamiltonian(&spec, grid, &opts).unwrap();
        assert_abs_diff_eq!(h.potential[4], -2.0 / (0.25), epsilon = 1e-12);
    }

    #[test]
    fn preconditioner_inverts_free_operator() {
        for d in [1, 2, 3] {
            let grid = Grid::new(d, 1.5, 9).unwrap();
            let sigma = 0.7;
            let free = GridHamiltonian::from_potential(grid, vec![sigma; grid.len()]).unwrap();
            let p = SinePreconditioner::new(grid, sigma).unwrap();
            let x: Vec<f64> = (0..grid.len()).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
            let mut hx = vec![0.0; x.len()];
            free.apply(&x, &mut hx);
            let mut back = vec![0.0; x.len()];
            p.apply(&hx, &mut back);
            for i in 0..x.len() {
                assert_abs_diff_eq!(back[i], x[i], epsilon = 1e-10);
            }
        }
    }
}
