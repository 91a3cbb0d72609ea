//! Multipole Hardy weights and the lower semibound of `-Δ + V`.
//!
//! For `d >= 3` the weight is the average of the translated classical
//! Hardy weights `((d-2)/2)² |x - x_i|^{-2}`. In the plane the logarithmic
//! variant `1/(4|y|² ln(|y|/2R)²)` is used, cut off by a smooth profile
//! that is one on `[0, 1/2]` and zero on `[3/4, ∞)` (in units of `2R`);
//! it is valid for test functions supported in the disc of radius `R`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Grid, SampledField};
use crate::partition::{smooth_step, SMOOTH_STEP_MAX_SLOPE};
use crate::potentials::{Case, Family, PotentialSpec};

/// Cutoff `η`: 1 on `[0, 1/2]`, 0 on `[3/4, ∞)`, smooth and non-increasing.
pub fn log_weight_cutoff(t: f64) -> f64 {
    smooth_step((0.75 - t) / 0.25)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyWeight {
    pub d: usize,
    pub poles: Vec<Vec<f64>>,
    /// Support radius of admissible test functions (planar weight only).
    pub radius: Option<f64>,
}

impl HardyWeight {
    /// Weight at `x`; `+∞` on a pole.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.poles.len() as f64;
        match self.radius {
            None => {
                let c = ((self.d as f64 - 2.0) / 2.0).powi(2) / n;
                self.poles.iter().map(|p| c / dist_sq(x, p)).sum()
            }
            Some(r) => {
                let scale = 2.0 * r;
                self.poles
                    .iter()
                    .map(|p| {
                        let rho = dist_sq(x, p).sqrt();
                        let t = rho / scale;
                        let cut = log_weight_cutoff(t);
                        if cut == 0.0 {
                            0.0
                        } else {
                            cut / (4.0 * n * rho * rho * t.ln().powi(2))
                        }
                    })
                    .sum()
            }
        }
    }

    /// Coefficient `c_i` of the leading singularity at each pole:
    /// `((d-2)/2)²/N` for `d >= 3`, `1/(4N)` in front of `1/(ρ² ln²ρ)` in
    /// the plane.
    pub fn pole_coefficient(&self) -> f64 {
        let n = self.poles.len() as f64;
        match self.radius {
            None => ((self.d as f64 - 2.0) / 2.0).powi(2) / n,
            Some(_) => 1.0 / (4.0 * n),
        }
    }
}

fn dist_sq(x: &[f64], p: &[f64]) -> f64 {
    x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub fn hardy_weight(poles: &[Vec<f64>], d: usize, radius: Option<f64>) -> Result<HardyWeight> {
    if poles.is_empty() {
        return Err(Error::Domain("a Hardy weight needs at least one pole".into()));
    }
    if poles.iter().any(|p| p.len() != d) {
        return Err(Error::Domain(format!("pole dimension does not match d = {d}")));
    }
    match d {
        0 | 1 => Err(Error::Domain(format!("no Hardy weight in dimension {d}"))),
        2 => {
            let reach = poles.iter().map(|p| dist_sq(p, &[0.0, 0.0]).sqrt()).fold(0.0, f64::max);
            match radius {
                Some(r) if r.is_finite() && r > reach => Ok(HardyWeight { d, poles: poles.to_vec(), radius: Some(r) }),
                Some(r) => Err(Error::Domain(format!("planar Hardy weight needs R > {reach} (largest pole norm), got {r}"))),
                None => Err(Error::Domain("planar Hardy weight needs a support radius R".into())),
            }
        }
        _ => Ok(HardyWeight { d, poles: poles.to_vec(), radius: None }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyReport {
    /// `∫|∇φ|² - ∫ h φ²` per field.
    pub margins: Vec<f64>,
    /// `∫|∇φ|²` per field.
    pub energies: Vec<f64>,
    pub min_margin: f64,
    /// Smallest `margin / energy` over fields with positive energy.
    pub min_relative_margin: f64,
}

/// Nodes within `3h` of a pole must vanish.
const POLE_CLEARANCE_NODES: f64 = 3.0;

fn check_support(w: &HardyWeight, field: &SampledField, which: usize) -> Result<()> {
    let grid = field.grid;
    if grid.d != w.d {
        return Err(Error::Precondition(format!("test field {which} has dimension {}, weight has {}", grid.d, w.d)));
    }
    let h = grid.spacing();
    let clearance = POLE_CLEARANCE_NODES * h;
    for (i, &v) in field.values.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let idx = grid.multi_index(i);
        if idx.iter().any(|&k| k == 0 || k + 1 == grid.n) {
            return Err(Error::Precondition(format!("test field {which} does not vanish next to the grid boundary")));
        }
        let x = grid.point(i);
        if w.poles.iter().any(|p| dist_sq(&x, p).sqrt() <= clearance) {
            return Err(Error::Precondition(format!("test field {which} does not vanish within {POLE_CLEARANCE_NODES} nodes of a pole")));
        }
        if let Some(r) = w.radius {
            if dist_sq(&x, &vec![0.0; w.d]).sqrt() >= r {
                return Err(Error::Precondition(format!("test field {which} is not supported in the disc of radius {r}")));
            }
        }
    }
    Ok(())
}

/// Dirichlet energy by forward differences (including the edges to the
/// zero boundary) and weighted mass by node quadrature.
fn hardy_terms(w: &HardyWeight, field: &SampledField) -> (f64, f64) {
    let grid = field.grid;
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let mut energy = 0.0;
    let mut weighted = 0.0;
    for (i, &v) in field.values.iter().enumerate() {
        let idx = grid.multi_index(i);
        for k in 0..grid.d {
            let next = if idx[k] + 1 < grid.n { field.values[i + grid.stride(k)] } else { 0.0 };
            energy += ((next - v) / h).powi(2);
            if idx[k] == 0 {
                energy += (v / h).powi(2);
            }
        }
        if v != 0.0 {
            weighted += w.eval(&grid.point(i)) * v * v;
        }
    }
    (energy * vol, weighted * vol)
}

/// Checks `∫|∇φ|² >= ∫ h φ²` on each test field.
pub fn verify_hardy(w: &HardyWeight, fields: &[SampledField]) -> Result<HardyReport> {
    for (i, f) in fields.iter().enumerate() {
        check_support(w, f, i)?;
    }
    let terms: Vec<(f64, f64)> = fields.par_iter().map(|f| hardy_terms(w, f)).collect();
    let margins: Vec<f64> = terms.iter().map(|(e, m)| e - m).collect();
    let energies: Vec<f64> = terms.iter().map(|t| t.0).collect();
    let min_margin = if margins.is_empty() { 0.0 } else { margins.iter().copied().fold(f64::INFINITY, f64::min) };
    let min_relative_margin = terms
        .iter()
        .filter(|(e, _)| *e > 0.0)
        .map(|(e, m)| (e - m) / e)
        .fold(f64::INFINITY, f64::min);
    Ok(HardyReport { margins, energies, min_margin, min_relative_margin })
}

/// Seeded smooth test functions: tensor plateau bumps placed near the
/// poles, multiplied by random quadratic polynomials and by a radial
/// cutoff vanishing within three nodes of every pole.
pub fn random_test_fields(grid: Grid, poles: &[Vec<f64>], radius: Option<f64>, count: usize, seed: u64) -> Vec<SampledField> {
    let d = grid.d;
    let h = grid.spacing();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hole = POLE_CLEARANCE_NODES * h * 1.05;
    let ramp = (3.0 * hole).max(0.2);
    // room left inside the grid (two nodes) and, in the plane, the disc
    let box_limit = grid.half_width - 2.0 * h;
    let disc_limit = radius.map(|r| 0.98 * r);

    (0..count)
        .map(|_| {
            let anchor = if poles.is_empty() { vec![0.0; d] } else { poles[rng.random_range(0..poles.len())].clone() };
            let (center, widths) = loop {
                let center: Vec<f64> = anchor.iter().map(|a| a + rng.random_range(-1.0..1.0)).collect();
                let widths: Vec<f64> = (0..d).map(|_| rng.random_range(0.4..1.6)).collect();
                let in_box = (0..d).all(|k| center[k].abs() + widths[k] < box_limit);
                let in_disc = disc_limit.is_none_or(|r| {
                    (0..d).map(|k| (center[k].abs() + widths[k]).powi(2)).sum::<f64>().sqrt() < r
                });
                if in_box && in_disc {
                    break (center, widths);
                }
            };
            let linear: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let quadratic: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
            let poles = poles.to_vec();
            SampledField::from_fn(grid, move |x| {
                let mut value = 1.0;
                let mut poly = 1.0;
                for k in 0..d {
                    let t = (x[k] - center[k]) / widths[k];
                    value *= smooth_step((1.0 - t.abs()) / 0.5);
                    poly += linear[k] * t + quadratic[k] * t * t;
                }
                if value == 0.0 {
                    return 0.0;
                }
                for p in &poles {
                    value *= smooth_step((dist_sq(x, p).sqrt() - hole) / ramp);
                }
                value * poly
            })
        })
        .collect()
}

/// Unit directions: a circle of angles in the plane, a Fibonacci sphere in
/// 3D and seeded Gaussian directions beyond.
fn directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..96).map(|i| {
            let t = 2.0 * PI * i as f64 / 96.0;
            vec![t.cos(), t.sin()]
        }).collect(),
        3 => {
            let n = 194;
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    vec![r * t.cos(), r * t.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0xd1ec);
            (0..256)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                    v.into_iter().map(|a| a / n).collect()
                })
                .collect()
        }
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (f(c), f(e));
    while (b - a).abs() > tol * (a.abs() + b.abs()).max(1e-300) {
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = f(e);
        }
    }
    if fc < fe { (c, fc) } else { (e, fe) }
}

const RAY_SAMPLES: usize = 240;
const RAY_INNER: f64 = 1e-14;

/// Infimum of `f` over space, searched along rays from each anchor on a
/// log-spaced radial mesh out to `far`, with golden-section refinement of
/// the best bracket on each ray. A minimum at the innermost radius means
/// `f` decreases into a singularity and is reported as unbounded.
pub(crate) fn infimum_along_rays(f: &(dyn Fn(&[f64]) -> f64 + Sync), anchors: &[Vec<f64>], d: usize, far: f64) -> Result<f64> {
    let dirs = directions(d);
    let log_lo = RAY_INNER.ln();
    let log_hi = far.ln();
    let radius = |i: usize| (log_lo + (log_hi - log_lo) * i as f64 / (RAY_SAMPLES - 1) as f64).exp();
    let rays: Vec<(&Vec<f64>, &Vec<f64>)> = anchors.iter().flat_map(|a| dirs.iter().map(move |u| (a, u))).collect();
    let results: Vec<Result<f64>> = rays
        .par_iter()
        .map(|(anchor, u)| {
            let at = |log_r: f64| {
                let r = log_r.exp();
                let x: Vec<f64> = anchor.iter().zip(u.iter()).map(|(a, b)| a + r * b).collect();
                f(&x)
            };
            let values: Vec<f64> = (0..RAY_SAMPLES).map(|i| at(radius(i).ln())).collect();
            let (best, &value) = values
                .iter()
                .enumerate()
                .filter(|(_, v)| !v.is_nan())
                .min_by(|a, b| a.1.total_cmp(b.1))
                .ok_or_else(|| Error::Numerical("objective is NaN along a whole ray".into()))?;
            if best == 0 || value == f64::NEG_INFINITY {
                return Err(Error::Numerical(format!(
                    "objective keeps decreasing towards the singular point {anchor:?}; it is not bounded below"
                )));
            }
            if best + 1 == RAY_SAMPLES {
                return Ok(value);
            }
            let (_, refined) = golden_section(at, radius(best - 1).ln(), radius(best + 1).ln(), 1e-13);
            Ok(refined.min(value))
        })
        .collect();
    results.into_iter().try_fold(f64::INFINITY, |m, r| Ok(m.min(r?)))
}

/// Points from which the ray search starts: the poles plus the origin
/// (the centre of pure power laws).
fn anchors(spec: &PotentialSpec, d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = spec.poles.iter().map(|p| p.location.clone()).collect();
    if matches!(spec.family, Family::Power { .. }) || out.is_empty() {
        out.push(vec![0.0; d]);
    }
    out
}

fn search_radius(spec: &PotentialSpec, d: usize) -> f64 {
    let reach = spec.poles.iter().map(|p| dist_sq(&p.location, &vec![0.0; d]).sqrt()).fold(0.0, f64::max);
    1e3 * (1.0 + reach + spec.m_radius)
}

fn potential_or_infinity(spec: &PotentialSpec, x: &[f64]) -> f64 {
    // a pole hit exactly counts as +∞ for the search; the weight is +∞ there too
    spec.evaluate(x).unwrap_or(f64::INFINITY)
}

/// Estimate of `inf (α V + h)` with `h` the Hardy weight.
pub fn weighted_infimum(spec: &PotentialSpec, w: &HardyWeight, alpha: f64) -> Result<f64> {
    let f = |x: &[f64]| {
        let hx = w.eval(x);
        if hx.is_infinite() {
            return f64::INFINITY;
        }
        alpha * potential_or_infinity(spec, x) + hx
    };
    infimum_along_rays(&f, &anchors(spec, w.d), w.d, search_radius(spec, w.d))
}

/// Radius `R` used for the planar weight: twice the largest pole norm
/// plus two, so every pole sits well inside `D(0, R)`.
fn planar_radius(spec: &PotentialSpec) -> f64 {
    let reach = spec.poles.iter().map(|p| dist_sq(&p.location, &[0.0, 0.0]).sqrt()).fold(0.0, f64::max);
    2.0 * (reach + 1.0)
}

/// Constant `C` with `⟨(-Δ+V)u, u⟩ >= -C ‖u‖²` (an estimate: the infima
/// are located by ray search, not certified).
///
/// Case A gives 0. For `d >= 3`, `C = -inf(h + V)`. In the plane the
/// bound is `C1 + C2 + C3` with a radial cutoff `χ` that is one on
/// `|x| <= P + 1` and vanishes at `R = 2(P + 1)` (`P` the largest pole
/// norm): `C1 = sup|∇χ|²`, `C2 = -inf V(1-χ²)`, `C3 = -min(0, inf(h/2 + V))`.
pub fn semibound_constant(spec: &PotentialSpec, d: usize) -> Result<f64> {
    if spec.case == Case::A {
        return Ok(0.0);
    }
    let poles: Vec<Vec<f64>> = spec.poles.iter().map(|p| p.location.clone()).collect();
    if poles.is_empty() {
        return Err(Error::Numerical("a singular potential without declared poles has no Hardy control".into()));
    }
    if d >= 3 {
        let w = hardy_weight(&poles, d, None)?;
        return Ok((-weighted_infimum(spec, &w, 1.0)?).max(0.0));
    }
    if d != 2 {
        return Err(Error::Domain(format!("semibound constant needs d >= 2, got {d}")));
    }
    let r = planar_radius(spec);
    let plateau = r / 2.0;
    let chi = move |x: &[f64]| smooth_step((r - dist_sq(x, &[0.0, 0.0]).sqrt()) / (r - plateau));
    let slope = SMOOTH_STEP_MAX_SLOPE / (r - plateau);
    let c1 = slope * slope;

    let outer = |x: &[f64]| {
        let c = chi(x);
        if c >= 1.0 {
            0.0
        } else {
            potential_or_infinity(spec, x) * (1.0 - c * c)
        }
    };
    let c2 = (-infimum_along_rays(&outer, &[vec![0.0, 0.0]], 2, search_radius(spec, 2))?).max(0.0);

    let w = hardy_weight(&poles, 2, Some(r))?;
    let inner = |x: &[f64]| {
        let hx = w.eval(x);
        if hx.is_infinite() {
            return f64::INFINITY;
        }
        0.5 * hx + potential_or_infinity(spec, x)
    };
    let c3 = -(infimum_along_rays(&inner, &anchors(spec, 2), 2, search_radius(spec, 2))?.min(0.0));
    Ok(c1 + c2 + c3)
}
