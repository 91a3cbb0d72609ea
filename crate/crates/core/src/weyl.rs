//! Weyl integrals `∫ (λ - V)₊^{d/2}`, Dirichlet–Neumann style bracketing
//! sums around them, and log–log fits of their growth.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{build_annular_layout, build_lattice_partition, overlap_limit, tile_annuli, PartitionKind, PartitionOfUnity};
use crate::potentials::{Case, PotentialSpec};
use crate::quadrature::gauss_legendre;

/// Relative accuracy requested from the adaptive quadrature.
pub const WEYL_REL_TOL: f64 = 1e-6;
/// Maximal number of bisections of a quadrature cell.
pub const WEYL_MAX_DEPTH: u32 = 12;
const RULE_POINTS: usize = 4;
const INITIAL_SPLITS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylIntegral {
    pub value: f64,
    /// Sum of per-cell two-level differences.
    pub error_estimate: f64,
    pub cells: usize,
    /// Whether the depth cap stopped refinement before the tolerance was met.
    pub capped: bool,
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

struct Integrand<'a> {
    spec: &'a PotentialSpec,
    lambda: f64,
    half_d: f64,
    rule: Rule,
}

impl Integrand<'_> {
    fn at(&self, x: &[f64]) -> Result<f64> {
        let v = match self.spec.evaluate(x) {
            Ok(v) => v,
            Err(Error::Singularity { .. }) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        let t = self.lambda - v;
        Ok(if t > 0.0 { t.powf(self.half_d) } else { 0.0 })
    }

    /// Tensor Gauss–Legendre estimate over a box.
    fn box_rule(&self, lo: &[f64], hi: &[f64]) -> Result<f64> {
        let d = lo.len();
        let p = self.rule.nodes.len();
        let total = p.pow(d as u32);
        let mut x = vec![0.0; d];
        let mut sum = 0.0;
        for flat in 0..total {
            let mut rem = flat;
            let mut w = 1.0;
            for k in 0..d {
                let j = rem % p;
                rem /= p;
                let half = 0.5 * (hi[k] - lo[k]);
                x[k] = lo[k] + half * (1.0 + self.rule.nodes[j]);
                w *= self.rule.weights[j] * half;
            }
            sum += w * self.at(&x)?;
        }
        Ok(sum)
    }

    fn children(lo: &[f64], hi: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let d = lo.len();
        (0..1usize << d)
            .map(|mask| {
                let mut a = lo.to_vec();
                let mut b = hi.to_vec();
                for k in 0..d {
                    let mid = 0.5 * (lo[k] + hi[k]);
                    if mask >> k & 1 == 1 {
                        a[k] = mid;
                    } else {
                        b[k] = mid;
                    }
                }
                (a, b)
            })
            .collect()
    }
}

struct QuadCell {
    lo: Vec<f64>,
    hi: Vec<f64>,
    depth: u32,
    /// Estimates of the `2^d` children, refined value of this cell.
    child_values: Vec<f64>,
    fine: f64,
    error: f64,
}

impl QuadCell {
    fn new(f: &Integrand, lo: Vec<f64>, hi: Vec<f64>, depth: u32, coarse: f64) -> Result<Self> {
        let child_values = Integrand::children(&lo, &hi).iter().map(|(a, b)| f.box_rule(a, b)).collect::<Result<Vec<_>>>()?;
        let fine: f64 = child_values.iter().sum();
        Ok(Self { lo, hi, depth, child_values, fine, error: (fine - coarse).abs() })
    }
}

impl PartialEq for QuadCell {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for QuadCell {}
impl PartialOrd for QuadCell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QuadCell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Box `[-ρ, ρ]^d` with `ρ` the central radius of the potential.
pub fn default_excluded_box(spec: &PotentialSpec, d: usize) -> (Vec<f64>, Vec<f64>) {
    let rho = spec.central_radius();
    (vec![-rho; d], vec![rho; d])
}

/// `∫ (λ - V)₊^{d/2}` over space (Case A) or outside the default central
/// box (Case B).
pub fn weyl_integral(spec: &PotentialSpec, lambda: f64, d: usize) -> Result<f64> {
    let excluded = (spec.case == Case::B).then(|| default_excluded_box(spec, d));
    weyl_integral_report(spec, lambda, d, excluded.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())), WEYL_REL_TOL).map(|r| r.value)
}

/// Adaptive quadrature of `(λ - V)₊^{d/2}` over the ball outside which the
/// lower envelope guarantees `V >= λ`, minus an optional excluded box.
/// Cells with the largest two-level discrepancy are bisected first.
pub fn weyl_integral_report(spec: &PotentialSpec, lambda: f64, d: usize, excluded: Option<(&[f64], &[f64])>, rel_tol: f64) -> Result<WeylIntegral> {
    if d < 1 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if spec.case == Case::B {
        if !(lambda < 0.0) {
            return Err(Error::Domain(format!("Case B Weyl integrals need lambda < 0, got {lambda}")));
        }
        if excluded.is_none() {
            return Err(Error::Domain("Case B Weyl integrals must exclude a central box".into()));
        }
    }
    let empty = WeylIntegral { value: 0.0, error_estimate: 0.0, cells: 0, capped: false };
    let Some(radius) = spec.sublevel_radius(lambda) else { return Ok(empty) };
    let radius = radius.max(if spec.case == Case::A { 0.0 } else { spec.m_radius }) * (1.0 + 1e-12);
    if radius <= 0.0 {
        return Ok(empty);
    }
    let (nodes, weights) = gauss_legendre(RULE_POINTS);
    let f = Integrand { spec, lambda, half_d: d as f64 / 2.0, rule: Rule { nodes, weights } };

    // axis breakpoints: the outer box, the excluded box faces, uniform splits
    let mut cuts: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut c: Vec<f64> = (0..=INITIAL_SPLITS).map(|i| -radius + 2.0 * radius * i as f64 / INITIAL_SPLITS as f64).collect();
        if let Some((lo, hi)) = excluded {
            c.extend([lo[k], hi[k]].iter().filter(|v| v.abs() < radius));
        }
        c.sort_by(f64::total_cmp);
        c.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * radius);
        cuts.push(c);
    }
    let counts: Vec<usize> = cuts.iter().map(|c| c.len() - 1).collect();
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<QuadCell> = Vec::new();
    let total_initial: usize = counts.iter().product();
    for flat in 0..total_initial {
        let mut rem = flat;
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for k in 0..d {
            let j = rem % counts[k];
            rem /= counts[k];
            lo[k] = cuts[k][j];
            hi[k] = cuts[k][j + 1];
        }
        if let Some((elo, ehi)) = excluded {
            let mid_inside = (0..d).all(|k| {
                let m = 0.5 * (lo[k] + hi[k]);
                m > elo[k] && m < ehi[k]
            });
            if mid_inside {
                continue;
            }
        }
        let coarse = f.box_rule(&lo, &hi)?;
        heap.push(QuadCell::new(&f, lo, hi, 0, coarse)?);
    }

    let totals = |heap: &BinaryHeap<QuadCell>, frozen: &[QuadCell]| {
        heap.iter().chain(frozen).fold((0.0, 0.0), |(v, e), c| (v + c.fine, e + c.error))
    };
    let (mut value, mut error) = totals(&heap, &frozen);
    let mut steps = 0usize;
    while error > rel_tol * value.abs() {
        let Some(cell) = heap.pop() else { break };
        if cell.depth >= WEYL_MAX_DEPTH {
            frozen.push(cell);
            continue;
        }
        value -= cell.fine;
        error -= cell.error;
        for ((lo, hi), coarse) in Integrand::children(&cell.lo, &cell.hi).into_iter().zip(cell.child_values) {
            let child = QuadCell::new(&f, lo, hi, cell.depth + 1, coarse)?;
            value += child.fine;
            error += child.error;
            heap.push(child);
        }
        steps += 1;
        if steps % 4096 == 0 {
            // resynchronise the running sums
            (value, error) = totals(&heap, &frozen);
        }
    }
    let (value, error) = totals(&heap, &frozen);
    if !value.is_finite() {
        return Err(Error::Numerical(format!("Weyl integrand is not integrable at lambda = {lambda}; check the declared exponents")));
    }
    let capped = error > rel_tol * value.abs();
    Ok(WeylIntegral { value, error_estimate: error, cells: heap.len() + frozen.len(), capped })
}

/// Upper sum, Weyl integral, lower sum and defect at one `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    pub lambda: f64,
    pub weyl: f64,
    /// `Σ |core_i| sup_{U_i}(λ - V + G_i)₊^{d/2}`.
    pub upper_sum: f64,
    /// `Σ |core_i ∖ excluded| inf_{core_i}(λ - V)₊^{d/2}`.
    pub lower_sum: f64,
    /// `upper_sum - weyl`.
    pub defect: f64,
    /// Short description of the partition used.
    pub partition: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BracketOptions {
    /// Uniform gradient term replacing the per-cell `M b_i²`.
    pub gradient_term: Option<f64>,
    /// Skip the check that the partition scale matches the potential's exponents.
    pub allow_any_scale: bool,
}

pub fn bracket_sums(spec: &PotentialSpec, lambda: f64, partition: &PartitionOfUnity, d: usize) -> Result<BracketReport> {
    bracket_sums_with(spec, lambda, partition, d, BracketOptions::default())
}

fn describe(p: &PartitionOfUnity) -> String {
    match &p.kind {
        PartitionKind::Lattice { mu, delta, .. } => format!("lattice mu={mu:.6} delta={delta} cells={}", p.len()),
        PartitionKind::Annular { layout, delta } => {
            format!("annular r={} q={:.6} layers={} delta={delta} cells={}", layout.r, layout.q, layout.layers.len(), p.len())
        }
        PartitionKind::Single => format!("single side={}", p.cells[0].side),
    }
}

fn box_overlap_volume(alo: &[f64], ahi: &[f64], blo: &[f64], bhi: &[f64]) -> f64 {
    (0..alo.len()).map(|k| (ahi[k].min(bhi[k]) - alo[k].max(blo[k])).max(0.0)).product()
}

pub fn bracket_sums_with(spec: &PotentialSpec, lambda: f64, partition: &PartitionOfUnity, d: usize, options: BracketOptions) -> Result<BracketReport> {
    if partition.d != d {
        return Err(Error::Inconsistency(format!("partition has dimension {}, expected {d}", partition.d)));
    }
    if !options.allow_any_scale {
        let mismatch = |have: f64, want: f64| (have - want).abs() > 1e-9 * want.abs().max(1.0);
        match &partition.kind {
            PartitionKind::Lattice { m, .. } if mismatch(*m, spec.lattice_scale_exponent()) => {
                return Err(Error::Configuration(format!("lattice exponent m = {m} but the potential asks for c/(3a) = {}", spec.lattice_scale_exponent())));
            }
            PartitionKind::Annular { layout, .. } if mismatch(layout.q, spec.annular_exponent()) => {
                return Err(Error::Configuration(format!("annular exponent q = {} but the potential asks for c/3 = {}", layout.q, spec.annular_exponent())));
            }
            _ => {}
        }
    }
    let central = partition.central_cell().filter(|_| spec.case == Case::B);
    let excluded = match central {
        Some(i) => Some(partition.cells[i].support_bounds()),
        None if spec.case == Case::B => {
            return Err(Error::Configuration("Case B bracketing needs a partition with a central box".into()));
        }
        None => None,
    };
    let m = overlap_limit(d);
    let half_d = d as f64 / 2.0;
    let mut upper = 0.0;
    let mut lower = 0.0;
    for (i, (cell, b)) in partition.cells.iter().zip(&partition.gradient_bounds).enumerate() {
        if Some(i) == central {
            continue;
        }
        let g = options.gradient_term.unwrap_or(m * b * b);
        let (slo, shi) = cell.support_bounds();
        let (inf_support, _) = spec.range_on_box(&slo, &shi)?;
        let top = lambda - inf_support + g;
        if top > 0.0 {
            upper += cell.core_volume() * top.powf(half_d);
        }
        let (clo, chi) = cell.core_bounds();
        let (_, sup_core) = spec.range_on_box(&clo, &chi)?;
        let bottom = lambda - sup_core;
        if bottom > 0.0 {
            let mut vol = cell.core_volume();
            if let Some((elo, ehi)) = &excluded {
                vol -= box_overlap_volume(&clo, &chi, elo, ehi);
            }
            lower += vol * bottom.powf(half_d);
        }
    }
    let weyl = if lambda <= 0.0 && spec.case == Case::A {
        0.0
    } else {
        let ex = excluded.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice()));
        weyl_integral_report(spec, lambda, d, ex, WEYL_REL_TOL)?.value
    };
    Ok(BracketReport { lambda, weyl, upper_sum: upper, lower_sum: lower, defect: upper - weyl, partition: describe(partition) })
}

/// Partition at the potential's scale rule extending over the whole region
/// where `λ - V + G` can be positive, so the upper sum is not truncated.
pub fn bracketing_partition(spec: &PotentialSpec, lambda: f64, d: usize, delta: f64) -> Result<PartitionOfUnity> {
    let scale = match spec.case {
        Case::A => spec.lattice_scale_exponent(),
        Case::B => spec.annular_exponent(),
    };
    bracketing_partition_scaled(spec, lambda, d, delta, scale, spec.central_radius())
}

/// As [`bracketing_partition`] with an explicit scale exponent (`m` for
/// the lattice, `q` for the annuli) and annular inner radius.
pub fn bracketing_partition_scaled(spec: &PotentialSpec, lambda: f64, d: usize, delta: f64, scale: f64, inner_radius: f64) -> Result<PartitionOfUnity> {
    let m = overlap_limit(d);
    match spec.case {
        Case::A => {
            let exponent = scale;
            let mu = lambda.powf(-exponent);
            let b = crate::partition::lattice_gradient_constant(d, delta) / mu;
            let reach = spec.sublevel_radius(lambda + m * b * b).unwrap_or(0.0).max(spec.m_radius);
            build_lattice_partition(lambda, exponent, delta, reach * (1.0 + 1e-9) + mu, d)
        }
        Case::B => {
            if !(lambda < 0.0) {
                return Err(Error::Domain(format!("Case B needs lambda < 0, got {lambda}")));
            }
            let q = scale;
            let r = inner_radius;
            let base = spec.sublevel_radius(lambda).unwrap_or(spec.m_radius);
            let mut reach = 2.0 * base.max(r + 1.0);
            // grow until the gradient term no longer reaches past the layout
            for _ in 0..8 {
                let layout = build_annular_layout(r, q, reach)?;
                let p = tile_annuli(&layout, d, delta)?;
                let (c_inf, _) = p.annular_gradient_constants().unwrap_or((0.0, 0.0));
                let needed = (2.0 * m * c_inf * c_inf / -lambda).powf(1.0 / (2.0 * q)).max(spec.sublevel_radius(lambda / 2.0).unwrap_or(0.0));
                if needed <= layout.outer_radius() {
                    return Ok(p);
                }
                reach = needed * 1.05;
            }
            Err(Error::Numerical("annular bracketing layout did not stabilise".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub fitted_slope_defect: f64,
    pub fitted_slope_weyl: f64,
    pub predicted_slope_defect: f64,
    pub predicted_slope_weyl: f64,
    pub reports: Vec<BracketReport>,
    /// λ values dropped from the defect fit because the defect vanished.
    pub excluded: Vec<f64>,
}

/// `(A, W)` growth exponents predicted from `(a, b, c, d)`.
pub fn predicted_slopes(spec: &PotentialSpec, d: usize) -> (f64, f64) {
    let (a, b, c, d) = (spec.a, spec.b, spec.c, d as f64);
    match spec.case {
        Case::A => (d / 2.0 + d / a + 2.0 * c / (3.0 * a) - 1.0, d / 2.0 + d / b),
        Case::B => (d / 2.0 - d / a + 2.0 * c / (3.0 * a) - 1.0, d / 2.0 - d / b),
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn exponent_fit(spec: &PotentialSpec, lambdas: &[f64], d: usize) -> Result<ExponentFit> {
    let delta = if spec.case == Case::A { 0.25 } else { 0.05 };
    exponent_fit_with(spec, lambdas, d, delta)
}

/// Fits `log A` and `log W` against `log|λ|` over bracketing reports at
/// the given levels.
pub fn exponent_fit_with(spec: &PotentialSpec, lambdas: &[f64], d: usize, delta: f64) -> Result<ExponentFit> {
    if lambdas.len() < 2 {
        return Err(Error::Domain("an exponent fit needs at least two levels".into()));
    }
    let reports = lambdas
        .iter()
        .map(|&l| bracket_sums(spec, l, &bracketing_partition(spec, l, d, delta)?, d))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = lambdas.iter().map(|l| l.abs().ln()).collect();
    let (mut xa, mut ya, mut excluded) = (Vec::new(), Vec::new(), Vec::new());
    for (r, &x) in reports.iter().zip(&logs) {
        if r.defect > 0.0 {
            xa.push(x);
            ya.push(r.defect.ln());
        } else {
            excluded.push(r.lambda);
        }
    }
    let fitted_slope_defect = if xa.len() >= 2 { least_squares_slope(&xa, &ya) } else { f64::NAN };
    let yw: Vec<f64> = reports.iter().map(|r| r.weyl.ln()).collect();
    let fitted_slope_weyl = least_squares_slope(&logs, &yw);
    let (predicted_slope_defect, predicted_slope_weyl) = predicted_slopes(spec, d);
    Ok(ExponentFit { fitted_slope_defect, fitted_slope_weyl, predicted_slope_defect, predicted_slope_weyl, reports, excluded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn ho_weyl_closed_form() {
        let spec = PotentialSpec::harmonic_oscillator();
        for lambda in [10.0, 40.0] {
            assert_relative_eq!(weyl_integral(&spec, lambda, 2).unwrap(), PI * lambda * lambda / 2.0, max_relative = 1e-4);
        }
        assert_eq!(weyl_integral(&spec, -1.0, 2).unwrap(), 0.0);
    }

    #[test]
    fn coulomb_weyl_refinement() {
        let spec = PotentialSpec::coulomb(2.0, 1.0, 2).unwrap();
        let (lo, hi) = default_excluded_box(&spec, 2);
        let coarse = weyl_integral_report(&spec, -0.5, 2, Some((&lo, &hi)), 1e-6).unwrap();
        let fine = weyl_integral_report(&spec, -0.5, 2, Some((&lo, &hi)), 1e-7).unwrap();
        assert!(coarse.value > 0.0);
        assert_relative_eq!(coarse.value, fine.value, max_relative = 1e-4);
        assert!(weyl_integral(&spec, 0.5, 2).is_err());
    }

    #[test]
    fn predicted_exponents() {
        let (a, w) = predicted_slopes(&PotentialSpec::harmonic_oscillator(), 2);
        assert_relative_eq!(a, 4.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(w, 2.0);
        let (a, w) = predicted_slopes(&PotentialSpec::coulomb(2.0, 1.0, 2).unwrap(), 2);
        assert_relative_eq!(a, -2.0 / 3.0, epsilon = 1e-12);
        assert_relative_eq!(w, -1.0);
    }

    #[test]
    fn ho_bracketing_inequality() {
        let spec = PotentialSpec::harmonic_oscillator();
        let p = bracketing_partition(&spec, 40.0, 2, 0.25).unwrap();
        let r = bracket_sums(&spec, 40.0, &p, 2).unwrap();
        assert!(r.lower_sum <= r.weyl && r.weyl <= r.upper_sum, "{r:?}");
        let wrong = build_lattice_partition(40.0, 0.3, 0.25, 8.0, 2).unwrap();
        assert!(matches!(bracket_sums(&spec, 40.0, &wrong, 2), Err(Error::Configuration(_))));
    }

    #[test]
    fn refinement_does_not_increase_defect() {
        let spec = PotentialSpec::harmonic_oscillator();
        let lambda: f64 = 40.0;
        let opts = BracketOptions { gradient_term: Some(5.0), allow_any_scale: true };
        let mu: f64 = lambda.powf(-1.0 / 6.0);
        // μ/2 = λ^{-m'} with m' = m + ln 2 / ln λ
        let finer_m = 1.0 / 6.0 + 2f64.ln() / lambda.ln();
        let coarse = build_lattice_partition(lambda, 1.0 / 6.0, 0.25, 8.0, 2).unwrap();
        let fine = build_lattice_partition(lambda, finer_m, 0.25, 8.0, 2).unwrap();
        assert_relative_eq!(fine.cells[0].side, mu / 2.0, max_relative = 1e-12);
        let a = bracket_sums_with(&spec, lambda, &coarse, 2, opts).unwrap();
        let b = bracket_sums_with(&spec, lambda, &fine, 2, opts).unwrap();
        assert!(b.defect <= a.defect, "{} > {}", b.defect, a.defect);
        assert!(b.lower_sum >= a.lower_sum);
    }

    #[test]
    fn coulomb_bracketing_inequality() {
        let spec = PotentialSpec::coulomb(2.0, 1.0, 2).unwrap();
        let p = bracketing_partition(&spec, -0.2, 2, 0.05).unwrap();
        let r = bracket_sums(&spec, -0.2, &p, 2).unwrap();
        assert!(r.lower_sum <= r.weyl && r.weyl <= r.upper_sum, "{r:?}");
    }
}
