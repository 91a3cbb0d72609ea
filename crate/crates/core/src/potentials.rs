//! Case-A (growing) and Case-B (vanishing, singular) potentials.
//!
//! A [`PotentialSpec`] couples a concrete potential family with the
//! envelope data used by the bounds: exponents `(a, b, c)`, constants
//! `(C1, C2, C3)` and, in Case B, the list of poles.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Envelope regime of a potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// `C1|x|^a <= V <= C2|x|^b`, `|∇V| <= C3|x|^c`.
    A,
    /// `-C1|x|^{-a} <= V <= -C2|x|^{-b}`, `|∇V| <= C3|x|^{-c}` outside a
    /// ball, with finitely many inverse-power poles.
    B,
}

/// Singular point `V ~ -strength |x - location|^{-exponent}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub location: Vec<f64>,
    pub exponent: f64,
    pub strength: f64,
}

/// One term `strength · |x - center|^exponent` of a multi-well potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub center: Vec<f64>,
    pub strength: f64,
    pub exponent: f64,
}

type PotentialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A user-supplied potential. Gradients are taken by central differences.
#[derive(Clone, Serialize, Deserialize)]
pub struct CustomPotential {
    pub name: String,
    /// Central-difference step for the gradient.
    pub step: f64,
    #[serde(skip)]
    func: Option<PotentialFn>,
}

impl CustomPotential {
    pub fn new(name: impl Into<String>, step: f64, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), step, func: Some(Arc::new(f)) }
    }

    fn eval(&self, x: &[f64]) -> Result<f64> {
        match &self.func {
            Some(f) => Ok(f(x)),
            None => Err(Error::Configuration(format!(
                "custom potential '{}' has no function bound (custom potentials cannot be loaded from JSON)",
                self.name
            ))),
        }
    }
}

impl fmt::Debug for CustomPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPotential")
            .field("name", &self.name)
            .field("step", &self.step)
            .field("bound", &self.func.is_some())
            .finish()
    }
}

impl PartialEq for CustomPotential {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.step == other.step
    }
}

/// Concrete potential family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    /// `strength · |x|^exponent`.
    Power { strength: f64, exponent: f64 },
    /// `Σ_j strength_j |x - center_j|^{exponent_j}`.
    MultiWell { wells: Vec<Well> },
    /// `-Σ_i C_i |x - x_i|^{-a_i}` over the configured poles.
    CoulombMultipole,
    Custom(CustomPotential),
}

#[derive(Debug, Clone, Deserialize)]
struct RawSpec {
    case: Case,
    a: f64,
    b: f64,
    c: f64,
    c1: f64,
    c2: f64,
    c3: f64,
    #[serde(default)]
    poles: Vec<Pole>,
    family: Family,
    #[serde(default)]
    m_radius: Option<f64>,
}

/// Potential together with the envelope constants it is claimed to satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct PotentialSpec {
    pub case: Case,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub poles: Vec<Pole>,
    pub family: Family,
    /// Radius beyond which the Case-B envelopes are asserted.
    pub m_radius: f64,
}

impl TryFrom<RawSpec> for PotentialSpec {
    type Error = Error;

    fn try_from(raw: RawSpec) -> Result<Self> {
        PotentialSpec::new(raw.case, [raw.a, raw.b, raw.c], [raw.c1, raw.c2, raw.c3], raw.poles, raw.family, raw.m_radius)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Case::A => write!(f, "A"),
            Case::B => write!(f, "B"),
        }
    }
}

/// Admissibility of the exponents: strict inequality with its margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub ok: bool,
    pub margin: f64,
}

/// Worst envelope violations on one sphere `|x| = radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub radius: f64,
    /// Largest amount by which `V` falls below its lower envelope.
    pub lower_violation: f64,
    /// Largest amount by which `V` exceeds its upper envelope.
    pub upper_violation: f64,
    /// Largest amount by which `|∇V|` exceeds its bound.
    pub gradient_violation: f64,
    /// Sample point attaining the largest of the three violations.
    pub offending_point: Option<Vec<f64>>,
    /// `(V, envelope)` at the offending point for whichever bound failed.
    pub offending_values: Option<(f64, f64)>,
}

impl RadiusReport {
    pub fn violated(&self) -> bool {
        self.lower_violation > 0.0 || self.upper_violation > 0.0 || self.gradient_violation > 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub radii: Vec<RadiusReport>,
}

impl EnvelopeReport {
    pub fn violation_count(&self) -> usize {
        self.radii.iter().filter(|r| r.violated()).count()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Distance from `p` to the nearest and farthest points of the box `[lo, hi]`.
pub(crate) fn box_distance_range(lo: &[f64], hi: &[f64], p: &[f64]) -> (f64, f64) {
    let mut near = 0.0;
    let mut far = 0.0;
    for k in 0..p.len() {
        let c = p[k].clamp(lo[k], hi[k]);
        near += (c - p[k]) * (c - p[k]);
        let f = (p[k] - lo[k]).abs().max((hi[k] - p[k]).abs());
        far += f * f;
    }
    (near.sqrt(), far.sqrt())
}

/// Sup-norm corners, face midpoints and centre of a box, plus a `5^d`
/// tensor lattice.
pub(crate) fn structured_samples(lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    let d = lo.len();
    let levels = 5usize;
    let total = levels.pow(d as u32);
    let mut out = Vec::with_capacity(total + 2 * d);
    for idx in 0..total {
        let mut rem = idx;
        let mut p = vec![0.0; d];
        for k in 0..d {
            let t = (rem % levels) as f64 / (levels - 1) as f64;
            rem /= levels;
            p[k] = lo[k] + t * (hi[k] - lo[k]);
        }
        out.push(p);
    }
    out
}

impl PotentialSpec {
    /// Validating constructor. `m_radius` defaults to twice the largest
    /// pole norm plus one.
    pub fn new(
        case: Case,
        exponents: [f64; 3],
        constants: [f64; 3],
        poles: Vec<Pole>,
        family: Family,
        m_radius: Option<f64>,
    ) -> Result<Self> {
        let [a, b, c] = exponents;
        let [c1, c2, c3] = constants;
        if !(c1 > 0.0 && c2 > 0.0 && c3 > 0.0) {
            return Err(Error::Domain(format!("envelope constants must be positive, got ({c1}, {c2}, {c3})")));
        }
        match case {
            Case::A => {
                if !(a > 0.0 && a <= b && c > 0.0) {
                    return Err(Error::Domain(format!("case A requires 0 < a <= b and c > 0, got a={a}, b={b}, c={c}")));
                }
                if !poles.is_empty() {
                    return Err(Error::Domain("case A potentials have no poles".into()));
                }
            }
            Case::B => {
                if !(a > 0.0 && a <= b && b < 2.0) {
                    return Err(Error::Domain(format!("case B requires 0 < a <= b < 2, got a={a}, b={b}")));
                }
                for (i, p) in poles.iter().enumerate() {
                    if !(p.exponent > 0.0 && p.exponent < 2.0) {
                        return Err(Error::Domain(format!("pole {i} exponent {} not in (0, 2)", p.exponent)));
                    }
                    if !(p.strength > 0.0) {
                        return Err(Error::Domain(format!("pole {i} strength must be positive")));
                    }
                }
            }
        }
        if let Some(dim) = poles.first().map(|p| p.location.len()) {
            if poles.iter().any(|p| p.location.len() != dim) {
                return Err(Error::Domain("poles have inconsistent dimensions".into()));
            }
        }
        if matches!(family, Family::CoulombMultipole) && poles.is_empty() {
            return Err(Error::Domain("Coulomb multipole family needs at least one pole".into()));
        }
        let largest = poles.iter().map(|p| norm(&p.location)).fold(0.0, f64::max);
        let m_radius = m_radius.unwrap_or(2.0 * largest + 1.0);
        if !(m_radius > 0.0) {
            return Err(Error::Domain("m_radius must be positive".into()));
        }
        Ok(Self { case, a, b, c, c1, c2, c3, poles, family, m_radius })
    }

    /// `V = |x|²`: Case A with `a = b = 2`, `c = 1`.
    pub fn harmonic_oscillator() -> Self {
        Self::new(Case::A, [2.0, 2.0, 1.0], [1.0, 1.0, 2.0], vec![], Family::Power { strength: 1.0, exponent: 2.0 }, None)
            .expect("valid harmonic oscillator")
    }

    /// `V = strength · |x|^exponent` with the matching Case-A envelope.
    pub fn power(strength: f64, exponent: f64) -> Result<Self> {
        let grad_exponent = exponent - 1.0;
        if grad_exponent <= 0.0 {
            return Err(Error::Domain("power potential needs exponent > 1 for a positive gradient exponent".into()));
        }
        Self::new(
            Case::A,
            [exponent, exponent, grad_exponent],
            [strength, strength, strength * exponent],
            vec![],
            Family::Power { strength, exponent },
            None,
        )
    }

    /// `V = -strength |x|^{-exponent}` with a single pole at the origin of
    /// `ℝ^d`.
    pub fn coulomb(strength: f64, exponent: f64, d: usize) -> Result<Self> {
        Self::new(
            Case::B,
            [exponent, exponent, exponent + 1.0],
            [strength, strength, strength * exponent],
            vec![Pole { location: vec![0.0; d], exponent, strength }],
            Family::CoulombMultipole,
            None,
        )
    }

    pub fn is_case_b(&self) -> bool {
        self.case == Case::B
    }

    /// Scale exponent `m = c/(3a)` of the Case-A cube lattice.
    pub fn lattice_scale_exponent(&self) -> f64 {
        self.c / (3.0 * self.a)
    }

    /// Annular exponent `q = c/3` of the Case-B layout.
    pub fn annular_exponent(&self) -> f64 {
        self.c / 3.0
    }

    /// Sup-norm radius enclosing every pole, plus one; default inner
    /// radius of annular layouts.
    pub fn central_radius(&self) -> f64 {
        self.poles
            .iter()
            .map(|p| p.location.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max)
            + 1.0
    }

    fn check_pole(&self, x: &[f64]) -> Result<()> {
        for (index, p) in self.poles.iter().enumerate() {
            if p.location.len() == x.len() && p.location.iter().zip(x).all(|(a, b)| a == b) {
                return Err(Error::Singularity { index, location: p.location.clone() });
            }
        }
        Ok(())
    }

    /// `V(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_pole(x)?;
        match &self.family {
            Family::Power { strength, exponent } => Ok(strength * norm(x).powf(*exponent)),
            Family::MultiWell { wells } => {
                Ok(wells.iter().map(|w| w.strength * distance(x, &w.center).powf(w.exponent)).sum())
            }
            Family::CoulombMultipole => {
                Ok(-self.poles.iter().map(|p| p.strength * distance(x, &p.location).powf(-p.exponent)).sum::<f64>())
            }
            Family::Custom(custom) => custom.eval(x),
        }
    }

    /// `∇V(x)`: analytic for the built-in families, central differences for
    /// custom potentials.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_pole(x)?;
        let d = x.len();
        let mut g = vec![0.0; d];
        // ∇(s|x-c|^p) = s p |x-c|^{p-2} (x-c)
        let mut add_radial = |center: &[f64], coef: f64, p: f64| {
            let r = distance(x, center);
            if r == 0.0 {
                return;
            }
            let f = coef * p * r.powf(p - 2.0);
            for k in 0..d {
                g[k] += f * (x[k] - center[k]);
            }
        };
        match &self.family {
            Family::Power { strength, exponent } => add_radial(&vec![0.0; d], *strength, *exponent),
            Family::MultiWell { wells } => {
                for w in wells {
                    add_radial(&w.center, w.strength, w.exponent);
                }
            }
            Family::CoulombMultipole => {
                for p in &self.poles {
                    add_radial(&p.location, -p.strength, -p.exponent);
                }
            }
            Family::Custom(custom) => {
                let h = custom.step;
                if !(h > 0.0) {
                    return Err(Error::Configuration("custom potential needs a positive difference step".into()));
                }
                let mut xp = x.to_vec();
                for k in 0..d {
                    xp[k] = x[k] + h;
                    let fp = custom.eval(&xp)?;
                    xp[k] = x[k] - h;
                    let fm = custom.eval(&xp)?;
                    xp[k] = x[k];
                    g[k] = (fp - fm) / (2.0 * h);
                }
            }
        }
        Ok(g)
    }

    /// Bounds `(lo, hi)` with `lo <= inf V` and `hi >= sup V` over the box
    /// `[lo_corner, hi_corner]`.
    ///
    /// Built-in families are sums of terms monotone in the distance to a
    /// centre, so each term's range is exact from the nearest and farthest
    /// box points; summing the ranges gives valid bounds. Custom potentials
    /// fall back to structured sampling, which may miss interior extrema.
    /// A pole inside the box gives `lo = -∞`.
    pub fn range_on_box(&self, lo_corner: &[f64], hi_corner: &[f64]) -> Result<(f64, f64)> {
        let d = lo_corner.len();
        let origin = vec![0.0; d];
        let term = |center: &[f64], s: f64, p: f64| -> (f64, f64) {
            let (near, far) = box_distance_range(lo_corner, hi_corner, center);
            let (a, b) = (s * near.powf(p), s * far.powf(p));
            (a.min(b), a.max(b))
        };
        match &self.family {
            Family::Power { strength, exponent } => Ok(term(&origin, *strength, *exponent)),
            Family::MultiWell { wells } => Ok(wells.iter().fold((0.0, 0.0), |acc, w| {
                let (a, b) = term(&w.center, w.strength, w.exponent);
                (acc.0 + a, acc.1 + b)
            })),
            Family::CoulombMultipole => Ok(self.poles.iter().fold((0.0, 0.0), |acc, p| {
                let (a, b) = term(&p.location, -p.strength, -p.exponent);
                (acc.0 + a, acc.1 + b)
            })),
            Family::Custom(custom) => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for x in structured_samples(lo_corner, hi_corner) {
                    let v = custom.eval(&x)?;
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                Ok((lo, hi))
            }
        }
    }

    /// Lower envelope `C1|x|^a` (Case A) or `-C1|x|^{-a}` (Case B) at radius `r`.
    pub fn lower_envelope(&self, r: f64) -> f64 {
        match self.case {
            Case::A => self.c1 * r.powf(self.a),
            Case::B => -self.c1 * r.powf(-self.a),
        }
    }

    pub fn upper_envelope(&self, r: f64) -> f64 {
        match self.case {
            Case::A => self.c2 * r.powf(self.b),
            Case::B => -self.c2 * r.powf(-self.b),
        }
    }

    pub fn gradient_envelope(&self, r: f64) -> f64 {
        match self.case {
            Case::A => self.c3 * r.powf(self.c),
            Case::B => self.c3 * r.powf(-self.c),
        }
    }

    /// Radius outside which `V >= level` is guaranteed by the lower
    /// envelope (Case B: also beyond `m_radius` and every pole).
    pub fn sublevel_radius(&self, level: f64) -> Option<f64> {
        match self.case {
            Case::A => {
                if level <= 0.0 {
                    Some(0.0)
                } else {
                    Some((level / self.c1).powf(1.0 / self.a))
                }
            }
            Case::B => {
                if level >= 0.0 {
                    None
                } else {
                    Some((self.c1 / -level).powf(1.0 / self.a).max(self.m_radius))
                }
            }
        }
    }
}

/// Strict admissibility inequality on `(a, b, c)` in dimension `d`.
///
/// Case A: `d/a + c/(3a) - 1/2 < d/b`, margin = right − left.
/// Case B: `-d/a + c/(3a) - 1/2 > -d/b`, margin = left − right.
pub fn check_admissibility(spec: &PotentialSpec, d: usize) -> AdmissibilityReport {
    let (a, b, c, d) = (spec.a, spec.b, spec.c, d as f64);
    let margin = match spec.case {
        Case::A => d / b - (d / a + c / (3.0 * a) - 0.5),
        Case::B => (-d / a + c / (3.0 * a) - 0.5) - (-d / b),
    };
    AdmissibilityReport { ok: margin > 0.0, margin }
}

fn sphere_points(d: usize, r: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    if d == 2 {
        return (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * (i as f64 + 0.5) / count as f64;
                vec![r * t.cos(), r * t.sin()]
            })
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = norm(&v).max(1e-300);
            v.iter_mut().for_each(|x| *x *= r / n);
            v
        })
        .collect()
}

/// Samples each sphere `|x| = r` and reports the worst violation of the
/// two-sided envelope and of the gradient bound. Violations are reported,
/// never raised.
pub fn check_envelope(spec: &PotentialSpec, d: usize, radii: &[f64], samples_per_radius: usize) -> Result<EnvelopeReport> {
    let mut out = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        if spec.is_case_b() && r <= spec.m_radius {
            return Err(Error::Domain(format!("case B envelope radius {r} must exceed M = {}", spec.m_radius)));
        }
        let lower = spec.lower_envelope(r);
        let upper = spec.upper_envelope(r);
        let grad_bound = spec.gradient_envelope(r);
        let mut report = RadiusReport {
            radius: r,
            lower_violation: 0.0,
            upper_violation: 0.0,
            gradient_violation: 0.0,
            offending_point: None,
            offending_values: None,
        };
        let mut worst = 0.0;
        for x in sphere_points(d, r, samples_per_radius.max(1), 0x5eed + ri as u64) {
            let v = spec.evaluate(&x)?;
            let g = norm(&spec.gradient(&x)?);
            let candidates = [(lower - v, (v, lower)), (v - upper, (v, upper)), (g - grad_bound, (g, grad_bound))];
            report.lower_violation = report.lower_violation.max(lower - v);
            report.upper_violation = report.upper_violation.max(v - upper);
            report.gradient_violation = report.gradient_violation.max(g - grad_bound);
            for (amount, values) in candidates {
                // relative slack absorbs rounding in the envelope itself
                if amount > 1e-12 * values.1.abs().max(1.0) && amount > worst {
                    worst = amount;
                    report.offending_point = Some(x.clone());
                    report.offending_values = Some(values);
                }
            }
        }
        let slack = |bound: f64| 1e-12 * bound.abs().max(1.0);
        if report.lower_violation <= slack(lower) {
            report.lower_violation = 0.0;
        }
        if report.upper_violation <= slack(upper) {
            report.upper_violation = 0.0;
        }
        if report.gradient_violation <= slack(grad_bound) {
            report.gradient_violation = 0.0;
        }
        out.push(report);
    }
    Ok(EnvelopeReport { radii: out })
}
