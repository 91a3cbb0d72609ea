//! Dimensional constants: unit-ball volumes, first Bessel zeros, the
//! Faber–Krahn constant and the Pleijel constant.
//!
//! Bessel functions are evaluated from the ascending power series. For
//! `x` near the top of the supported range the series terms reach `1e7`
//! while the sum is `O(1)`, so the series is accumulated in double-double
//! arithmetic; the result is then accurate to a few ulps of the prefactor.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest argument accepted by [`bessel_j`].
pub const BESSEL_MAX_ARGUMENT: f64 = 20.0;

/// Largest order accepted by [`first_bessel_zero`].
pub const BESSEL_ZERO_MAX_ORDER: f64 = 5.0;

const SERIES_STOP_RATIO: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 400;
const ZERO_WINDOW: f64 = 1.5;
const ZERO_SCAN_STEP: f64 = 0.01;
const BISECTION_WIDTH: f64 = 1e-13;

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Debug, Clone, Copy)]
struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    fn two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        let bb = s - a;
        let err = (a - (s - bb)) + (b - bb);
        Self { hi: s, lo: err }
    }

    fn quick_two_sum(a: f64, b: f64) -> Self {
        let s = a + b;
        Self { hi: s, lo: b - (s - a) }
    }

    fn two_prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Self { hi: p, lo: a.mul_add(b, -p) }
    }

    fn add(self, other: Self) -> Self {
        let s = Self::two_sum(self.hi, other.hi);
        let t = Self::two_sum(self.lo, other.lo);
        let v = Self::quick_two_sum(s.hi, s.lo + t.hi);
        Self::quick_two_sum(v.hi, v.lo + t.lo)
    }

    fn mul(self, other: Self) -> Self {
        let p = Self::two_prod(self.hi, other.hi);
        let lo = p.lo + (self.hi * other.lo + self.lo * other.hi);
        Self::quick_two_sum(p.hi, lo)
    }

    fn div(self, other: Self) -> Self {
        let q1 = self.hi / other.hi;
        let r = self.add(other.mul(Self::from_f64(-q1)));
        let q2 = r.hi / other.hi;
        let r = r.add(other.mul(Self::from_f64(-q2)));
        let q3 = r.hi / other.hi;
        Self::quick_two_sum(q1, q2).add(Self::from_f64(q3))
    }

    fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

/// `Γ(k/2)` for a positive integer `k`, from `Γ(1/2) = √π`, `Γ(1) = 1` and
/// `Γ(z+1) = zΓ(z)`.
pub fn gamma_half_integer(k: u32) -> f64 {
    assert!(k >= 1, "Γ(k/2) requires k >= 1");
    let (mut z, mut value) = if k % 2 == 0 { (1.0, 1.0) } else { (0.5, PI.sqrt()) };
    let target = k as f64 / 2.0;
    while z < target {
        value *= z;
        z += 1.0;
    }
    value
}

fn gamma_order_plus_one(order: f64) -> f64 {
    let twice = 2.0 * (order + 1.0);
    if (twice - twice.round()).abs() < 1e-15 && twice.round() >= 1.0 {
        gamma_half_integer(twice.round() as u32)
    } else {
        statrs::function::gamma::gamma(order + 1.0)
    }
}

/// Bessel function of the first kind `J_order(x)` for `order >= 0` and
/// `0 <= x <= 20`.
pub fn bessel_j(order: f64, x: f64) -> Result<f64> {
    if !order.is_finite() || order < 0.0 {
        return Err(Error::Domain(format!("Bessel order must be finite and >= 0, got {order}")));
    }
    if !x.is_finite() || !(0.0..=BESSEL_MAX_ARGUMENT).contains(&x) {
        return Err(Error::Domain(format!(
            "Bessel argument must lie in [0, {BESSEL_MAX_ARGUMENT}], got {x}"
        )));
    }
    if x == 0.0 {
        return Ok(if order == 0.0 { 1.0 } else { 0.0 });
    }

    // J_ν(x) = (x/2)^ν / Γ(ν+1) · Σ_k (-y)^k / (k! (ν+1)_k),  y = x²/4.
    let y = DoubleDouble::two_prod(x, x).mul(DoubleDouble::from_f64(0.25));
    let minus_y = y.neg();
    let mut term = DoubleDouble::from_f64(1.0);
    let mut sum = term;
    let mut largest: f64 = 1.0;
    for k in 1..SERIES_MAX_TERMS {
        let kk = k as f64;
        let denom = DoubleDouble::two_sum(kk, order).mul(DoubleDouble::from_f64(kk));
        term = term.mul(minus_y).div(denom);
        sum = sum.add(term);
        largest = largest.max(term.hi.abs());
        // past the peak the terms fall factorially; stop at the double-double floor
        if kk > y.hi && term.hi.abs() <= SERIES_STOP_RATIO * SERIES_STOP_RATIO * largest {
            break;
        }
    }
    let prefactor = if order == 0.0 {
        1.0
    } else {
        (0.5 * x).powf(order) / gamma_order_plus_one(order)
    };
    Ok(prefactor * sum.to_f64())
}

/// First positive zero `j_order` of `J_order`, for `order ∈ [0, 5]`.
///
/// The root is bracketed by scanning a window of half-width 1.5 around the
/// McMahon estimate `(order/2 + 3/4)π` and refined by bisection.
pub fn first_bessel_zero(order: f64) -> Result<f64> {
    if !order.is_finite() || !(0.0..=BESSEL_ZERO_MAX_ORDER).contains(&order) {
        return Err(Error::Domain(format!(
            "first Bessel zero supported for order in [0, {BESSEL_ZERO_MAX_ORDER}], got {order}"
        )));
    }
    let seed = (0.5 * order + 0.75) * PI;
    let lo_edge = (seed - ZERO_WINDOW).max(ZERO_SCAN_STEP);
    let hi_edge = seed + ZERO_WINDOW;

    let mut a = lo_edge;
    let mut fa = bessel_j(order, a)?;
    let mut bracket = None;
    while a < hi_edge {
        let b = (a + ZERO_SCAN_STEP).min(hi_edge);
        let fb = bessel_j(order, b)?;
        if fa == 0.0 {
            return Ok(a);
        }
        if fa.signum() != fb.signum() {
            bracket = Some((a, b, fa));
            break;
        }
        a = b;
        fa = fb;
    }
    let (mut lo, mut hi, mut flo) = bracket.ok_or_else(|| {
        Error::Numerical(format!(
            "no sign change of J_{order} found in window [{lo_edge}, {hi_edge}]"
        ))
    })?;
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let fm = bessel_j(order, mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Volume `π^{d/2} / Γ(d/2 + 1)` of the unit ball in `ℝ^d`.
pub fn unit_ball_volume(d: usize) -> Result<f64> {
    if d < 1 {
        return Err(Error::Domain("unit ball volume requires d >= 1".into()));
    }
    Ok(PI.powf(d as f64 / 2.0) / gamma_half_integer(d as u32 + 2))
}

fn require_dim(d: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {d}")));
    }
    Ok(())
}

/// Faber–Krahn constant `K_d = j_{d/2-1}² · w_d^{2/d}`, so that every open
/// set `Ω` satisfies `λ₁(Ω) >= K_d |Ω|^{-2/d}`.
pub fn faber_krahn_constant(d: usize) -> Result<f64> {
    require_dim(d)?;
    let j = first_bessel_zero(d as f64 / 2.0 - 1.0)?;
    Ok(j * j * unit_ball_volume(d)?.powf(2.0 / d as f64))
}

/// Which closed form of the Pleijel constant to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PleijelForm {
    /// `(2π)^d / (w_d² j^d)`: nodal prefactor `K_d^{-d/2}` over the Weyl
    /// prefactor `(2π)^{-d} w_d`.
    Operational,
    /// `2^{2d-2} d² Γ(d/2) / j^d`, kept for cross-checking only.
    Printed,
}

/// Pleijel constant `γ_d` in its operational form.
pub fn pleijel_constant(d: usize) -> Result<f64> {
    pleijel_constant_with(d, PleijelForm::Operational)
}

pub fn pleijel_constant_with(d: usize, form: PleijelForm) -> Result<f64> {
    require_dim(d)?;
    let j = first_bessel_zero(d as f64 / 2.0 - 1.0)?;
    let df = d as f64;
    match form {
        PleijelForm::Operational => {
            let w = unit_ball_volume(d)?;
            Ok((2.0 * PI).powi(d as i32) / (w * w * j.powi(d as i32)))
        }
        PleijelForm::Printed => Ok(2f64.powi(2 * d as i32 - 2) * df * df
            * gamma_half_integer(d as u32)
            / j.powi(d as i32)),
    }
}

/// All constants attached to one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionalConstants {
    pub d: usize,
    pub ball_volume: f64,
    pub bessel_zero: f64,
    pub faber_krahn: f64,
    pub pleijel: f64,
    pub pleijel_printed: f64,
}

impl DimensionalConstants {
    pub fn new(d: usize) -> Result<Self> {
        require_dim(d)?;
        let ball_volume = unit_ball_volume(d)?;
        let bessel_zero = first_bessel_zero(d as f64 / 2.0 - 1.0)?;
        Ok(Self {
            d,
            ball_volume,
            bessel_zero,
            faber_krahn: bessel_zero * bessel_zero * ball_volume.powf(2.0 / d as f64),
            pleijel: pleijel_constant(d)?,
            pleijel_printed: pleijel_constant_with(d, PleijelForm::Printed)?,
        })
    }

    /// Prefactor `(2π)^{-d} w_d` of the Weyl law.
    pub fn weyl_prefactor(&self) -> f64 {
        self.ball_volume / (2.0 * PI).powi(self.d as i32)
    }

    /// Prefactor `K_d^{-d/2}` of the Faber–Krahn nodal bound.
    pub fn nodal_prefactor(&self) -> f64 {
        self.faber_krahn.powf(-(self.d as f64) / 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// `J_n(x) = (1/π) ∫_0^π cos(nt - x sin t) dt`; the trapezoid rule is
    /// spectrally accurate on this periodic integrand.
    fn bessel_integral(n: i32, x: f64) -> f64 {
        let m = 400;
        let mut s = 0.0;
        for i in 0..=m {
            let t = PI * i as f64 / m as f64;
            let w = if i == 0 || i == m { 0.5 } else { 1.0 };
            s += w * (n as f64 * t - x * t.sin()).cos();
        }
        s / m as f64
    }

    fn bessel_half(order2: u32, x: f64) -> f64 {
        let c = (2.0 / (PI * x)).sqrt();
        match order2 {
            1 => c * x.sin(),
            3 => c * (x.sin() / x - x.cos()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn series_matches_independent_routes_up_to_twenty() {
        for i in 1..=200 {
            let x = 0.1 * i as f64;
            for n in 0..=2 {
                let exact = bessel_integral(n, x);
                assert_abs_diff_eq!(bessel_j(n as f64, x).unwrap(), exact, epsilon = 1e-13);
            }
            for o2 in [1u32, 3] {
                let exact = bessel_half(o2, x);
                assert_abs_diff_eq!(bessel_j(o2 as f64 / 2.0, x).unwrap(), exact, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_j(0.0, 0.0).unwrap(), 1.0);
        assert_abs_diff_eq!(bessel_j(0.5, PI).unwrap(), 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(bessel_j(0.0, 2.404825557695773).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bessel_rejects_out_of_range() {
        assert!(matches!(bessel_j(0.0, 20.5), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_j(-1.0, 1.0), Err(Error::Domain(_))));
    }

    /// Bisection on the trapezoid-rule integral representation.
    fn oracle_zero(n: i32, lo: f64, hi: f64) -> f64 {
        let (mut lo, mut hi) = (lo, hi);
        let flo = bessel_integral(n, lo);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if bessel_integral(n, mid).signum() == flo.signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn first_zeros() {
        assert_abs_diff_eq!(first_bessel_zero(0.5).unwrap(), PI, epsilon = 1e-12);
        let j0 = oracle_zero(0, 2.0, 3.0);
        let j1 = oracle_zero(1, 3.5, 4.0);
        assert_abs_diff_eq!(j0, 2.404825557695773, epsilon = 1e-13);
        assert_abs_diff_eq!(j1, 3.831705970207512, epsilon = 1e-13);
        assert_abs_diff_eq!(first_bessel_zero(0.0).unwrap(), j0, epsilon = 1e-12);
        assert_abs_diff_eq!(first_bessel_zero(1.0).unwrap(), j1, epsilon = 1e-12);
    }

    #[test]
    fn zeros_are_roots() {
        for a in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let j = first_bessel_zero(a).unwrap();
            assert!(bessel_j(a, j).unwrap().abs() <= 1e-11, "order {a}");
        }
        // the bracket must find the first zero even at the top of the range
        let j5 = first_bessel_zero(5.0).unwrap();
        assert_abs_diff_eq!(j5, 8.771483815959954, epsilon = 1e-11);
        assert!(first_bessel_zero(5.5).is_err());
    }

    #[test]
    fn ball_volumes() {
        assert_abs_diff_eq!(unit_ball_volume(1).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(unit_ball_volume(2).unwrap(), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(unit_ball_volume(3).unwrap(), 4.0 * PI / 3.0, epsilon = 1e-14);
        assert!(unit_ball_volume(0).is_err());
    }

    #[test]
    fn faber_krahn_values() {
        let j0 = first_bessel_zero(0.0).unwrap();
        assert_abs_diff_eq!(faber_krahn_constant(2).unwrap(), PI * j0 * j0, epsilon = 1e-11);
        assert_abs_diff_eq!(faber_krahn_constant(2).unwrap(), 18.16842, epsilon = 1e-4);
        let k3 = PI * PI * (4.0 * PI / 3.0f64).powf(2.0 / 3.0);
        assert_abs_diff_eq!(faber_krahn_constant(3).unwrap(), k3, epsilon = 1e-10);
        assert_abs_diff_eq!(faber_krahn_constant(3).unwrap(), 25.6463, epsilon = 1e-3);
        assert_abs_diff_eq!(faber_krahn_constant(2).unwrap() / PI, j0 * j0, epsilon = 1e-12);
    }

    #[test]
    fn pleijel_values() {
        let j0 = first_bessel_zero(0.0).unwrap();
        assert_abs_diff_eq!(pleijel_constant(2).unwrap(), 4.0 / (j0 * j0), epsilon = 1e-13);
        // the quoted seven-digit value is a rounding of 4/j0² = 0.69166027612…
        assert_abs_diff_eq!(pleijel_constant(2).unwrap(), 0.6916604, epsilon = 5e-7);
        assert_abs_diff_eq!(pleijel_constant(3).unwrap(), 9.0 / (2.0 * PI * PI), epsilon = 1e-12);
        let printed = pleijel_constant_with(2, PleijelForm::Printed).unwrap();
        assert_abs_diff_eq!(printed, 16.0 / (j0 * j0), epsilon = 1e-12);
        assert_abs_diff_eq!(printed, 2.766642, epsilon = 1e-6);
    }

    #[test]
    fn pleijel_below_one_and_decreasing() {
        let mut prev = f64::INFINITY;
        for d in 2..=10 {
            let g = pleijel_constant(d).unwrap();
            assert!(g > 0.0 && g < 1.0, "d = {d}: {g}");
            assert!(g < prev, "not decreasing at d = {d}");
            prev = g;
        }
    }

    #[test]
    fn pleijel_matches_estimate_chain() {
        for d in 2..=10 {
            let c = DimensionalConstants::new(d).unwrap();
            let chain = (2.0 * PI).powi(d as i32) / (c.ball_volume * c.faber_krahn.powf(d as f64 / 2.0));
            assert!((chain - c.pleijel).abs() <= 1e-12 * c.pleijel, "d = {d}");
            assert_abs_diff_eq!(c.nodal_prefactor() / c.weyl_prefactor(), c.pleijel, epsilon = 1e-12);
        }
    }
}
