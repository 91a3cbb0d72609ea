//! Cube coverings with smooth partitions of unity.
//!
//! Two families are provided: a uniform lattice of cubes of side `μ`
//! ([`build_lattice_partition`]) and an annular covering whose cube sides
//! grow like `r^q` ([`build_annular_layout`] + [`tile_annuli`]). Every cell
//! carries a plateau bump equal to one on its core cube and vanishing
//! outside the core inflated by `δ·side` on each face; the weights are
//! `A_i = φ_i / sqrt(Σ_j φ_j²)`, so `Σ A_i² = 1` wherever some core
//! contains the point.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest slope of [`smooth_step`], attained at `t = 1/2`.
pub const SMOOTH_STEP_MAX_SLOPE: f64 = 2.0;

fn psi(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// `C^∞` step: 0 for `t <= 0`, 1 for `t >= 1`, built from `exp(-1/t)`.
pub fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = psi(t);
        a / (a + psi(1.0 - t))
    }
}

/// Derivative of [`smooth_step`].
pub fn smooth_step_derivative(t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    let (a, b) = (psi(t), psi(1.0 - t));
    let s = 1.0 - t;
    a * b * (1.0 / (t * t) + 1.0 / (s * s)) / ((a + b) * (a + b))
}

/// Overlap bound `2^d` used both as the multiplicity limit of a cover and
/// as the localisation constant.
pub fn overlap_limit(d: usize) -> f64 {
    2f64.powi(d as i32)
}

/// Layer tag of lattice cells.
pub const LATTICE_LAYER: i32 = -1;

/// One cube of a covering. The core is `center ± side/2`; the support is
/// `center ± side·(1/2 + delta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeCell {
    pub center: Vec<f64>,
    pub side: f64,
    pub delta: f64,
    /// `-1` for lattice cells, `0` for the central box, `i >= 1` for annuli.
    pub layer: i32,
    /// Integer position within its lattice or annulus.
    pub index: Vec<i64>,
}

impl CubeCell {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn core_half_width(&self) -> f64 {
        0.5 * self.side
    }

    pub fn support_half_width(&self) -> f64 {
        self.side * (0.5 + self.delta)
    }

    pub fn core_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.bounds(self.core_half_width())
    }

    pub fn support_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        self.bounds(self.support_half_width())
    }

    fn bounds(&self, hw: f64) -> (Vec<f64>, Vec<f64>) {
        (self.center.iter().map(|c| c - hw).collect(), self.center.iter().map(|c| c + hw).collect())
    }

    pub fn core_volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    pub fn support_volume(&self) -> f64 {
        (2.0 * self.support_half_width()).powi(self.dim() as i32)
    }

    /// Closed core cube membership.
    pub fn core_contains(&self, x: &[f64]) -> bool {
        let hw = self.core_half_width();
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() <= hw)
    }

    /// Open support membership (the bump vanishes on the boundary).
    pub fn support_contains(&self, x: &[f64]) -> bool {
        let hw = self.support_half_width();
        x.iter().zip(&self.center).all(|(a, c)| (a - c).abs() < hw)
    }

    fn axis_profile(&self, offset: f64) -> (f64, f64) {
        // rises over [core + δ·side, core] measured from the support edge
        let ramp = self.delta * self.side;
        let t = (self.support_half_width() - offset.abs()) / ramp;
        let v = smooth_step(t);
        let dv = -smooth_step_derivative(t) / ramp * offset.signum();
        (v, dv)
    }

    /// Plateau bump `φ(x)` and its gradient.
    pub fn bump(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim();
        let mut vals = Vec::with_capacity(d);
        let mut ders = Vec::with_capacity(d);
        for k in 0..d {
            let (v, dv) = self.axis_profile(x[k] - self.center[k]);
            vals.push(v);
            ders.push(dv);
        }
        let value = vals.iter().product();
        let grad = (0..d)
            .map(|k| {
                if ders[k] == 0.0 {
                    return 0.0;
                }
                ders[k] * (0..d).filter(|&j| j != k).map(|j| vals[j]).product::<f64>()
            })
            .collect();
        (value, grad)
    }

    /// Bound on `|∇φ|`: each axis factor has slope at most `2/(δ·side)`.
    pub fn bump_gradient_bound(&self) -> f64 {
        (self.dim() as f64).sqrt() * SMOOTH_STEP_MAX_SLOPE / (self.delta * self.side)
    }

    /// Euclidean distance range `(inf, sup)` of `|x|` over the support.
    pub fn support_norm_range(&self) -> (f64, f64) {
        let (lo, hi) = self.support_bounds();
        crate::potentials::box_distance_range(&lo, &hi, &vec![0.0; self.dim()])
    }
}

/// Sequence `(r_i, d_i, n_i)` with `r_{i+1} = r_i + d_i`, `d_i = r_i/n_i`,
/// `n_i = ⌈r_i^{1-q}⌉`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnularLayout {
    pub r: f64,
    pub q: f64,
    pub layers: Vec<AnnularLayer>,
    /// Lower constant: `m_lo · r_i^q <= d_i`.
    pub m_lo: f64,
    /// Upper constant: `d_i <= m_hi · r_i^q`.
    pub m_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnularLayer {
    pub r: f64,
    pub d: f64,
    pub n: u64,
}

/// Smallest integer `>= x`, treating values within rounding of an integer
/// as that integer.
fn ceil_tolerant(x: f64) -> u64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-12 * x.abs().max(1.0) {
        nearest.max(1.0) as u64
    } else {
        x.ceil().max(1.0) as u64
    }
}

impl AnnularLayout {
    fn validate(r: f64, q: f64) -> Result<()> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("inner radius must be positive, got {r}")));
        }
        if !(q < 1.0 && q.is_finite()) {
            return Err(Error::Domain(format!("annular exponent q must be < 1, got {q}")));
        }
        Ok(())
    }

    fn next(r_i: f64, q: f64) -> AnnularLayer {
        let n = ceil_tolerant(r_i.powf(1.0 - q));
        AnnularLayer { r: r_i, d: r_i / n as f64, n }
    }

    fn from_layers(r: f64, q: f64, layers: Vec<AnnularLayer>) -> Self {
        Self { r, q, layers, m_lo: 1.0 / (1.0 + r.powf(q - 1.0)), m_hi: 1.0 }
    }

    /// Exactly `count` layers.
    pub fn with_layers(r: f64, q: f64, count: usize) -> Result<Self> {
        Self::validate(r, q)?;
        let mut layers = Vec::with_capacity(count);
        let mut r_i = r;
        for _ in 0..count {
            let layer = Self::next(r_i, q);
            r_i = layer.r + layer.d;
            layers.push(layer);
        }
        Ok(Self::from_layers(r, q, layers))
    }

    /// Sup-radius reached by the outermost layer.
    pub fn outer_radius(&self) -> f64 {
        self.layers.last().map_or(self.r, |l| l.r + l.d)
    }

    /// `(M'', M''')` with `M'' <= d_{i+1}/d_i <= M'''` for every layout
    /// with these `(r, q, m_lo, m_hi)`.
    pub fn ratio_bounds(&self) -> (f64, f64) {
        let rho_max = 1.0 + self.m_hi * self.r.powf(self.q - 1.0);
        let p = rho_max.powf(self.q);
        (self.m_lo / self.m_hi * p.min(1.0), self.m_hi / self.m_lo * p.max(1.0))
    }

    /// Observed `(min, max)` of `d_{i+1}/d_i`.
    pub fn observed_ratio_range(&self) -> Option<(f64, f64)> {
        let ratios: Vec<f64> = self.layers.windows(2).map(|w| w[1].d / w[0].d).collect();
        if ratios.is_empty() {
            return None;
        }
        Some(ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v))))
    }

    /// Largest admissible overlap: `0.2 · min` of every size ratio between
    /// successive rows, the central box (side `2r`) included.
    pub fn delta_threshold(&self) -> f64 {
        let mut sides = vec![2.0 * self.r];
        sides.extend(self.layers.iter().map(|l| l.d));
        let worst = sides.windows(2).map(|w| (w[1] / w[0]).min(w[0] / w[1])).fold(1.0, f64::min);
        0.2 * worst
    }

    /// Checks the five sequence properties; returns a description of the
    /// first failure.
    pub fn check_properties(&self) -> std::result::Result<(), String> {
        let Some(first) = self.layers.first() else { return Ok(()) };
        if first.r != self.r {
            return Err(format!("first radius {} differs from r = {}", first.r, self.r));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let ratio = l.r / l.d;
            if (ratio - l.n as f64).abs() > 1e-9 * ratio {
                return Err(format!("layer {i}: r/d = {ratio} is not the integer {}", l.n));
            }
            let scale = l.r.powf(self.q);
            if l.d < self.m_lo * scale * (1.0 - 1e-12) || l.d > self.m_hi * scale * (1.0 + 1e-12) {
                return Err(format!("layer {i}: d = {} outside [{}, {}]", l.d, self.m_lo * scale, self.m_hi * scale));
            }
            if let Some(next) = self.layers.get(i + 1) {
                if (next.r - (l.r + l.d)).abs() > 1e-12 * next.r {
                    return Err(format!("layer {i}: r_next = {} != r + d = {}", next.r, l.r + l.d));
                }
                if next.r <= l.r {
                    return Err(format!("layer {i}: radii not increasing"));
                }
            }
        }
        Ok(())
    }
}

/// Layers generated while `r_i < r_max`.
pub fn build_annular_layout(r: f64, q: f64, r_max: f64) -> Result<AnnularLayout> {
    AnnularLayout::validate(r, q)?;
    if !(r_max > r) {
        return Err(Error::Domain(format!("R_max = {r_max} must exceed r = {r}")));
    }
    let mut layers = Vec::new();
    let mut r_i = r;
    while r_i < r_max {
        let layer = AnnularLayout::next(r_i, q);
        r_i = layer.r + layer.d;
        layers.push(layer);
    }
    Ok(AnnularLayout::from_layers(r, q, layers))
}

/// How a partition was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionKind {
    Lattice { lambda: f64, m: f64, mu: f64, delta: f64, region_radius: f64 },
    Annular { layout: AnnularLayout, delta: f64 },
    Single,
}

/// Weight of one cell at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeight {
    pub cell: usize,
    pub value: f64,
    pub gradient: Vec<f64>,
}

#[derive(Debug)]
struct BucketIndex {
    size: f64,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

/// Cells, weights `A_i` and per-cell gradient bounds.
#[derive(Debug, Serialize, Deserialize)]
pub struct PartitionOfUnity {
    pub d: usize,
    pub cells: Vec<CubeCell>,
    /// `b_i >= sup |∇A_i|`.
    pub gradient_bounds: Vec<f64>,
    pub kind: PartitionKind,
    #[serde(skip)]
    index: OnceLock<BucketIndex>,
}

impl Clone for PartitionOfUnity {
    fn clone(&self) -> Self {
        Self::assemble(self.d, self.cells.clone(), self.gradient_bounds.clone(), self.kind.clone())
    }
}

impl PartitionOfUnity {
    fn assemble(d: usize, cells: Vec<CubeCell>, gradient_bounds: Vec<f64>, kind: PartitionKind) -> Self {
        Self { d, cells, gradient_bounds, kind, index: OnceLock::new() }
    }

    /// A single cell; its weight is identically one wherever the bump is
    /// positive, so its gradient bound is zero.
    pub fn single(center: Vec<f64>, side: f64, delta: f64) -> Result<Self> {
        if !(side > 0.0 && delta > 0.0 && delta <= 0.5) {
            return Err(Error::Domain(format!("single cell needs side > 0 and delta in (0, 1/2], got {side}, {delta}")));
        }
        let d = center.len();
        let cell = CubeCell { center, side, delta, layer: LATTICE_LAYER, index: vec![0; d] };
        Ok(Self::assemble(d, vec![cell], vec![0.0], PartitionKind::Single))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn delta(&self) -> f64 {
        match &self.kind {
            PartitionKind::Lattice { delta, .. } | PartitionKind::Annular { delta, .. } => *delta,
            PartitionKind::Single => self.cells[0].delta,
        }
    }

    pub fn annular_layout(&self) -> Option<&AnnularLayout> {
        match &self.kind {
            PartitionKind::Annular { layout, .. } => Some(layout),
            _ => None,
        }
    }

    /// Index of the central box of an annular partition.
    pub fn central_cell(&self) -> Option<usize> {
        self.cells.iter().position(|c| c.layer == 0)
    }

    fn bucket_index(&self) -> &BucketIndex {
        self.index.get_or_init(|| {
            let mut sides: Vec<f64> = self.cells.iter().map(|c| 2.0 * c.support_half_width()).collect();
            sides.sort_by(|a, b| a.total_cmp(b));
            let size = sides.get(sides.len() / 4).copied().unwrap_or(1.0).max(1e-12);
            let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            for (i, cell) in self.cells.iter().enumerate() {
                let (lo, hi) = cell.support_bounds();
                let lo_b: Vec<i64> = lo.iter().map(|v| (v / size).floor() as i64).collect();
                let hi_b: Vec<i64> = hi.iter().map(|v| (v / size).floor() as i64).collect();
                let mut key = lo_b.clone();
                loop {
                    buckets.entry(key.clone()).or_default().push(i);
                    let mut k = 0;
                    while k < self.d {
                        key[k] += 1;
                        if key[k] <= hi_b[k] {
                            break;
                        }
                        key[k] = lo_b[k];
                        k += 1;
                    }
                    if k == self.d {
                        break;
                    }
                }
            }
            BucketIndex { size, buckets }
        })
    }

    /// Cells whose open support contains `x`.
    pub fn cells_at(&self, x: &[f64]) -> Vec<usize> {
        let idx = self.bucket_index();
        let key: Vec<i64> = x.iter().map(|v| (v / idx.size).floor() as i64).collect();
        idx.buckets
            .get(&key)
            .map(|list| list.iter().copied().filter(|&i| self.cells[i].support_contains(x)).collect())
            .unwrap_or_default()
    }

    /// Whether `x` lies in the covered region (some core cube).
    pub fn covers(&self, x: &[f64]) -> bool {
        self.cells_at(x).iter().any(|&i| self.cells[i].core_contains(x))
    }

    /// All nonzero weights `A_i(x)` with gradients. Empty outside every
    /// support.
    pub fn weights_at(&self, x: &[f64]) -> Vec<CellWeight> {
        let ids = self.cells_at(x);
        let bumps: Vec<(f64, Vec<f64>)> = ids.iter().map(|&i| self.cells[i].bump(x)).collect();
        let sum_sq: f64 = bumps.iter().map(|(v, _)| v * v).sum();
        if sum_sq <= 0.0 {
            return Vec::new();
        }
        let s = sum_sq.sqrt();
        // ∇A_i = ∇φ_i/S - φ_i (Σ_j φ_j ∇φ_j)/S³
        let mut mix = vec![0.0; self.d];
        for (v, g) in &bumps {
            for k in 0..self.d {
                mix[k] += v * g[k];
            }
        }
        ids.iter()
            .zip(&bumps)
            .filter(|(_, (v, _))| *v > 0.0)
            .map(|(&cell, (v, g))| CellWeight {
                cell,
                value: v / s,
                gradient: (0..self.d).map(|k| g[k] / s - v * mix[k] / (s * s * s)).collect(),
            })
            .collect()
    }

    /// Weight of one cell at `x`.
    pub fn weight(&self, cell: usize, x: &[f64]) -> (f64, Vec<f64>) {
        self.weights_at(x)
            .into_iter()
            .find(|w| w.cell == cell)
            .map_or_else(|| (0.0, vec![0.0; self.d]), |w| (w.value, w.gradient))
    }

    /// Cells whose supports meet the support of `cell`.
    pub fn neighbours(&self, cell: usize) -> Vec<usize> {
        let (lo, hi) = self.cells[cell].support_bounds();
        let idx = self.bucket_index();
        let mut out: Vec<usize> = Vec::new();
        let lo_b: Vec<i64> = lo.iter().map(|v| (v / idx.size).floor() as i64).collect();
        let hi_b: Vec<i64> = hi.iter().map(|v| (v / idx.size).floor() as i64).collect();
        let mut key = lo_b.clone();
        loop {
            if let Some(list) = idx.buckets.get(&key) {
                for &j in list {
                    let (lo2, hi2) = self.cells[j].support_bounds();
                    let meets = (0..self.d).all(|k| lo2[k] < hi[k] && lo[k] < hi2[k]);
                    if meets && !out.contains(&j) {
                        out.push(j);
                    }
                }
            }
            let mut k = 0;
            while k < self.d {
                key[k] += 1;
                if key[k] <= hi_b[k] {
                    break;
                }
                key[k] = lo_b[k];
                k += 1;
            }
            if k == self.d {
                break;
            }
        }
        out.sort_unstable();
        out
    }

    /// `b_i = g_i + sqrt(2^d) · max_{j ~ i} g_j` with `g_j` the bump
    /// gradient bound; valid because `Σ φ_j² >= 1` on the covered region
    /// and at most `2^d` bumps are nonzero at any point.
    fn compute_gradient_bounds(&mut self) {
        let root_m = overlap_limit(self.d).sqrt();
        let g: Vec<f64> = self.cells.iter().map(CubeCell::bump_gradient_bound).collect();
        self.gradient_bounds = (0..self.cells.len())
            .map(|i| {
                let worst = self.neighbours(i).iter().map(|&j| g[j]).fold(0.0, f64::max);
                g[i] + root_m * worst
            })
            .collect();
    }

    /// `(C_inf, C_sup)` with `b_i <= C_inf (inf_supp|x|)^{-q}` and
    /// `b_i <= C_sup (sup_supp|x|)^{-q}` over the annular cells (the
    /// central box excluded).
    pub fn annular_gradient_constants(&self) -> Option<(f64, f64)> {
        let q = self.annular_layout()?.q;
        let mut c_inf: f64 = 0.0;
        let mut c_sup: f64 = 0.0;
        for (cell, b) in self.cells.iter().zip(&self.gradient_bounds) {
            if cell.layer <= 0 {
                continue;
            }
            let (lo, hi) = cell.support_norm_range();
            c_inf = c_inf.max(b * lo.powf(q));
            c_sup = c_sup.max(b * hi.powf(q));
        }
        Some((c_inf, c_sup))
    }

    /// Axis-aligned box enclosing every core.
    pub fn core_bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![f64::INFINITY; self.d];
        let mut hi = vec![f64::NEG_INFINITY; self.d];
        for c in &self.cells {
            let (a, b) = c.core_bounds();
            for k in 0..self.d {
                lo[k] = lo[k].min(a[k]);
                hi[k] = hi[k].max(b[k]);
            }
        }
        (lo, hi)
    }
}

/// Lattice constant `C(d, δ) = (1 + 2^{d/2}) · 2√d / δ`; every lattice
/// weight satisfies `|∇A_i| <= C(d, δ)/μ`.
pub fn lattice_gradient_constant(d: usize, delta: f64) -> f64 {
    (1.0 + overlap_limit(d).sqrt()) * (d as f64).sqrt() * SMOOTH_STEP_MAX_SLOPE / delta
}

/// Cube lattice of side `μ = λ^{-m}` centred at `(z + 1/2)μ`, keeping every
/// cell whose support meets the ball of radius `region_radius`.
pub fn build_lattice_partition(lambda: f64, m: f64, delta: f64, region_radius: f64, d: usize) -> Result<PartitionOfUnity> {
    if d < 1 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    if !(lambda > 1.0) {
        return Err(Error::Domain(format!("lattice scale needs lambda > 1, got {lambda}")));
    }
    if !(m > 0.0 && m < 0.5) {
        return Err(Error::Domain(format!("scale exponent m must lie in (0, 1/2), got {m}")));
    }
    if !(delta > 0.0 && delta <= 0.5) {
        return Err(Error::Domain(format!("overlap delta must lie in (0, 1/2] for the 2^d multiplicity bound, got {delta}")));
    }
    if !(region_radius > 0.0) {
        return Err(Error::Domain("region radius must be positive".into()));
    }
    let mu = lambda.powf(-m);
    let reach = region_radius + mu * (0.5 + delta);
    let zmax = (reach / mu).ceil() as i64 + 1;
    let span = (2 * zmax) as usize;
    let total = span.checked_pow(d as u32).filter(|&t| t <= 50_000_000).ok_or_else(|| {
        Error::Resource(format!("lattice with {span}^{d} candidate cells exceeds the cell budget"))
    })?;
    let mut cells = Vec::new();
    let hw = mu * (0.5 + delta);
    for flat in 0..total {
        let mut rem = flat;
        let mut z = vec![0i64; d];
        for k in (0..d).rev() {
            z[k] = (rem % span) as i64 - zmax;
            rem /= span;
        }
        let center: Vec<f64> = z.iter().map(|&zk| (zk as f64 + 0.5) * mu).collect();
        let lo: Vec<f64> = center.iter().map(|c| c - hw).collect();
        let hi: Vec<f64> = center.iter().map(|c| c + hw).collect();
        let (near, _) = crate::potentials::box_distance_range(&lo, &hi, &vec![0.0; d]);
        if near < region_radius {
            cells.push(CubeCell { center, side: mu, delta, layer: LATTICE_LAYER, index: z });
        }
    }
    let b = lattice_gradient_constant(d, delta) / mu;
    let n = cells.len();
    Ok(PartitionOfUnity::assemble(
        d,
        cells,
        vec![b; n],
        PartitionKind::Lattice { lambda, m, mu, delta, region_radius },
    ))
}

/// Tiles the central box `{D(x) <= r}` by one cell and each annulus
/// `{r_i <= D(x) <= r_i + d_i}` (sup-norm `D`) by cubes of side `d_i`.
pub fn tile_annuli(layout: &AnnularLayout, d: usize, delta: f64) -> Result<PartitionOfUnity> {
    if d < 1 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let threshold = layout.delta_threshold();
    if !(delta > 0.0) || delta > threshold {
        return Err(Error::Domain(format!(
            "overlap delta = {delta} exceeds the layout threshold {threshold:.4} (0.2 x smallest successive size ratio); supports would reach non-adjacent rows"
        )));
    }
    let mut cells = vec![CubeCell { center: vec![0.0; d], side: 2.0 * layout.r, delta, layer: 0, index: vec![0; d] }];
    for (li, layer) in layout.layers.iter().enumerate() {
        let n = layer.n as i64;
        let per_axis = (2 * n + 2) as usize;
        let total = per_axis.pow(d as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut k = vec![0i64; d];
            for a in (0..d).rev() {
                k[a] = (rem % per_axis) as i64 - (n + 1);
                rem /= per_axis;
            }
            // cube [k d, (k+1) d] lies inside the inner box iff -n <= k < n on every axis
            if k.iter().all(|&v| v >= -n && v < n) {
                continue;
            }
            let center = k.iter().map(|&v| (v as f64 + 0.5) * layer.d).collect();
            cells.push(CubeCell { center, side: layer.d, delta, layer: li as i32 + 1, index: k });
        }
    }
    let mut p = PartitionOfUnity::assemble(
        d,
        cells,
        Vec::new(),
        PartitionKind::Annular { layout: layout.clone(), delta },
    );
    p.compute_gradient_bounds();
    Ok(p)
}

/// Sampled audit of a cover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverAudit {
    pub samples: usize,
    pub max_multiplicity: usize,
    /// `max |Σ A_i² - 1|` over covered sample points.
    pub worst_partition_defect: f64,
    /// `max |∇A_i| / b_i` over sample points and cells with `b_i > 0`.
    pub worst_gradient_ratio: f64,
    /// Observed `(min, max)` of `d_{i+1}/d_i` (annular partitions).
    pub layer_ratio_range: Option<(f64, f64)>,
    /// `(M'', M''')` from the layout constants (annular partitions).
    pub layer_ratio_bounds: Option<(f64, f64)>,
}

/// Uniform seeded samples of the covered region.
pub fn audit_cover(p: &PartitionOfUnity, sample_count: usize, seed: u64) -> CoverAudit {
    let (lo, hi) = p.core_bounding_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut audit = CoverAudit {
        samples: 0,
        max_multiplicity: 0,
        worst_partition_defect: 0.0,
        worst_gradient_ratio: 0.0,
        layer_ratio_range: p.annular_layout().and_then(AnnularLayout::observed_ratio_range),
        layer_ratio_bounds: p.annular_layout().map(AnnularLayout::ratio_bounds),
    };
    let mut attempts = 0;
    while audit.samples < sample_count && attempts < 50 * sample_count.max(1) {
        attempts += 1;
        let x: Vec<f64> = (0..p.d).map(|k| rng.random_range(lo[k]..=hi[k])).collect();
        if !p.covers(&x) {
            continue;
        }
        audit.samples += 1;
        audit.max_multiplicity = audit.max_multiplicity.max(p.cells_at(&x).len());
        let weights = p.weights_at(&x);
        let sum: f64 = weights.iter().map(|w| w.value * w.value).sum();
        audit.worst_partition_defect = audit.worst_partition_defect.max((sum - 1.0).abs());
        for w in &weights {
            let b = p.gradient_bounds[w.cell];
            if b > 0.0 {
                let g = w.gradient.iter().map(|v| v * v).sum::<f64>().sqrt();
                audit.worst_gradient_ratio = audit.worst_gradient_ratio.max(g / b);
            }
        }
    }
    audit
}
