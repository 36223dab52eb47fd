//! Half-space extensions and the quantities built on them.
//!
//! Both extensions are discrete Poisson convolutions
//! `P_a(x, z) ∝ z^a / (|x|² + z²)^{(n+a)/2}` with `a = 2s` for `ū` and
//! `a = σ` for the set field `U`. Cell weights are exact integrals of the
//! kernel over grid cells (closed form in the radial variable, Gauss in the
//! angle), the exterior datum contributes through ray integrals out to
//! infinity, and every row is normalized by its total weight so constants are
//! reproduced exactly.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::math::{atan2, cos, ln, powf, sin, sqrt, CompensatedSum, GaussRule};
use crate::model::{AdmissiblePair, DatumKind, DiscreteFunction, ExteriorDatum, FractionalParams, Grid, PhaseSet, Point};
use crate::{par, Error, Result};

/// Ratio of consecutive vertical levels.
pub const LEVEL_RATIO: f64 = 1.15;

const TAU: f64 = 2.0 * PI;
const MAX_ANGLE_PIECE: f64 = PI / 16.0;
const TAIL_TOL: f64 = 1e-13;

/// Tensor grid over the upper half-space: the base cells times vertical
/// levels `0 = z_0 < z_1 < … < z_q`, geometric from `z_1 = h/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfGrid {
    grid: Arc<Grid>,
    levels: Vec<f64>,
    ratio: f64,
}

impl HalfGrid {
    /// Levels reach at least `top` with one level to spare.
    pub fn new(grid: Arc<Grid>, top: f64) -> Result<Self> {
        Self::with_ratio(grid, top, LEVEL_RATIO)
    }

    pub fn with_ratio(grid: Arc<Grid>, top: f64, ratio: f64) -> Result<Self> {
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::Parameter(format!("level ratio must exceed 1, got {ratio}")));
        }
        if !(top > 0.0) || !top.is_finite() {
            return Err(Error::Parameter(format!("half-grid top must be positive, got {top}")));
        }
        let mut z = 0.5 * grid.width();
        let mut levels = vec![z];
        while z < top {
            z *= ratio;
            levels.push(z);
        }
        z *= ratio;
        levels.push(z);
        Ok(Self { grid, levels, ratio })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// `z_1, …, z_q`.
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Number of levels above the trace, `q`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    /// `z_k`, with `z_0 = 0`.
    pub fn z(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.levels[k - 1]
        }
    }

    /// Vertical extent represented by level `k ≥ 1`.
    pub fn span(&self, k: usize) -> (f64, f64) {
        let q = self.len();
        let lo = if k == 1 { 0.0 } else { 0.5 * (self.z(k - 1) + self.z(k)) };
        let hi = if k == q { self.z(q) } else { 0.5 * (self.z(k) + self.z(k + 1)) };
        (lo, hi)
    }

    /// Largest radius of a half-ball on which gradients are available.
    pub fn reach(&self) -> f64 {
        let q = self.len();
        (self.grid.half_width() - self.grid.width()).min(self.z(q - 1))
    }

    fn check_radius(&self, r: f64) -> Result<()> {
        if !(r > 0.0) {
            return Err(Error::Parameter(format!("radius must be positive, got {r}")));
        }
        let reach = self.reach();
        if r > reach {
            return Err(Error::OutOfRange { radius: r, reach });
        }
        Ok(())
    }

    /// Index of the level interval `[z_k, z_{k+1}]` containing `z`.
    fn level_bracket(&self, z: f64) -> (usize, f64) {
        let q = self.len();
        if z <= 0.0 {
            return (0, 0.0);
        }
        if z >= self.z(q) {
            return (q - 1, 1.0);
        }
        let k = self.levels.partition_point(|&l| l <= z);
        let (a, b) = (self.z(k), self.z(k + 1));
        (k, (z - a) / (b - a))
    }
}

/// Values on the nodes of a [`HalfGrid`], level-major; level 0 is the trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedField {
    half: Arc<HalfGrid>,
    values: Vec<f64>,
    exponent: f64,
    set: bool,
}

impl ExtendedField {
    /// Field sampled from a function of `(x, z)`; the trace row is `f(x, 0)`.
    pub fn from_fn<F: Fn(Point, f64) -> f64>(half: Arc<HalfGrid>, exponent: f64, f: F) -> Self {
        let grid = half.grid().clone();
        let mut values = Vec::with_capacity((half.len() + 1) * grid.len());
        for k in 0..=half.len() {
            let z = half.z(k);
            for c in 0..grid.len() {
                values.push(f(grid.center(c), z));
            }
        }
        Self { half, values, exponent, set: false }
    }

    pub fn half_grid(&self) -> &Arc<HalfGrid> {
        &self.half
    }

    /// Exponent `w` of the weight `z^w` in the Dirichlet energy.
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn is_set_field(&self) -> bool {
        self.set
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let n = self.half.grid().len();
        &self.values[k * n..(k + 1) * n]
    }

    pub fn trace(&self) -> &[f64] {
        self.row(0)
    }

    pub fn value(&self, k: usize, cell: usize) -> f64 {
        self.values[k * self.half.grid().len() + cell]
    }

    /// Multilinear interpolation between cell centers and levels; clamps at
    /// the edges of the grid.
    pub fn interpolate(&self, p: Point, z: f64) -> f64 {
        let grid = self.half.grid();
        let h = grid.width();
        let l = grid.half_width();
        let m = grid.cells_per_side();
        let axis = |x: f64| -> (usize, f64) {
            let t = (x + l) / h - 0.5;
            if t <= 0.0 {
                return (0, 0.0);
            }
            let i = (t as usize).min(m - 2);
            (i, (t - i as f64).min(1.0))
        };
        let (k, tz) = self.half.level_bracket(z);
        let (i, tx) = axis(p[0]);
        let corners = |k: usize| -> f64 {
            if grid.dim() == 1 {
                let a = self.value(k, i);
                let b = self.value(k, i + 1);
                a + tx * (b - a)
            } else {
                let (j, ty) = axis(p[1]);
                let v = |di: usize, dj: usize| self.value(k, grid.index(i + di, j + dj));
                let a = v(0, 0) + tx * (v(1, 0) - v(0, 0));
                let b = v(0, 1) + tx * (v(1, 1) - v(0, 1));
                a + ty * (b - a)
            }
        };
        let lo = corners(k);
        if tz == 0.0 {
            return lo;
        }
        let hi = corners(k + 1);
        lo + tz * (hi - lo)
    }

    /// Squared horizontal gradient, first component and vertical derivative
    /// at node `(k, cell)`, `1 ≤ k < q`.
    fn partials(&self, k: usize, cell: usize) -> (f64, f64, f64) {
        let grid = self.half.grid();
        let h = grid.width();
        let m = grid.cells_per_side();
        let (i, j) = grid.coords(cell);
        let row = self.row(k);
        let diff = |prev: Option<usize>, next: Option<usize>| -> f64 {
            match (prev, next) {
                (Some(a), Some(b)) => (row[b] - row[a]) / (2.0 * h),
                (None, Some(b)) => (row[b] - row[cell]) / h,
                (Some(a), None) => (row[cell] - row[a]) / h,
                (None, None) => 0.0,
            }
        };
        let dx = diff(
            (i > 0).then(|| grid.index(i - 1, j)),
            (i + 1 < m).then(|| grid.index(i + 1, j)),
        );
        let dy = if grid.dim() == 2 {
            diff(
                (j > 0).then(|| grid.index(i, j - 1)),
                (j + 1 < m).then(|| grid.index(i, j + 1)),
            )
        } else {
            0.0
        };
        let (z0, z1, z2) = (self.half.z(k - 1), self.half.z(k), self.half.z(k + 1));
        let (d1, d2) = (z1 - z0, z2 - z1);
        let (f0, f1, f2) = (self.value(k - 1, cell), self.value(k, cell), self.value(k + 1, cell));
        let dz = (d1 * d1 * f2 - d2 * d2 * f0 + (d2 * d2 - d1 * d1) * f1) / (d1 * d2 * (d1 + d2));
        (dx * dx + dy * dy, dx, dz)
    }

    /// `∫_lo^hi z^w |∇f|²` along the vertical span of node `(k, cell)`.
    /// Next to the trace the field behaves like `f(x,0) + β z^{1-w₀}`
    /// (`w₀` the field's own exponent), which a difference quotient cannot
    /// follow, so the vertical part of the first level uses that profile.
    fn span_energy(&self, k: usize, cell: usize, lo: f64, hi: f64, w: f64) -> f64 {
        let (horizontal, _, dz) = self.partials(k, cell);
        let p = 1.0 - self.exponent;
        let e = w + 2.0 * p - 1.0;
        let vertical = if k == 1 && p > 0.0 && e > 0.0 && lo == 0.0 {
            let beta = (self.value(1, cell) - self.value(0, cell)) / powf(self.half.z(1), p);
            p * p * beta * beta * powf(hi, e) / e
        } else {
            dz * dz * weight_integral(lo, hi, w)
        };
        horizontal * weight_integral(lo, hi, w) + vertical
    }
}

/// `∫_lo^hi z^w dz`.
fn weight_integral(lo: f64, hi: f64, w: f64) -> f64 {
    (powf(hi, 1.0 + w) - powf(lo, 1.0 + w)) / (1.0 + w)
}

struct Kernel {
    n: usize,
    a: f64,
    rule: GaussRule,
}

impl Kernel {
    fn new(n: usize, a: f64) -> Self {
        Self { n, a, rule: GaussRule::new(16) }
    }

    /// `z^a ρ^{n-1} / (ρ² + z²)^{(n+a)/2}`.
    fn density(&self, z: f64, rho: f64) -> f64 {
        let q = rho * rho + z * z;
        let j = if self.n == 2 { rho } else { 1.0 };
        powf(z, self.a) * j * powf(q, -0.5 * (self.n as f64 + self.a))
    }

    /// `∫ cos^{a-1} θ dθ` over `[t1, t2] ⊂ [0, π/2]`.
    fn cos_power(&self, t1: f64, t2: f64) -> f64 {
        let a = self.a;
        let mut acc = 0.0;
        if t1 < FRAC_PI_4 {
            let hi = t2.min(FRAC_PI_4);
            acc += self.rule.integrate(t1, hi, |t| powf(cos(t), a - 1.0));
        }
        if t2 > FRAC_PI_4 {
            // u = π/2 - θ, then w = u^a removes the endpoint singularity
            let u_lo = FRAC_PI_2 - t2;
            let u_hi = FRAC_PI_2 - t1.max(FRAC_PI_4);
            acc += self.rule.integrate(powf(u_lo.max(0.0), a), powf(u_hi, a), |w| {
                let u = powf(w, 1.0 / a);
                if u == 0.0 {
                    1.0
                } else {
                    powf(sin(u) / u, a - 1.0)
                }
            }) / a;
        }
        acc
    }

    /// Kernel mass of `{x + ρ d : ρ1 < ρ < ρ2}`, `ρ2` possibly infinite. In
    /// one dimension `ρ` may be signed.
    fn mass(&self, z: f64, r1: f64, r2: f64) -> f64 {
        if r2 <= r1 {
            return 0.0;
        }
        if self.n == 2 {
            let a = self.a;
            let f = |r: f64| if r.is_infinite() { 0.0 } else { powf(r * r + z * z, -0.5 * a) };
            return powf(z, a) / a * (f(r1) - f(r2));
        }
        let th = |y: f64| if y.is_infinite() { FRAC_PI_2.copysign(y) } else { atan2(y, z) };
        let (t1, t2) = (th(r1), th(r2));
        if t1 >= 0.0 {
            self.cos_power(t1, t2)
        } else if t2 <= 0.0 {
            self.cos_power(-t2, -t1)
        } else {
            self.cos_power(0.0, -t1) + self.cos_power(0.0, t2)
        }
    }

    /// `∫_rect P` seen from the origin, for a rectangle in the plane.
    fn rect_mass(&self, z: f64, lo: Point, hi: Point) -> f64 {
        let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
        let contains = lo[0] <= 0.0 && hi[0] >= 0.0 && lo[1] <= 0.0 && hi[1] >= 0.0;
        let mut angles: Vec<f64> = Vec::with_capacity(6);
        if contains {
            for c in &corners {
                let t = atan2(c[1], c[0]);
                angles.push(if t < 0.0 { t + TAU } else { t });
            }
            angles.push(0.0);
            angles.push(TAU);
        } else {
            let mid = [0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1])];
            let tc = atan2(mid[1], mid[0]);
            for c in &corners {
                let mut d = atan2(c[1], c[0]) - tc;
                while d > PI {
                    d -= TAU;
                }
                while d <= -PI {
                    d += TAU;
                }
                angles.push(tc + d);
            }
        }
        angles.sort_by(f64::total_cmp);
        let mut acc = CompensatedSum::new();
        for w in angles.windows(2) {
            if w[1] - w[0] <= 1e-15 {
                continue;
            }
            acc.add(self.rule.integrate(w[0], w[1], |t| {
                let d = [cos(t), sin(t)];
                match ray_box([0.0, 0.0], d, lo, hi) {
                    Some((a, b)) => self.mass(z, a.max(0.0), b),
                    None => 0.0,
                }
            }));
        }
        acc.value()
    }
}

/// Parameter interval where `o + t d` lies in the box `[lo, hi]`.
fn ray_box(o: Point, d: Point, lo: Point, hi: Point) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for k in 0..2 {
        if d[k] == 0.0 {
            if o[k] < lo[k] || o[k] > hi[k] {
                return None;
            }
        } else {
            let a = (lo[k] - o[k]) / d[k];
            let b = (hi[k] - o[k]) / d[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
    }
    (t1 > t0).then_some((t0, t1))
}

fn wrap_angle(t: f64) -> f64 {
    let mut t = t % TAU;
    if t < 0.0 {
        t += TAU;
    }
    t
}

/// Parameters `t > 0` where `o + t d` meets the circle `|y - c| = r`.
fn circle_hits(o: Point, d: Point, c: Point, r: f64) -> [Option<f64>; 2] {
    let p = [o[0] - c[0], o[1] - c[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let b = (p[0] * d[0] + p[1] * d[1]) / dd;
    let cc = (p[0] * p[0] + p[1] * p[1] - r * r) / dd;
    let disc = b * b - cc;
    if disc <= 0.0 {
        return [None, None];
    }
    let s = sqrt(disc);
    let f = |t: f64| (t > 0.0).then_some(t);
    [f(-b - s), f(-b + s)]
}

/// What the exterior contributes along rays: the datum values or the ±1
/// indicator of its set.
#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Values,
    Indicator,
}

struct Exterior<'a> {
    kernel: Kernel,
    datum: &'a ExteriorDatum,
    base: ExteriorDatum,
    mode: Mode,
    lo: Point,
    hi: Point,
}

impl<'a> Exterior<'a> {
    fn new(kernel: Kernel, datum: &'a ExteriorDatum, mode: Mode, grid: &Grid) -> Result<Self> {
        if !datum.has_analytic_tails() {
            return Err(Error::IncompleteDatum(
                "tabulated data do not cover the reach of the Poisson kernel".into(),
            ));
        }
        if mode == Mode::Values && datum.growth_degree() >= kernel.a {
            return Err(Error::IncompleteDatum(format!(
                "datum growth {} is not integrable against the Poisson kernel of order {}",
                datum.growth_degree(),
                kernel.a
            )));
        }
        let l = grid.half_width();
        let (lo, hi) = if grid.dim() == 1 { ([-l, 0.0], [l, 0.0]) } else { ([-l, -l], [l, l]) };
        let mut base = datum.clone();
        base.bumps.clear();
        Ok(Self { kernel, datum, base, mode, lo, hi })
    }

    fn piecewise_constant(&self) -> bool {
        self.mode == Mode::Indicator
            || !matches!(&self.base.kind, DatumKind::HomogeneousCone { degree, .. } if *degree > 0.0)
    }

    fn base_value(&self, p: &Point) -> f64 {
        match self.mode {
            Mode::Values => self.base.value(p).unwrap_or(0.0),
            Mode::Indicator => {
                if self.base.in_set(p).unwrap_or(true) {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    /// Parameters beyond `r0` where the base datum changes along the ray.
    fn ray_breaks(&self, x: Point, d: Point, r0: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let n = self.datum.dimension;
        match &self.base.kind {
            DatumKind::Halfspace { normal, offset, .. } => {
                let nd = normal[0] * d[0] + if n == 2 { normal[1] * d[1] } else { 0.0 };
                let nx = normal[0] * x[0] + if n == 2 { normal[1] * x[1] } else { 0.0 };
                if nd != 0.0 {
                    out.push((offset - nx) / nd);
                }
            }
            DatumKind::Ball { center, radius, .. } => {
                out.extend(circle_hits(x, d, *center, *radius).into_iter().flatten());
            }
            DatumKind::HomogeneousCone { sectors, .. } => {
                if n == 1 {
                    out.push(-x[0] / d[0]);
                } else {
                    for s in sectors {
                        let e = [cos(s.from), sin(s.from)];
                        // x + t d = u e with u > 0
                        let det = d[0] * (-e[1]) - d[1] * (-e[0]);
                        if det != 0.0 {
                            let t = (-x[0] * (-e[1]) + x[1] * (-e[0])) / det;
                            let u = (d[0] * (-x[1]) - d[1] * (-x[0])) / det;
                            if u > 0.0 {
                                out.push(t);
                            }
                        }
                    }
                }
            }
            DatumKind::Constant { .. } | DatumKind::Tabulated { .. } => {}
        }
        out.retain(|&t| t > r0 && t.is_finite());
        out.sort_by(f64::total_cmp);
        out
    }

    /// `∫_{r1}^{r2} density(ρ) · φ(x + ρ d) dρ` for a non-constant piece,
    /// in the variable `v = ln ρ`.
    fn smooth_piece<F: Fn(f64) -> f64>(&self, z: f64, r1: f64, r2: f64, f: F) -> f64 {
        let k = &self.kernel;
        let v0 = ln(r1);
        let vmax = if r2.is_infinite() {
            let decay = k.a - self.datum.growth_degree();
            v0 + ln(1.0 / TAIL_TOL) / decay + 2.0
        } else {
            ln(r2)
        };
        let mut acc = CompensatedSum::new();
        let mut v = v0;
        let mut w = 0.25;
        while v < vmax {
            let b = (v + w).min(vmax);
            acc.add(k.rule.integrate(v, b, |t| {
                let rho = crate::math::exp(t);
                rho * k.density(z, rho) * f(rho)
            }));
            v = b;
            w = (w * 1.5).min(2.0);
        }
        acc.value()
    }

    /// `(mass, ∫ P φ)` along the ray `x + ρ d`, `ρ > r0`.
    fn ray(&self, x: Point, d: Point, r0: f64, z: f64) -> (f64, f64) {
        let k = &self.kernel;
        let mass = k.mass(z, r0, f64::INFINITY);
        let mut cuts = vec![r0];
        cuts.extend(self.ray_breaks(x, d, r0));
        cuts.push(f64::INFINITY);
        let mut acc = CompensatedSum::new();
        let at = |rho: f64| [x[0] + rho * d[0], x[1] + rho * d[1]];
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.piecewise_constant() {
                let probe = if b.is_infinite() { 2.0 * a + 1.0 } else { 0.5 * (a + b) };
                let v = self.base_value(&at(probe));
                if v != 0.0 {
                    acc.add(v * k.mass(z, a, b));
                }
            } else {
                acc.add(self.smooth_piece(z, a, b, |rho| self.base_value(&at(rho))));
            }
        }
        if self.mode == Mode::Values {
            let n = self.datum.dimension;
            for bump in &self.datum.bumps {
                let [t1, t2] = circle_hits(x, d, bump.center, bump.radius);
                let (Some(t2), t1) = (t2, t1.unwrap_or(0.0)) else { continue };
                let a = t1.max(r0);
                if t2 <= a {
                    continue;
                }
                let step = (t2 - a) / 4.0;
                for p in 0..4 {
                    let (u, v) = (a + p as f64 * step, a + (p + 1) as f64 * step);
                    acc.add(k.rule.integrate(u, v, |rho| {
                        let q = at(rho);
                        let dd = [q[0] - bump.center[0], q[1] - bump.center[1]];
                        let t = crate::math::norm(&dd, n) / bump.radius;
                        let val = if t >= 1.0 { 0.0 } else { let s = 1.0 - t * t; bump.amplitude * s * s * s };
                        k.density(z, rho) * val
                    }));
                }
            }
        }
        (mass, acc.value())
    }

    /// Angles at which the ray integrand from `x` is not smooth.
    fn angle_breaks(&self, x: Point) -> Vec<f64> {
        let (lo, hi) = (self.lo, self.hi);
        let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
        let dir = |p: Point| wrap_angle(atan2(p[1] - x[1], p[0] - x[0]));
        let mut out: Vec<f64> = corners.iter().map(|&c| dir(c)).collect();
        let edges = [(corners[0], corners[1]), (corners[1], corners[2]), (corners[2], corners[3]), (corners[3], corners[0])];
        // boundary points: where a curve of the datum meets the box boundary
        let mut pts: Vec<Point> = Vec::new();
        let mut circles: Vec<(Point, f64)> = self.datum.bumps.iter().map(|b| (b.center, b.radius)).collect();
        let mut asymptotes = Vec::new();
        match &self.base.kind {
            DatumKind::Halfspace { normal, offset, .. } => {
                let t = [-normal[1], normal[0]];
                asymptotes.push(atan2(t[1], t[0]));
                asymptotes.push(atan2(-t[1], -t[0]));
                let nn = normal[0] * normal[0] + normal[1] * normal[1];
                let p0 = [normal[0] * offset / nn, normal[1] * offset / nn];
                for (a, b) in &edges {
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let den = normal[0] * e[0] + normal[1] * e[1];
                    if den != 0.0 {
                        let s = (normal[0] * (p0[0] - a[0]) + normal[1] * (p0[1] - a[1])) / den;
                        if (0.0..=1.0).contains(&s) {
                            pts.push([a[0] + s * e[0], a[1] + s * e[1]]);
                        }
                    }
                }
            }
            DatumKind::Ball { center, radius, .. } => circles.push((*center, *radius)),
            DatumKind::HomogeneousCone { sectors, .. } => {
                for s in sectors {
                    asymptotes.push(s.from);
                    let e = [cos(s.from), sin(s.from)];
                    if let Some((_, t)) = ray_box([0.0, 0.0], e, lo, hi) {
                        pts.push([t * e[0], t * e[1]]);
                    }
                }
            }
            _ => {}
        }
        for a in asymptotes {
            out.push(wrap_angle(a));
        }
        for (c, r) in circles {
            let dc = [c[0] - x[0], c[1] - x[1]];
            let dist = sqrt(dc[0] * dc[0] + dc[1] * dc[1]);
            if dist > r {
                let tc = atan2(dc[1], dc[0]);
                let da = crate::math::asin(r / dist);
                out.push(wrap_angle(tc - da));
                out.push(wrap_angle(tc + da));
            }
            for (a, b) in &edges {
                let e = [b[0] - a[0], b[1] - a[1]];
                for t in circle_hits(*a, e, c, r).into_iter().flatten() {
                    if t <= 1.0 {
                        pts.push([a[0] + t * e[0], a[1] + t * e[1]]);
                    }
                }
            }
        }
        let eps = 1e-12 * (hi[0] - lo[0]);
        for p in pts {
            if p[0] >= lo[0] - eps && p[0] <= hi[0] + eps && p[1] >= lo[1] - eps && p[1] <= hi[1] + eps {
                out.push(dir(p));
            }
        }
        out.push(0.0);
        out.sort_by(f64::total_cmp);
        out.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        out
    }

    /// `(mass, ∫ P φ)` over the complement of the box, seen from `x`.
    fn integrate(&self, x: Point, z: f64) -> (f64, f64) {
        let (lo, hi) = (self.lo, self.hi);
        if self.datum.dimension == 1 {
            let right = self.ray(x, [1.0, 0.0], hi[0] - x[0], z);
            let left = self.ray(x, [-1.0, 0.0], x[0] - lo[0], z);
            return (right.0 + left.0, right.1 + left.1);
        }
        let mut breaks = self.angle_breaks(x);
        breaks.push(breaks[0] + TAU);
        let (mut mass, mut val) = (CompensatedSum::new(), CompensatedSum::new());
        for w in breaks.windows(2) {
            let len = w[1] - w[0];
            if len <= 1e-15 {
                continue;
            }
            let pieces = crate::math::ceil(len / MAX_ANGLE_PIECE).max(1.0) as usize;
            let step = len / pieces as f64;
            for p in 0..pieces {
                let a = w[0] + p as f64 * step;
                for (t, wt) in self.kernel.rule.mapped(a, a + step) {
                    let d = [cos(t), sin(t)];
                    let exit = ray_box(x, d, lo, hi).map(|(_, b)| b).unwrap_or(0.0);
                    let (m, v) = self.ray(x, d, exit, z);
                    mass.add(wt * m);
                    val.add(wt * v);
                }
            }
        }
        (mass.value(), val.value())
    }
}

/// Cell weights of one level, indexed by absolute offsets.
fn level_weights(kernel: &Kernel, grid: &Grid, z: f64) -> Vec<f64> {
    let m = grid.cells_per_side();
    let h = grid.width();
    if grid.dim() == 1 {
        return (0..m).map(|o| kernel.mass(z, (o as f64 - 0.5) * h, (o as f64 + 0.5) * h)).collect();
    }
    let mut w = vec![0.0; m * m];
    for oj in 0..m {
        for oi in 0..=oj {
            let lo = [(oi as f64 - 0.5) * h, (oj as f64 - 0.5) * h];
            let hi = [(oi as f64 + 0.5) * h, (oj as f64 + 0.5) * h];
            let v = kernel.rect_mass(z, lo, hi);
            w[oi + m * oj] = v;
            w[oj + m * oi] = v;
        }
    }
    w
}

fn convolve(grid: &Grid, values: &[f64], weights: &[f64], ext: &[(f64, f64)]) -> Vec<f64> {
    let m = grid.cells_per_side();
    par::map_range(grid.len(), |i| {
        let (ii, ij) = grid.coords(i);
        let mut num = CompensatedSum::new();
        let mut den = CompensatedSum::new();
        for j in 0..grid.len() {
            let (ji, jj) = grid.coords(j);
            let o = ii.abs_diff(ji) + m * ij.abs_diff(jj);
            let w = weights[o];
            num.add(w * values[j]);
            den.add(w);
        }
        num.add(ext[i].1);
        den.add(ext[i].0);
        num.value() / den.value()
    })
}

fn extend(grid: &Grid, half: &Arc<HalfGrid>, trace: Vec<f64>, datum: &ExteriorDatum, a: f64, mode: Mode) -> Result<Vec<f64>> {
    let n = grid.dim();
    let ext = Exterior::new(Kernel::new(n, a), datum, mode, grid)?;
    let q = half.len();
    let mut values = trace.clone();
    values.reserve(q * grid.len());
    let rows: Vec<Vec<f64>> = (1..=q)
        .map(|k| {
            let z = half.z(k);
            let weights = level_weights(&ext.kernel, grid, z);
            let ex: Vec<(f64, f64)> = par::map_range(grid.len(), |i| ext.integrate(grid.center(i), z));
            convolve(grid, &trace, &weights, &ex)
        })
        .collect();
    for r in rows {
        values.extend(r);
    }
    Ok(values)
}

fn check_half_grid(half: &HalfGrid, grid: &Arc<Grid>) -> Result<()> {
    if **half.grid() != **grid {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// `ū(·, z) = u * P_s(·, z)` on every level, with `u` on the trace row.
pub fn extend_scalar(u: &DiscreteFunction, half: &Arc<HalfGrid>, s: f64) -> Result<ExtendedField> {
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::Parameter(format!("s must lie in (0,1), got {s}")));
    }
    check_half_grid(half, u.grid())?;
    let values = extend(u.grid(), half, u.values().to_vec(), u.datum(), 2.0 * s, Mode::Values)?;
    Ok(ExtendedField { half: half.clone(), values, exponent: 1.0 - 2.0 * s, set: false })
}

/// `U(·, z) = (χ_E - χ_{E^c}) * P_σ(·, z)`, with the ±1 indicator on the trace row.
pub fn extend_set(e: &PhaseSet, half: &Arc<HalfGrid>, sigma: f64) -> Result<ExtendedField> {
    if !(sigma > 0.0 && sigma < 1.0) {
        return Err(Error::Parameter(format!("σ must lie in (0,1), got {sigma}")));
    }
    check_half_grid(half, e.grid())?;
    let trace: Vec<f64> = e.indicator().iter().map(|&p| p as f64).collect();
    let mut values = extend(e.grid(), half, trace, e.datum(), sigma, Mode::Indicator)?;
    for v in &mut values {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(ExtendedField { half: half.clone(), values, exponent: 1.0 - sigma, set: true })
}

/// `∫_{B_r^+} z^w |∇f|² dX`. Gradients are central differences on the
/// tensor grid; each node stands for its cell times its vertical span, and
/// the weight and the ball are integrated exactly along that span.
pub fn weighted_dirichlet(f: &ExtendedField, r: f64, weight: f64) -> Result<f64> {
    let half = f.half_grid();
    half.check_radius(r)?;
    if !(weight > -1.0) {
        return Err(Error::Parameter(format!("weight exponent must exceed -1, got {weight}")));
    }
    let grid = half.grid();
    let n = grid.dim();
    let vol = grid.cell_volume();
    let parts = par::map_range(half.len(), |k0| {
        let k = k0 + 1;
        let (lo, hi) = half.span(k);
        if lo >= r {
            return 0.0;
        }
        let mut acc = CompensatedSum::new();
        for c in 0..grid.len() {
            let x = grid.center(c);
            let x2 = x[0] * x[0] + if n == 2 { x[1] * x[1] } else { 0.0 };
            if x2 >= r * r {
                continue;
            }
            let top = hi.min(sqrt(r * r - x2));
            if top <= lo {
                continue;
            }
            acc.add(f.span_energy(k, c, lo, top, weight) * vol);
        }
        acc.value()
    });
    Ok(parts.iter().copied().collect::<CompensatedSum>().value())
}

const SHELL_PANELS: usize = 96;

/// Composite Gauss nodes on `[a, b]`.
fn composite(rule: &GaussRule, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let step = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * rule.nodes.len());
    for p in 0..panels {
        let lo = a + p as f64 * step;
        out.extend(rule.mapped(lo, lo + step));
    }
    out
}

/// `∫_{∂B_r^+} z^w f² dH^n`, with `f` interpolated onto the half-sphere.
/// The elevation `η` is substituted by `τ = η^{1+w}` near the trace.
pub fn shell_integral(f: &ExtendedField, r: f64, weight: f64) -> Result<f64> {
    let half = f.half_grid();
    half.check_radius(r)?;
    if !(weight > -1.0) {
        return Err(Error::Parameter(format!("weight exponent must exceed -1, got {weight}")));
    }
    let n = half.grid().dim();
    let rule = GaussRule::new(4);
    let e = 1.0 + weight;
    // elevation η ∈ (0, π/2]; z = r sin η, |x| = r cos η
    let tau = composite(&rule, 0.0, powf(FRAC_PI_2, e), SHELL_PANELS);
    let rows = par::map_range(tau.len(), |k| {
        let (t, wt) = tau[k];
        let eta = powf(t, 1.0 / e);
        let factor = if eta == 0.0 { 1.0 } else { powf(sin(eta) / eta, weight) };
        let (z, rho) = (r * sin(eta), r * cos(eta));
        let shell = if n == 1 {
            let a = f.interpolate([rho, 0.0], z);
            let b = f.interpolate([-rho, 0.0], z);
            a * a + b * b
        } else {
            let phi = composite(&rule, 0.0, TAU, 2 * SHELL_PANELS);
            let mut acc = CompensatedSum::new();
            for (p, wp) in phi {
                let v = f.interpolate([rho * cos(p), rho * sin(p)], z);
                acc.add(wp * v * v);
            }
            acc.value() * cos(eta)
        };
        wt * factor * shell
    });
    let sum = rows.iter().copied().collect::<CompensatedSum>().value();
    Ok(powf(r, n as f64 + weight) * sum / e)
}

/// Weiss profile `Φ(r) = G(r) - H(r)` at increasing radii.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeissProfile {
    pub radii: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub phi: Vec<f64>,
}

/// Whether both phases occur among the cells within `h/2` of the origin.
pub fn free_boundary_at_origin(e: &PhaseSet) -> bool {
    let grid = e.grid();
    let h = grid.width();
    let (mut plus, mut minus) = (false, false);
    for c in 0..grid.len() {
        let cell = grid.cell(c);
        let mut d2 = 0.0;
        for k in 0..grid.dim() {
            let gap = (cell.lo[k].max(0.0) - 0.0).max(0.0 - cell.hi[k].min(0.0)).max(0.0);
            d2 += gap * gap;
        }
        if sqrt(d2) <= 0.5 * h * (1.0 + 1e-12) {
            if e.phase(c) > 0 {
                plus = true;
            } else {
                minus = true;
            }
        }
    }
    plus && minus
}

/// Profile from precomputed extensions `ū` (weight `z^{1-2s}`) and `U`
/// (weight `z^{1-σ}`).
pub fn weiss_profile_fields(
    ubar: &ExtendedField,
    uset: &ExtendedField,
    radii: &[f64],
    params: &FractionalParams,
) -> Result<WeissProfile> {
    params.validate()?;
    if **ubar.half_grid() != **uset.half_grid() {
        return Err(Error::GridMismatch);
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("radii must be strictly increasing".into()));
    }
    let n = ubar.half_grid().grid().dim() as f64;
    let (s, sigma) = (params.s, params.sigma);
    let (wu, wv) = (1.0 - 2.0 * s, 1.0 - sigma);
    let mut out = WeissProfile { radii: radii.to_vec(), g: Vec::new(), h: Vec::new(), phi: Vec::new() };
    for &r in radii {
        let du = weighted_dirichlet(ubar, r, wu)?;
        let dv = weighted_dirichlet(uset, r, wv)?;
        let b = shell_integral(ubar, r, wu)?;
        let g = powf(r, sigma - n) * (du + params.c_ratio * dv);
        let h = (s - 0.5 * sigma) * powf(r, sigma - n - 1.0) * b;
        out.g.push(g);
        out.h.push(h);
        out.phi.push(g - h);
    }
    Ok(out)
}

/// Weiss profile of a pair whose free boundary passes through the origin.
pub fn weiss_profile(
    pair: &AdmissiblePair,
    radii: &[f64],
    params: &FractionalParams,
    half: &Arc<HalfGrid>,
) -> Result<WeissProfile> {
    if !free_boundary_at_origin(&pair.e) {
        return Err(Error::FreeBoundaryNotAtOrigin);
    }
    let ubar = extend_scalar(&pair.u, half, params.s)?;
    let uset = extend_set(&pair.e, half, params.sigma)?;
    weiss_profile_fields(&ubar, &uset, radii, params)
}

/// Cutoff equal to 1 on `[-1/2, 1/2]` and 0 outside `(-3/4, 3/4)`, a quintic
/// smoothstep in between. Returns `(φ, φ')`.
pub fn cutoff(t: f64) -> (f64, f64) {
    let a = t.abs();
    if a <= 0.5 {
        return (1.0, 0.0);
    }
    if a >= 0.75 {
        return (0.0, 0.0);
    }
    let s = 4.0 * (a - 0.5);
    let v = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
    let d = -120.0 * s * s * (1.0 - s) * (1.0 - s);
    (v, if t < 0.0 { -d } else { d })
}

/// `max |φ'|`; the translation maps are diffeomorphisms only for larger `R`.
pub const CUTOFF_MAX_SLOPE: f64 = 7.5;

/// `𝓔_R(ū⁺, U⁺) + 𝓔_R(ū⁻, U⁻) - 2𝓔_R(ū, U)` for the perturbations
/// `Y = X ± φ(|X|/R) e_1`.
///
/// With `a = ∇_X φ(|X|/R)` the two pulled-back energy densities add up to
/// `2 z^w |a|² (∂_1 f)² / (1 - a_1²)` more than twice the original one, so
/// the defect is a single quadrature on the unperturbed nodes.
pub fn cone_defect_fields(ubar: &ExtendedField, uset: &ExtendedField, r: f64, c_ratio: f64) -> Result<f64> {
    let half = ubar.half_grid();
    if **half != **uset.half_grid() {
        return Err(Error::GridMismatch);
    }
    if !(r > CUTOFF_MAX_SLOPE) {
        return Err(Error::Geometry(format!(
            "X ± φ(|X|/R) e_1 is not invertible for R = {r} (needs R > {CUTOFF_MAX_SLOPE})"
        )));
    }
    half.check_radius(0.75 * r)?;
    let grid = half.grid();
    let n = grid.dim();
    let vol = grid.cell_volume();
    let parts = par::map_range(half.len() - 1, |k0| {
        let k = k0 + 1;
        let (lo, hi) = half.span(k);
        let z = half.z(k);
        let mut acc = CompensatedSum::new();
        for c in 0..grid.len() {
            let x = grid.center(c);
            let x2 = x[0] * x[0] + if n == 2 { x[1] * x[1] } else { 0.0 };
            let rad = sqrt(x2 + z * z);
            let (_, dphi) = cutoff(rad / r);
            if dphi == 0.0 {
                continue;
            }
            let a2 = dphi * dphi / (r * r);
            let a1 = dphi * x[0] / (r * rad);
            let factor = 2.0 * a2 / (1.0 - a1 * a1);
            let (_, gu, _) = ubar.partials(k, c);
            let (_, gv, _) = uset.partials(k, c);
            let dens = weight_integral(lo, hi, ubar.exponent()) * gu * gu
                + c_ratio * weight_integral(lo, hi, uset.exponent()) * gv * gv;
            acc.add(factor * dens * vol);
        }
        acc.value()
    });
    Ok(parts.iter().copied().collect::<CompensatedSum>().value())
}

/// Cone defect of a homogeneous pair at radius `R`.
pub fn cone_defect(pair: &AdmissiblePair, params: &FractionalParams, r: f64, half: &Arc<HalfGrid>) -> Result<f64> {
    params.validate()?;
    if !(r > CUTOFF_MAX_SLOPE) {
        return Err(Error::Geometry(format!(
            "X ± φ(|X|/R) e_1 is not invertible for R = {r} (needs R > {CUTOFF_MAX_SLOPE})"
        )));
    }
    half.check_radius(0.75 * r)?;
    let ubar = extend_scalar(&pair.u, half, params.s)?;
    let uset = extend_set(&pair.e, half, params.sigma)?;
    cone_defect_fields(&ubar, &uset, r, params.c_ratio)
}
