//! Discrete geometry and the admissible-pair data model.
//!
//! A [`Grid`] tiles the box `[-L, L]^n` (n = 1 or 2) by `m^n` equal closed
//! cells. The minimization domain Ω is the ball `B_{r_Ω}`, realized as the
//! cells whose centers lie strictly inside it. Everything outside the box is
//! described symbolically by an [`ExteriorDatum`].

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::math::{atan2, floor, norm, powf};
use crate::{Error, Result};

/// A point in the base space. For `n = 1` the second coordinate is zero.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSpec {
    pub dimension: usize,
    pub half_width: f64,
    pub cells_per_side: usize,
    pub truncation_radius: f64,
    pub domain_radius: f64,
}

impl GridSpec {
    /// Spec with `R_out = 64 L` and `r_Ω = L`.
    pub fn new(dimension: usize, half_width: f64, cells_per_side: usize) -> Self {
        Self {
            dimension,
            half_width,
            cells_per_side,
            truncation_radius: 64.0 * half_width,
            domain_radius: half_width,
        }
    }

    pub fn with_domain_radius(mut self, r: f64) -> Self {
        self.domain_radius = r;
        self
    }

    pub fn with_truncation_radius(mut self, r: f64) -> Self {
        self.truncation_radius = r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if self.dimension != 1 && self.dimension != 2 {
            return bad(format!("dimension must be 1 or 2, got {}", self.dimension));
        }
        if self.cells_per_side < 2 {
            return bad(format!("cells_per_side must be at least 2, got {}", self.cells_per_side));
        }
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return bad(format!("half_width must be positive, got {}", self.half_width));
        }
        if !(self.truncation_radius >= self.half_width) || !self.truncation_radius.is_finite() {
            return bad(format!(
                "truncation_radius {} must be at least half_width {}",
                self.truncation_radius, self.half_width
            ));
        }
        if !(self.domain_radius > 0.0 && self.domain_radius <= self.half_width) {
            return bad(format!(
                "domain_radius {} must lie in (0, half_width]",
                self.domain_radius
            ));
        }
        Ok(())
    }
}

/// Closed axis-aligned box `[lo, hi]`; only the first `dim` coordinates matter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub lo: Point,
    pub hi: Point,
    pub dim: usize,
}

impl Cell {
    pub fn interval(a: f64, b: f64) -> Self {
        Self { lo: [a, 0.0], hi: [b, 0.0], dim: 1 }
    }

    pub fn rect(lo: Point, hi: Point) -> Self {
        Self { lo, hi, dim: 2 }
    }

    pub fn center(&self) -> Point {
        let mut c = [0.0; 2];
        for d in 0..self.dim {
            c[d] = 0.5 * (self.lo[d] + self.hi[d]);
        }
        c
    }

    pub fn width(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|d| self.width(d)).product()
    }

    pub fn diameter(&self) -> f64 {
        let mut s = 0.0;
        for d in 0..self.dim {
            s += self.width(d) * self.width(d);
        }
        crate::math::sqrt(s)
    }

    /// Euclidean distance between the two boxes (0 if they touch or overlap).
    pub fn distance(&self, other: &Cell) -> f64 {
        let mut s = 0.0;
        for d in 0..self.dim {
            let gap = (other.lo[d] - self.hi[d]).max(self.lo[d] - other.hi[d]).max(0.0);
            s += gap * gap;
        }
        crate::math::sqrt(s)
    }

    /// True if the interiors intersect.
    pub fn overlaps(&self, other: &Cell) -> bool {
        (0..self.dim).all(|d| self.lo[d] < other.hi[d] && other.lo[d] < self.hi[d])
    }

    pub fn scaled(&self, r: f64) -> Cell {
        let mut c = *self;
        for d in 0..self.dim {
            c.lo[d] *= r;
            c.hi[d] *= r;
        }
        c
    }
}

/// Uniform cell decomposition of `[-L, L]^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    h: f64,
    omega: Vec<bool>,
}

impl Grid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dimension
    }

    pub fn cells_per_side(&self) -> usize {
        self.spec.cells_per_side
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    pub fn width(&self) -> f64 {
        self.h
    }

    pub fn cell_volume(&self) -> f64 {
        powf(self.h, self.dim() as f64)
    }

    pub fn len(&self) -> usize {
        self.spec.cells_per_side.pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of cell `k` (second entry 0 in 1D).
    pub fn coords(&self, k: usize) -> (usize, usize) {
        let m = self.spec.cells_per_side;
        if self.dim() == 1 {
            (k, 0)
        } else {
            (k % m, k / m)
        }
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        if self.dim() == 1 {
            i
        } else {
            i + self.spec.cells_per_side * j
        }
    }

    fn axis_center(&self, i: usize) -> f64 {
        -self.spec.half_width + (i as f64 + 0.5) * self.h
    }

    pub fn center(&self, k: usize) -> Point {
        let (i, j) = self.coords(k);
        if self.dim() == 1 {
            [self.axis_center(i), 0.0]
        } else {
            [self.axis_center(i), self.axis_center(j)]
        }
    }

    pub fn cell(&self, k: usize) -> Cell {
        let (i, j) = self.coords(k);
        let (lo0, hi0) = (self.edge(i), self.edge(i + 1));
        if self.dim() == 1 {
            Cell::interval(lo0, hi0)
        } else {
            Cell::rect([lo0, self.edge(j)], [hi0, self.edge(j + 1)])
        }
    }

    // Edge `i` of the 1D partition, exact at both ends of the box.
    fn edge(&self, i: usize) -> f64 {
        let l = self.spec.half_width;
        let m = self.spec.cells_per_side;
        if i == m {
            l
        } else {
            -l + i as f64 * self.h
        }
    }

    /// Cell containing `p`, if `p` lies in the closed box.
    pub fn locate(&self, p: &Point) -> Option<usize> {
        let m = self.spec.cells_per_side;
        let l = self.spec.half_width;
        let axis = |x: f64| -> Option<usize> {
            if !(x >= -l && x <= l) {
                return None;
            }
            let i = floor((x + l) / self.h) as usize;
            Some(i.min(m - 1))
        };
        let i = axis(p[0])?;
        let j = if self.dim() == 2 { axis(p[1])? } else { 0 };
        Some(self.index(i, j))
    }

    /// Cells whose center lies inside Ω.
    pub fn omega(&self) -> &[bool] {
        &self.omega
    }

    pub fn in_omega(&self, k: usize) -> bool {
        self.omega[k]
    }

    pub fn omega_cells(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.omega[k]).collect()
    }

    /// True if the cell shares a face with the box boundary.
    pub fn on_box_boundary(&self, k: usize) -> bool {
        let m = self.spec.cells_per_side;
        let (i, j) = self.coords(k);
        i == 0 || i == m - 1 || (self.dim() == 2 && (j == 0 || j == m - 1))
    }

    /// Cell mask of the ball `B_r` (center test), for sub-domain energies.
    pub fn ball_mask(&self, r: f64) -> Vec<bool> {
        (0..self.len())
            .map(|k| norm(&self.center(k), self.dim()) < r)
            .collect()
    }

    /// The grid stretched by `factor`: lengths multiply, cell count and Ω
    /// cell pattern stay the same.
    pub fn scaled(&self, factor: f64) -> Grid {
        let mut spec = self.spec;
        spec.half_width *= factor;
        spec.truncation_radius *= factor;
        spec.domain_radius *= factor;
        Grid {
            spec,
            h: 2.0 * spec.half_width / spec.cells_per_side as f64,
            omega: self.omega.clone(),
        }
    }
}

/// Builds the uniform tiling for `spec`.
pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    let h = 2.0 * spec.half_width / spec.cells_per_side as f64;
    let mut grid = Grid { spec, h, omega: Vec::new() };
    grid.omega = (0..grid.len())
        .map(|k| norm(&grid.center(k), spec.dimension) < spec.domain_radius)
        .collect();
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FractionalParams {
    pub s: f64,
    pub sigma: f64,
    #[cfg_attr(feature = "serde", serde(default = "default_c_ratio"))]
    pub c_ratio: f64,
}

#[cfg(feature = "serde")]
fn default_c_ratio() -> f64 {
    1.0
}

impl FractionalParams {
    pub fn new(s: f64, sigma: f64) -> Self {
        Self { s, sigma, c_ratio: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Parameter(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::Parameter(format!("sigma must lie in (0,1), got {}", self.sigma)));
        }
        if !(self.c_ratio > 0.0) || !self.c_ratio.is_finite() {
            return Err(Error::Parameter(format!("c_ratio must be positive, got {}", self.c_ratio)));
        }
        Ok(())
    }

    /// Homogeneity degree `s - σ/2` of minimizing cones.
    pub fn cone_degree(&self) -> f64 {
        self.s - 0.5 * self.sigma
    }

    /// Value prefactor `r^{σ/2 - s}` of the blow-up rescaling.
    pub fn rescale_prefactor(&self, r: f64) -> f64 {
        powf(r, 0.5 * self.sigma - self.s)
    }
}

/// Angular sector `[from, to)` of a homogeneous datum, angles in radians on
/// `[0, 2π)`. In one dimension the positive half-line is angle 0 and the
/// negative half-line angle π.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConeSector {
    pub from: f64,
    pub to: f64,
    pub coeff: f64,
    pub in_set: bool,
}

/// Smooth compactly supported perturbation `amplitude · (1 - t²)³`,
/// `t = |x - center| / radius`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Bump {
    pub center: Point,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    fn value(&self, p: &Point, n: usize) -> f64 {
        let d = [p[0] - self.center[0], p[1] - self.center[1]];
        let t = norm(&d, n) / self.radius;
        if t >= 1.0 {
            0.0
        } else {
            let q = 1.0 - t * t;
            self.amplitude * q * q * q
        }
    }

    fn reach(&self, n: usize) -> f64 {
        norm(&self.center, n) + self.radius
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "snake_case"))]
pub enum DatumKind {
    /// `E_0 = {x·normal > offset}`, value `plus` on `E_0` and `-minus` off it.
    Halfspace { normal: Point, offset: f64, plus: f64, minus: f64 },
    /// `E_0` is the ball when `inside_sign = +1`, its complement when `-1`.
    Ball { center: Point, radius: f64, inside_sign: i8, plus: f64, minus: f64 },
    /// `φ ≡ value`, `E_0 = R^n` for `value ≥ 0`, empty otherwise.
    Constant { value: f64 },
    /// `φ(x) = coeff(θ) |x|^degree` sector by sector.
    HomogeneousCone { degree: f64, sectors: Vec<ConeSector> },
    /// Piecewise-constant samples on a uniform grid over `[-half_width, half_width]^n`.
    Tabulated { half_width: f64, cells_per_side: usize, values: Vec<f64>, phase: Vec<i8> },
}

/// Exterior function datum φ paired with the exterior set `E_0`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExteriorDatum {
    pub dimension: usize,
    pub kind: DatumKind,
    #[cfg_attr(feature = "serde", serde(default))]
    pub bumps: Vec<Bump>,
}

fn angle_of(p: &Point, n: usize) -> f64 {
    if n == 1 {
        if p[0] >= 0.0 {
            0.0
        } else {
            PI
        }
    } else {
        let a = atan2(p[1], p[0]);
        if a < 0.0 {
            a + 2.0 * PI
        } else {
            a
        }
    }
}

impl ExteriorDatum {
    pub fn new(dimension: usize, kind: DatumKind) -> Self {
        Self { dimension, kind, bumps: Vec::new() }
    }

    /// The ±1 indicator datum `χ_{E_0} - χ_{E_0^c}` of a half-space.
    pub fn indicator_halfspace(dimension: usize, normal: Point, offset: f64) -> Self {
        Self::new(dimension, DatumKind::Halfspace { normal, offset, plus: 1.0, minus: 1.0 })
    }

    pub fn constant(dimension: usize, value: f64) -> Self {
        Self::new(dimension, DatumKind::Constant { value })
    }

    /// One-dimensional homogeneous datum `a x_+^d - b x_-^d` with `E_0 = (0, ∞)`.
    pub fn cone_1d(degree: f64, right: f64, left: f64) -> Self {
        Self::new(
            1,
            DatumKind::HomogeneousCone {
                degree,
                sectors: alloc::vec![
                    ConeSector { from: 0.0, to: PI, coeff: right, in_set: true },
                    ConeSector { from: PI, to: 2.0 * PI, coeff: -left, in_set: false },
                ],
            },
        )
    }

    pub fn with_bumps(mut self, bumps: Vec<Bump>) -> Self {
        self.bumps = bumps;
        self
    }

    fn sector(&self, sectors: &[ConeSector], p: &Point) -> Option<ConeSector> {
        let a = angle_of(p, self.dimension);
        sectors.iter().copied().find(|s| a >= s.from && a < s.to)
    }

    /// Structural checks on the datum (sign compatibility is checked separately).
    pub fn validate(&self) -> Result<()> {
        let n = self.dimension;
        if n != 1 && n != 2 {
            return Err(Error::Parameter(format!("datum dimension must be 1 or 2, got {n}")));
        }
        match &self.kind {
            DatumKind::Halfspace { normal, plus, minus, .. } => {
                if norm(normal, n) == 0.0 {
                    return Err(Error::Parameter("halfspace normal must be nonzero".into()));
                }
                if *plus < 0.0 || *minus < 0.0 {
                    return Err(Error::Parameter("halfspace amplitudes must be nonnegative".into()));
                }
            }
            DatumKind::Ball { radius, inside_sign, plus, minus, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::Parameter("ball radius must be positive".into()));
                }
                if *inside_sign != 1 && *inside_sign != -1 {
                    return Err(Error::Parameter("ball inside_sign must be +1 or -1".into()));
                }
                if *plus < 0.0 || *minus < 0.0 {
                    return Err(Error::Parameter("ball amplitudes must be nonnegative".into()));
                }
            }
            DatumKind::Constant { value } => {
                if !value.is_finite() {
                    return Err(Error::Parameter("constant datum must be finite".into()));
                }
            }
            DatumKind::HomogeneousCone { degree, sectors } => {
                if !(*degree >= 0.0) || *degree >= 2.0 {
                    return Err(Error::Parameter(format!("cone degree must lie in [0,2), got {degree}")));
                }
                let mut sorted = sectors.clone();
                sorted.sort_by(|a, b| a.from.total_cmp(&b.from));
                let mut at = 0.0;
                for s in &sorted {
                    if (s.from - at).abs() > 1e-12 || !(s.to > s.from) {
                        return Err(Error::Parameter("cone sectors must tile [0, 2π)".into()));
                    }
                    if (s.in_set && s.coeff < 0.0) || (!s.in_set && s.coeff > 0.0) {
                        return Err(Error::Parameter("cone sector sign disagrees with its set flag".into()));
                    }
                    at = s.to;
                }
                if (at - 2.0 * PI).abs() > 1e-12 {
                    return Err(Error::Parameter("cone sectors must tile [0, 2π)".into()));
                }
            }
            DatumKind::Tabulated { half_width, cells_per_side, values, phase } => {
                let len = cells_per_side.pow(n as u32);
                if values.len() != len || phase.len() != len {
                    return Err(Error::Parameter(format!(
                        "tabulated datum needs {len} values and phases"
                    )));
                }
                if !(*half_width > 0.0) {
                    return Err(Error::Parameter("tabulated half_width must be positive".into()));
                }
                if phase.iter().any(|&p| p != 1 && p != -1) {
                    return Err(Error::Parameter("tabulated phase entries must be ±1".into()));
                }
            }
        }
        for b in &self.bumps {
            if !(b.radius > 0.0) {
                return Err(Error::Parameter("bump radius must be positive".into()));
            }
        }
        Ok(())
    }

    fn tab_index(&self, p: &Point) -> Option<usize> {
        let DatumKind::Tabulated { half_width, cells_per_side, .. } = &self.kind else {
            return None;
        };
        let l = *half_width;
        let m = *cells_per_side;
        let h = 2.0 * l / m as f64;
        let axis = |x: f64| -> Option<usize> {
            if !(x >= -l && x <= l) {
                return None;
            }
            Some((floor((x + l) / h) as usize).min(m - 1))
        };
        let i = axis(p[0])?;
        let j = if self.dimension == 2 { axis(p[1])? } else { 0 };
        Some(i + m * j)
    }

    /// Datum value at `p`; fails only for tabulated data outside their coverage.
    pub fn value(&self, p: &Point) -> Result<f64> {
        let n = self.dimension;
        let base = match &self.kind {
            DatumKind::Halfspace { normal, offset, plus, minus } => {
                let t = normal[0] * p[0] + if n == 2 { normal[1] * p[1] } else { 0.0 };
                if t > *offset {
                    *plus
                } else {
                    -*minus
                }
            }
            DatumKind::Ball { center, radius, inside_sign, plus, minus } => {
                if self.ball_member(center, *radius, *inside_sign, p) {
                    *plus
                } else {
                    -*minus
                }
            }
            DatumKind::Constant { value } => *value,
            DatumKind::HomogeneousCone { degree, sectors } => {
                let r = norm(p, n);
                match self.sector(sectors, p) {
                    Some(s) if r > 0.0 || *degree == 0.0 => s.coeff * powf(r, *degree),
                    _ => 0.0,
                }
            }
            DatumKind::Tabulated { values, .. } => {
                let k = self.tab_index(p).ok_or_else(|| {
                    Error::IncompleteDatum(format!("tabulated datum has no sample at {:?}", p))
                })?;
                values[k]
            }
        };
        let bumps: f64 = self.bumps.iter().map(|b| b.value(p, n)).sum();
        Ok(base + bumps)
    }

    fn ball_member(&self, center: &Point, radius: f64, inside_sign: i8, p: &Point) -> bool {
        let d = [p[0] - center[0], p[1] - center[1]];
        let inside = norm(&d, self.dimension) < radius;
        inside == (inside_sign > 0)
    }

    /// Membership of `p` in the exterior set `E_0`.
    pub fn in_set(&self, p: &Point) -> Result<bool> {
        let n = self.dimension;
        Ok(match &self.kind {
            DatumKind::Halfspace { normal, offset, .. } => {
                normal[0] * p[0] + if n == 2 { normal[1] * p[1] } else { 0.0 } > *offset
            }
            DatumKind::Ball { center, radius, inside_sign, .. } => {
                self.ball_member(center, *radius, *inside_sign, p)
            }
            DatumKind::Constant { value } => *value >= 0.0,
            DatumKind::HomogeneousCone { sectors, .. } => {
                self.sector(sectors, p).map(|s| s.in_set).unwrap_or(true)
            }
            DatumKind::Tabulated { phase, .. } => {
                let k = self.tab_index(p).ok_or_else(|| {
                    Error::IncompleteDatum(format!("tabulated datum has no sample at {:?}", p))
                })?;
                phase[k] > 0
            }
        })
    }

    /// Whether values are available at every point (tabulated data are not).
    pub fn has_analytic_tails(&self) -> bool {
        !matches!(self.kind, DatumKind::Tabulated { .. })
    }

    /// Growth exponent of |φ| at infinity.
    pub fn growth_degree(&self) -> f64 {
        match &self.kind {
            DatumKind::HomogeneousCone { degree, .. } => *degree,
            _ => 0.0,
        }
    }

    /// Largest radius at which bumps are nonzero.
    pub fn bump_reach(&self) -> f64 {
        self.bumps.iter().map(|b| b.reach(self.dimension)).fold(0.0, f64::max)
    }

    /// In one dimension: if the datum is constant on the ray `{±x > from}`,
    /// returns `(value, in_set)` there.
    pub fn constant_on_ray(&self, positive: bool, from: f64) -> Option<(f64, bool)> {
        if self.dimension != 1 || self.bump_reach() > from {
            return None;
        }
        let probe = [if positive { from + 1.0 } else { -from - 1.0 }, 0.0];
        let constant = match &self.kind {
            DatumKind::Halfspace { normal, offset, .. } => {
                // the ray stays on one side of the threshold x·ν = offset
                let threshold = offset / normal[0];
                if positive {
                    threshold <= from
                } else {
                    threshold >= -from
                }
            }
            DatumKind::Ball { center, radius, .. } => center[0].abs() + radius <= from,
            DatumKind::Constant { .. } => true,
            DatumKind::HomogeneousCone { degree, .. } => *degree == 0.0,
            DatumKind::Tabulated { .. } => false,
        };
        if !constant {
            return None;
        }
        Some((self.value(&probe).ok()?, self.in_set(&probe).ok()?))
    }

    /// Sign compatibility `φ ≥ 0` on `E_0`, `φ ≤ 0` off it, sampled on a
    /// lattice over `[-extent, extent]^n`. Returns violating sample points.
    pub fn sign_violations(&self, extent: f64, samples_per_side: usize) -> Vec<Point> {
        let n = self.dimension;
        let k = samples_per_side.max(2);
        let step = 2.0 * extent / (k - 1) as f64;
        let mut bad = Vec::new();
        let jmax = if n == 2 { k } else { 1 };
        for j in 0..jmax {
            for i in 0..k {
                let p = [-extent + i as f64 * step, if n == 2 { -extent + j as f64 * step } else { 0.0 }];
                if let (Ok(v), Ok(inside)) = (self.value(&p), self.in_set(&p)) {
                    if (inside && v < 0.0) || (!inside && v > 0.0) {
                        bad.push(p);
                    }
                }
            }
        }
        bad
    }

    /// The datum of the blow-up `φ_r(x) = prefactor · φ(r x)`, `E_{0,r} = E_0 / r`.
    pub fn rescaled(&self, r: f64, prefactor: f64) -> Result<ExteriorDatum> {
        if !(r > 0.0) {
            return Err(Error::InvalidScale(r));
        }
        let kind = match &self.kind {
            DatumKind::Halfspace { normal, offset, plus, minus } => DatumKind::Halfspace {
                normal: *normal,
                offset: offset / r,
                plus: plus * prefactor,
                minus: minus * prefactor,
            },
            DatumKind::Ball { center, radius, inside_sign, plus, minus } => DatumKind::Ball {
                center: [center[0] / r, center[1] / r],
                radius: radius / r,
                inside_sign: *inside_sign,
                plus: plus * prefactor,
                minus: minus * prefactor,
            },
            DatumKind::Constant { value } => DatumKind::Constant { value: value * prefactor },
            DatumKind::HomogeneousCone { degree, sectors } => {
                let f = prefactor * powf(r, *degree);
                DatumKind::HomogeneousCone {
                    degree: *degree,
                    sectors: sectors.iter().map(|s| ConeSector { coeff: s.coeff * f, ..*s }).collect(),
                }
            }
            DatumKind::Tabulated { half_width, cells_per_side, values, phase } => DatumKind::Tabulated {
                half_width: half_width / r,
                cells_per_side: *cells_per_side,
                values: values.iter().map(|v| v * prefactor).collect(),
                phase: phase.clone(),
            },
        };
        Ok(ExteriorDatum {
            dimension: self.dimension,
            kind,
            bumps: self
                .bumps
                .iter()
                .map(|b| Bump {
                    center: [b.center[0] / r, b.center[1] / r],
                    radius: b.radius / r,
                    amplitude: b.amplitude * prefactor,
                })
                .collect(),
        })
    }
}

/// Per-cell values on the box plus the exterior datum.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFunction {
    grid: Arc<Grid>,
    datum: Arc<ExteriorDatum>,
    values: Vec<f64>,
}

impl DiscreteFunction {
    /// Takes Ω values from `values`; cells outside Ω are overwritten with the
    /// datum evaluated at their centers.
    pub fn new(grid: Arc<Grid>, datum: Arc<ExteriorDatum>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "expected {} cell values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if datum.dimension != grid.dim() {
            return Err(Error::Parameter("datum and grid dimensions differ".into()));
        }
        for k in 0..grid.len() {
            if !grid.in_omega(k) {
                values[k] = datum.value(&grid.center(k))?;
            }
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parameter(format!("non-finite value in cell {k}")));
        }
        Ok(Self { grid, datum, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn datum(&self) -> &Arc<ExteriorDatum> {
        &self.datum
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Max of |u| over Ω cells.
    pub fn max_abs_omega(&self) -> f64 {
        (0..self.values.len())
            .filter(|&k| self.grid.in_omega(k))
            .fold(0.0, |m, k| m.max(self.values[k].abs()))
    }

    /// `a · self` with the datum scaled alike.
    pub fn scaled(&self, a: f64) -> Result<Self> {
        let datum = Arc::new(self.datum.rescaled(1.0, a)?);
        Self::new(self.grid.clone(), datum, self.values.iter().map(|v| a * v).collect())
    }
}

/// Per-cell ±1 phase indicator (+1 = in E) plus the exterior set.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet {
    grid: Arc<Grid>,
    datum: Arc<ExteriorDatum>,
    indicator: Vec<i8>,
}

impl PhaseSet {
    /// Ω entries come from `indicator`; cells outside Ω follow `E_0`.
    pub fn new(grid: Arc<Grid>, datum: Arc<ExteriorDatum>, mut indicator: Vec<i8>) -> Result<Self> {
        if indicator.len() != grid.len() {
            return Err(Error::Parameter(format!(
                "expected {} indicator entries, got {}",
                grid.len(),
                indicator.len()
            )));
        }
        if let Some(k) = indicator.iter().position(|&p| p != 1 && p != -1) {
            return Err(Error::Parameter(format!("indicator of cell {k} is not ±1")));
        }
        for k in 0..grid.len() {
            if !grid.in_omega(k) {
                indicator[k] = if datum.in_set(&grid.center(k))? { 1 } else { -1 };
            }
        }
        Ok(Self { grid, datum, indicator })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn datum(&self) -> &Arc<ExteriorDatum> {
        &self.datum
    }

    pub fn indicator(&self) -> &[i8] {
        &self.indicator
    }

    pub fn phase(&self, k: usize) -> i8 {
        self.indicator[k]
    }

    /// `E^c` with the exterior set complemented too.
    pub fn complement(&self) -> Result<PhaseSet> {
        let datum = Arc::new(complement_datum(&self.datum));
        Ok(PhaseSet {
            grid: self.grid.clone(),
            datum,
            indicator: self.indicator.iter().map(|p| -p).collect(),
        })
    }

    pub(crate) fn with_indicator(&self, indicator: Vec<i8>) -> PhaseSet {
        PhaseSet { grid: self.grid.clone(), datum: self.datum.clone(), indicator }
    }
}

/// The datum `(-φ, E_0^c)`.
pub fn complement_datum(d: &ExteriorDatum) -> ExteriorDatum {
    let kind = match &d.kind {
        DatumKind::Halfspace { normal, offset, plus, minus } => DatumKind::Halfspace {
            normal: [-normal[0], -normal[1]],
            offset: -offset,
            plus: *minus,
            minus: *plus,
        },
        DatumKind::Ball { center, radius, inside_sign, plus, minus } => DatumKind::Ball {
            center: *center,
            radius: *radius,
            inside_sign: -inside_sign,
            plus: *minus,
            minus: *plus,
        },
        DatumKind::Constant { value } => DatumKind::Constant { value: -value },
        DatumKind::HomogeneousCone { degree, sectors } => DatumKind::HomogeneousCone {
            degree: *degree,
            sectors: sectors
                .iter()
                .map(|s| ConeSector { coeff: -s.coeff, in_set: !s.in_set, ..*s })
                .collect(),
        },
        DatumKind::Tabulated { half_width, cells_per_side, values, phase } => DatumKind::Tabulated {
            half_width: *half_width,
            cells_per_side: *cells_per_side,
            values: values.iter().map(|v| -v).collect(),
            phase: phase.iter().map(|p| -p).collect(),
        },
    };
    ExteriorDatum {
        dimension: d.dimension,
        kind,
        bumps: d.bumps.iter().map(|b| Bump { amplitude: -b.amplitude, ..*b }).collect(),
    }
}

/// Default sign slack relative to the value scale.
pub const DEFAULT_SIGN_TOLERANCE: f64 = 1e-9;

/// A validated (u, E) pair: `u ≥ -δ` on E ∩ Ω and `u ≤ δ` on E^c ∩ Ω.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissiblePair {
    pub u: DiscreteFunction,
    pub e: PhaseSet,
    pub sign_tolerance: f64,
}

impl AdmissiblePair {
    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }
}

/// Cells of Ω where the sign of `u` contradicts the phase by more than `tol`.
pub fn sign_violations(u: &DiscreteFunction, e: &PhaseSet, tol: f64) -> Vec<usize> {
    let grid = u.grid();
    (0..grid.len())
        .filter(|&k| grid.in_omega(k))
        .filter(|&k| {
            let v = u.values()[k];
            (e.phase(k) > 0 && v < -tol) || (e.phase(k) < 0 && v > tol)
        })
        .collect()
}

pub fn make_pair(u: DiscreteFunction, e: PhaseSet, sign_tolerance: f64) -> Result<AdmissiblePair> {
    if u.grid() != e.grid() {
        return Err(Error::GridMismatch);
    }
    let bad = sign_violations(&u, &e, sign_tolerance);
    if !bad.is_empty() {
        return Err(Error::Admissibility { cells: bad });
    }
    Ok(AdmissiblePair { u, e, sign_tolerance })
}

/// Samples the datum at cell centers: values for `u`, membership for `E`.
pub fn sample_datum(
    datum: &Arc<ExteriorDatum>,
    grid: &Arc<Grid>,
) -> Result<(DiscreteFunction, PhaseSet)> {
    datum.validate()?;
    if datum.dimension != grid.dim() {
        return Err(Error::Parameter("datum and grid dimensions differ".into()));
    }
    let mut values = Vec::with_capacity(grid.len());
    let mut indicator = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let c = grid.center(k);
        values.push(datum.value(&c)?);
        indicator.push(if datum.in_set(&c)? { 1 } else { -1 });
    }
    let u = DiscreteFunction::new(grid.clone(), datum.clone(), values)?;
    let e = PhaseSet::new(grid.clone(), datum.clone(), indicator)?;
    Ok((u, e))
}

/// Blow-up `(u_r, E_r)`: `u_r(x) = r^{σ/2-s} u(r x)`, `E_r = E / r`, on the
/// grid stretched by `1/r` so that every cell maps onto a cell.
pub fn rescale_pair(pair: &AdmissiblePair, r: f64, params: &FractionalParams) -> Result<AdmissiblePair> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidScale(r));
    }
    let pref = params.rescale_prefactor(r);
    let grid = Arc::new(pair.grid().scaled(1.0 / r));
    let datum = Arc::new(pair.u.datum().rescaled(r, pref)?);
    let values: Vec<f64> = pair.u.values().iter().map(|v| v * pref).collect();
    let u = DiscreteFunction { grid: grid.clone(), datum: datum.clone(), values };
    let e = PhaseSet { grid, datum, indicator: pair.e.indicator().to_vec() };
    make_pair(u, e, pair.sign_tolerance * pref)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn grid(n: usize, l: f64, m: usize) -> Arc<Grid> {
        Arc::new(build_grid(GridSpec::new(n, l, m)).unwrap())
    }

    #[test]
    fn one_dimensional_tiling() {
        let g = grid(1, 1.0, 8);
        assert_eq!(g.len(), 8);
        assert_eq!(g.width(), 0.25);
        assert_eq!(g.center(0)[0], -0.875);
        assert_eq!(g.center(7)[0], 0.875);
        let total: f64 = (0..8).map(|k| g.cell(k).volume()).sum();
        assert_eq!(total, 2.0);
        for k in 0..7 {
            assert_eq!(g.cell(k).hi[0], g.cell(k + 1).lo[0]);
        }
    }

    #[test]
    fn two_dimensional_tiling() {
        let g = grid(2, 1.0, 4);
        assert_eq!(g.len(), 16);
        assert!((0..16).all(|k| g.cell(k).width(0) == 0.5 && g.cell(k).width(1) == 0.5));
        assert_eq!(g.locate(&[0.1, -0.6]), Some(g.index(2, 0)));
    }

    #[test]
    fn degenerate_specs_rejected() {
        assert!(matches!(build_grid(GridSpec::new(1, 1.0, 0)), Err(Error::InvalidSpec(_))));
        assert!(matches!(build_grid(GridSpec::new(1, -1.0, 4)), Err(Error::InvalidSpec(_))));
        assert!(matches!(build_grid(GridSpec::new(3, 1.0, 4)), Err(Error::InvalidSpec(_))));
        let s = GridSpec::new(1, 1.0, 4).with_domain_radius(2.0);
        assert!(build_grid(s).is_err());
    }

    #[test]
    fn omega_is_center_inside_ball() {
        let spec = GridSpec::new(2, 1.0, 8).with_domain_radius(0.5);
        let g = build_grid(spec).unwrap();
        for k in 0..g.len() {
            assert_eq!(g.in_omega(k), norm(&g.center(k), 2) < 0.5);
        }
        assert_eq!(g.omega_cells().len(), 12);
    }

    #[test]
    fn halfspace_indicator_sampling() {
        let g = grid(1, 1.0, 4);
        let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
        let (u, e) = sample_datum(&d, &g).unwrap();
        // center 0.75 and 0.25 are in E_0 = {x > 0}
        assert_eq!(u.values(), &[-1.0, -1.0, 1.0, 1.0]);
        assert_eq!(e.indicator(), &[-1, -1, 1, 1]);
        let g8 = grid(1, 1.0, 8);
        let (u, e) = sample_datum(&d, &g8).unwrap();
        let k = g8.locate(&[0.5, 0.0]).unwrap();
        assert_eq!((u.values()[k], e.phase(k)), (1.0, 1));
        assert!(make_pair(u, e, 1e-9).is_ok());
    }

    #[test]
    fn constant_and_ball_sampling() {
        let g = grid(1, 1.0, 10);
        let c = Arc::new(ExteriorDatum::constant(1, 2.0));
        let (u, e) = sample_datum(&c, &g).unwrap();
        assert!(u.values().iter().all(|&v| v == 2.0));
        assert!(e.indicator().iter().all(|&p| p == 1));
        let b = Arc::new(ExteriorDatum::new(
            1,
            DatumKind::Ball { center: [0.0, 0.0], radius: 0.5, inside_sign: 1, plus: 1.0, minus: 1.0 },
        ));
        let (_, e) = sample_datum(&b, &g).unwrap();
        let k = g.locate(&[0.9, 0.0]).unwrap();
        assert_eq!(e.phase(k), -1);
    }

    #[test]
    fn tabulated_coverage_is_enforced() {
        let g = grid(1, 1.0, 4);
        let d = Arc::new(ExteriorDatum::new(
            1,
            DatumKind::Tabulated {
                half_width: 0.5,
                cells_per_side: 2,
                values: vec![-1.0, 1.0],
                phase: vec![-1, 1],
            },
        ));
        assert!(matches!(sample_datum(&d, &g), Err(Error::IncompleteDatum(_))));
        let g = grid(1, 0.5, 4);
        let (u, _) = sample_datum(&d, &g).unwrap();
        assert_eq!(u.values(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn make_pair_checks_signs() {
        let g = grid(1, 1.0, 4);
        let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
        let (_, e) = sample_datum(&d, &g).unwrap();
        let zero = DiscreteFunction::new(g.clone(), Arc::new(ExteriorDatum::constant(1, 0.0)), vec![0.0; 4]).unwrap();
        assert!(make_pair(zero, e.clone(), 1e-9).is_ok());
        let mut vals = vec![-1.0, 1.0, 1.0, 1.0];
        vals[1] = 1.0;
        let u = DiscreteFunction::new(g, d, vals).unwrap();
        match make_pair(u, e, 1e-9) {
            Err(Error::Admissibility { cells }) => assert_eq!(cells, vec![1]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn exterior_values_are_enforced() {
        let spec = GridSpec::new(1, 1.0, 8).with_domain_radius(0.5);
        let g = Arc::new(build_grid(spec).unwrap());
        let d = Arc::new(ExteriorDatum::constant(1, 3.0));
        let u = DiscreteFunction::new(g.clone(), d, vec![0.0; 8]).unwrap();
        for k in 0..8 {
            let expect = if g.in_omega(k) { 0.0 } else { 3.0 };
            assert_eq!(u.values()[k], expect);
        }
    }

    #[test]
    fn rescale_identity_and_prefactor() {
        let g = grid(1, 1.0, 8);
        let p = FractionalParams::new(0.75, 0.5);
        let d = Arc::new(ExteriorDatum::cone_1d(0.5, 1.0, 1.0));
        let (u, e) = sample_datum(&d, &g).unwrap();
        let pair = make_pair(u, e, 1e-9).unwrap();
        let same = rescale_pair(&pair, 1.0, &p).unwrap();
        assert_eq!(same, pair);
        assert!((p.rescale_prefactor(4.0) - 0.5).abs() < 1e-15);
        let quarter = rescale_pair(&pair, 4.0, &p).unwrap();
        assert_eq!(quarter.grid().half_width(), 0.25);
        for k in 0..8 {
            assert_eq!(quarter.u.values()[k], 0.5 * pair.u.values()[k]);
        }
        assert!(rescale_pair(&pair, 0.0, &p).is_err());
        assert!(rescale_pair(&pair, -2.0, &p).is_err());
    }

    #[test]
    fn rescaled_datum_matches_blow_up_formula() {
        let p = FractionalParams::new(0.4, 0.5);
        let d = ExteriorDatum::cone_1d(0.3, 2.0, 1.0).with_bumps(vec![Bump {
            center: [0.4, 0.0],
            radius: 0.3,
            amplitude: 0.2,
        }]);
        let r = 0.5;
        let pref = p.rescale_prefactor(r);
        let dr = d.rescaled(r, pref).unwrap();
        for x in [-3.0, -0.7, 0.2, 0.6, 0.9, 5.0] {
            let lhs = dr.value(&[x, 0.0]).unwrap();
            let rhs = pref * d.value(&[r * x, 0.0]).unwrap();
            assert!((lhs - rhs).abs() < 1e-13, "{x}: {lhs} vs {rhs}");
            assert_eq!(dr.in_set(&[x, 0.0]).unwrap(), d.in_set(&[r * x, 0.0]).unwrap());
        }
    }

    #[test]
    fn cone_sectors_must_tile() {
        let d = ExteriorDatum::new(
            2,
            DatumKind::HomogeneousCone {
                degree: 0.5,
                sectors: vec![ConeSector { from: 0.0, to: 1.0, coeff: 1.0, in_set: true }],
            },
        );
        assert!(d.validate().is_err());
    }

    #[test]
    fn sign_compatibility_sampling() {
        let ok = ExteriorDatum::indicator_halfspace(2, [0.0, 1.0], 0.0);
        assert!(ok.sign_violations(3.0, 21).is_empty());
        let bad = ok.clone().with_bumps(vec![Bump { center: [0.0, 1.0], radius: 0.5, amplitude: -3.0 }]);
        assert!(!bad.sign_violations(3.0, 41).is_empty());
    }

    #[test]
    fn complement_flips_everything() {
        let g = grid(1, 1.0, 6);
        let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.2));
        let (_, e) = sample_datum(&d, &g).unwrap();
        let c = e.complement().unwrap();
        for k in 0..6 {
            assert_eq!(c.phase(k), -e.phase(k));
        }
        for x in [-5.0, 0.1, 0.3, 9.0] {
            let p = [x, 0.0];
            assert_ne!(c.datum().in_set(&p).unwrap(), d.in_set(&p).unwrap());
        }
    }

    #[test]
    fn constant_on_ray_detection() {
        let d = ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0);
        assert_eq!(d.constant_on_ray(true, 1.0), Some((1.0, true)));
        assert_eq!(d.constant_on_ray(false, 1.0), Some((-1.0, false)));
        let far = ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 3.0);
        assert_eq!(far.constant_on_ray(true, 1.0), None);
        assert!(ExteriorDatum::cone_1d(0.5, 1.0, 1.0).constant_on_ray(true, 1.0).is_none());
    }
}
