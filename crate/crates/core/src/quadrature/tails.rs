//! Exterior data bound to a kernel table: sampled rectangle values and the
//! far-field moments beyond the truncation radius.
//!
//! Beyond `R_out` each grid cell carries four moments of its kernel
//! `K_i(y) = ∫_{C_i} |x - y|^{-(n+α)} dx` against the datum:
//! the mass inside and outside `E_0`, `∫ φ K_i` and `∫ φ² K_i`. In one
//! dimension rays on which the datum is constant use closed forms; otherwise
//! the region is integrated in log-radial coordinates `ρ = ρ_0 e^v`, which
//! turns the algebraic decay into exponential decay in `v`.

use alloc::string::ToString;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::pair::{check_alpha, half_line_weight};
use super::table::KernelTable;
use crate::math::{atan2, cos, csum, expm1, exp, ln, log1p, norm, powf, sin, sqrt, CompensatedSum, GaussRule};
use crate::model::{Cell, DatumKind, ExteriorDatum, Point};
use crate::{par, Error, Result};
use core::f64::consts::{FRAC_PI_4, PI};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FarMoments {
    pub mass_in: f64,
    pub mass_out: f64,
    pub first: f64,
    /// `+∞` when `φ²` is not integrable against the kernel.
    pub second: f64,
}

impl FarMoments {
    pub fn mass(&self) -> f64 {
        self.mass_in + self.mass_out
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    y: Point,
    w: f64,
    value: f64,
    in_set: bool,
}

/// Outer region where the log-radial rule starts.
#[derive(Debug, Clone, Copy)]
enum Boundary {
    Square(f64),
    Circle(f64),
}

const V_BREAKS: [f64; 12] = [0.0, 0.02, 0.05, 0.1, 0.2, 0.4, 0.7, 1.1, 1.6, 2.2, 3.0, 4.0];

/// Panels in `v = ln(ρ/ρ_0)` up to the cutoff, including extra breaks.
fn v_panels(decay: f64, tol: f64, extra: &[f64]) -> Vec<f64> {
    let v_max = ln(1.0 / tol) / decay + 2.0;
    let mut edges: Vec<f64> = V_BREAKS.iter().copied().filter(|&v| v < v_max).collect();
    let mut w = 1.0f64;
    let mut v = *edges.last().unwrap_or(&0.0);
    while v < v_max {
        w = (w * 1.5).min(4.0 / decay).max(1.0);
        v = (v + w).min(v_max);
        edges.push(v);
    }
    for &e in extra {
        if e > 0.0 && e < v_max {
            edges.push(e);
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    edges
}

fn decay_rates(datum: &ExteriorDatum, alpha: f64) -> Result<(f64, bool)> {
    let p = datum.growth_degree();
    if alpha - p <= 0.0 {
        return Err(Error::IncompleteDatum(alloc::format!(
            "datum growth {p} is not integrable against the kernel of order {alpha}"
        )));
    }
    let second_ok = alpha - 2.0 * p > 0.0;
    let decay = if second_ok { alpha - 2.0 * p } else { alpha - p };
    Ok((decay, second_ok))
}

/// Radii along the unit direction `e` where the datum jumps.
fn radial_breaks(datum: &ExteriorDatum, e: Point, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let dot = |a: &Point, b: &Point| a[0] * b[0] + if n == 2 { a[1] * b[1] } else { 0.0 };
    let circle = |c: &Point, r: f64, out: &mut Vec<f64>| {
        let ce = dot(c, &e);
        let disc = ce * ce - (dot(c, c) - r * r);
        if disc > 0.0 {
            let sq = sqrt(disc);
            out.extend([ce - sq, ce + sq].into_iter().filter(|&x| x > 0.0));
        }
    };
    match &datum.kind {
        DatumKind::Halfspace { normal, offset, .. } => {
            let ne = dot(normal, &e);
            if ne != 0.0 && offset / ne > 0.0 {
                out.push(offset / ne);
            }
        }
        DatumKind::Ball { center, radius, .. } => circle(center, *radius, &mut out),
        _ => {}
    }
    for b in &datum.bumps {
        circle(&b.center, b.radius, &mut out);
    }
    out
}

/// Directions where the datum jumps along whole rays.
fn angular_breaks(datum: &ExteriorDatum) -> Vec<f64> {
    let wrap = |a: f64| if a < 0.0 { a + 2.0 * PI } else if a >= 2.0 * PI { a - 2.0 * PI } else { a };
    match &datum.kind {
        DatumKind::Halfspace { normal, .. } => {
            let a = atan2(normal[1], normal[0]);
            alloc::vec![wrap(a + 0.5 * PI), wrap(a - 0.5 * PI)]
        }
        DatumKind::HomogeneousCone { sectors, .. } => sectors.iter().map(|s| wrap(s.from)).collect(),
        _ => Vec::new(),
    }
}

#[allow(clippy::too_many_arguments)]
fn ray_nodes(
    datum: &ExteriorDatum,
    e: Point,
    rho0: f64,
    angle_weight: f64,
    panels: &[f64],
    rule: &GaussRule,
    n: usize,
    out: &mut Vec<Node>,
) -> Result<()> {
    let mut extra: Vec<f64> = radial_breaks(datum, e, n)
        .into_iter()
        .filter(|&r| r > rho0)
        .map(|r| ln(r / rho0))
        .collect();
    let mut edges = panels.to_vec();
    edges.append(&mut extra);
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let last = *panels.last().unwrap_or(&0.0);
    for w in edges.windows(2) {
        if w[1] > last + 1e-12 {
            break;
        }
        for (v, wv) in rule.mapped(w[0], w[1]) {
            let rho = rho0 * exp(v);
            let y = [rho * e[0], rho * e[1]];
            // dy = ρ^{n-1} dρ dθ and dρ = ρ dv
            let jac = if n == 1 { rho } else { rho * rho };
            out.push(Node {
                y,
                w: angle_weight * wv * jac,
                value: datum.value(&y)?,
                in_set: datum.in_set(&y)?,
            });
        }
    }
    Ok(())
}

fn far_nodes(datum: &ExteriorDatum, boundary: Boundary, decay: f64, tol: f64, n: usize, rays: &[bool; 2]) -> Result<Vec<Node>> {
    let panels = v_panels(decay, tol, &[]);
    let rule = GaussRule::new(8);
    let mut out = Vec::new();
    let r = match boundary {
        Boundary::Square(r) | Boundary::Circle(r) => r,
    };
    if n == 1 {
        for (k, sign) in [1.0, -1.0].into_iter().enumerate() {
            if rays[k] {
                ray_nodes(datum, [sign, 0.0], r, 1.0, &panels, &rule, 1, &mut out)?;
            }
        }
        return Ok(out);
    }
    let mut angles: Vec<f64> = (0..=8).map(|k| k as f64 * FRAC_PI_4).collect();
    angles.extend(angular_breaks(datum));
    angles.sort_by(f64::total_cmp);
    angles.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    let arule = GaussRule::new(16);
    let max_width = PI / 16.0;
    for w in angles.windows(2) {
        let pieces = crate::math::ceil((w[1] - w[0]) / max_width).max(1.0) as usize;
        let step = (w[1] - w[0]) / pieces as f64;
        for p in 0..pieces {
            let lo = w[0] + p as f64 * step;
            for (theta, wt) in arule.mapped(lo, lo + step) {
                let e = [cos(theta), sin(theta)];
                let rho0 = match boundary {
                    Boundary::Square(r) => r / e[0].abs().max(e[1].abs()),
                    Boundary::Circle(r) => r,
                };
                ray_nodes(datum, e, rho0, wt, &panels, &rule, 2, &mut out)?;
            }
        }
    }
    Ok(out)
}

/// Cell kernel `∫_{C} |x - y|^{-(n+α)} dx` at a point `y` outside the cell.
fn cell_kernel(cell: &Cell, y: &Point, alpha: f64, rule: &GaussRule) -> f64 {
    if cell.dim == 1 {
        let (a, b) = (cell.lo[0], cell.hi[0]);
        let x = y[0];
        let (near, far) = if x >= b { (x - b, x - a) } else { (a - x, b - x) };
        // (near^{-α} - far^{-α}) / α without cancellation
        powf(near, -alpha) * -expm1(alpha * log1p(-(b - a) / far)) / alpha
    } else {
        let e = -1.0 - 0.5 * alpha;
        rule.integrate(cell.lo[0], cell.hi[0], |x0| {
            rule.integrate(cell.lo[1], cell.hi[1], |x1| {
                powf((x0 - y[0]) * (x0 - y[0]) + (x1 - y[1]) * (x1 - y[1]), e)
            })
        })
    }
}

fn moments_from_nodes(cell: &Cell, nodes: &[Node], alpha: f64, second_ok: bool, rule: &GaussRule) -> FarMoments {
    let mut mass_in = CompensatedSum::new();
    let mut mass_out = CompensatedSum::new();
    let mut first = CompensatedSum::new();
    let mut second = CompensatedSum::new();
    for node in nodes {
        let k = node.w * cell_kernel(cell, &node.y, alpha, rule);
        if node.in_set {
            mass_in.add(k);
        } else {
            mass_out.add(k);
        }
        first.add(node.value * k);
        second.add(node.value * node.value * k);
    }
    FarMoments {
        mass_in: mass_in.value(),
        mass_out: mass_out.value(),
        first: first.value(),
        second: if second_ok { second.value() } else { f64::INFINITY },
    }
}

fn half_line_moments(cell: &Cell, r: f64, positive: bool, value: f64, inside: bool, alpha: f64) -> FarMoments {
    let (a, b) = if positive { (cell.lo[0], cell.hi[0]) } else { (-cell.hi[0], -cell.lo[0]) };
    let m = half_line_weight(a, b, r, alpha);
    FarMoments {
        mass_in: if inside { m } else { 0.0 },
        mass_out: if inside { 0.0 } else { m },
        first: value * m,
        second: value * value * m,
    }
}

fn add(a: FarMoments, b: FarMoments) -> FarMoments {
    FarMoments {
        mass_in: a.mass_in + b.mass_in,
        mass_out: a.mass_out + b.mass_out,
        first: a.first + b.first,
        second: a.second + b.second,
    }
}

/// Exterior datum bound to a kernel table.
#[derive(Debug, Clone, PartialEq)]
pub struct TailData {
    datum: Arc<ExteriorDatum>,
    rect_values: Vec<f64>,
    rect_in_set: Vec<bool>,
    far: Vec<FarMoments>,
}

impl TailData {
    pub fn new(table: &KernelTable, datum: &Arc<ExteriorDatum>) -> Result<Self> {
        let grid = table.grid();
        let n = grid.dim();
        if datum.dimension != n {
            return Err(Error::Parameter("datum and grid dimensions differ".into()));
        }
        datum.validate()?;
        let mut rect_values = Vec::with_capacity(table.rects().len());
        let mut rect_in_set = Vec::with_capacity(table.rects().len());
        for r in table.rects() {
            let c = r.center();
            rect_values.push(datum.value(&c)?);
            rect_in_set.push(datum.in_set(&c)?);
        }
        if !datum.has_analytic_tails() {
            return Err(Error::IncompleteDatum(
                "tabulated data cannot supply tails beyond the truncation radius".to_string(),
            ));
        }
        let r_out = grid.spec().truncation_radius;
        let alpha = table.alpha();
        let (decay, second_ok) = decay_rates(datum, alpha)?;
        let tol = table.tol();
        let rule = GaussRule::new(if r_out - grid.half_width() > 8.0 * grid.width() { 2 } else { 6 });
        let far: Vec<FarMoments> = if n == 1 {
            let constant = [datum.constant_on_ray(true, r_out), datum.constant_on_ray(false, r_out)];
            let nodes = far_nodes(datum, Boundary::Square(r_out), decay, tol, 1, &[constant[0].is_none(), constant[1].is_none()])?;
            par::map_range(grid.len(), |i| {
                let cell = grid.cell(i);
                let mut m = moments_from_nodes(&cell, &nodes, alpha, second_ok, &rule);
                for (k, positive) in [true, false].into_iter().enumerate() {
                    if let Some((v, inside)) = constant[k] {
                        m = add(m, half_line_moments(&cell, r_out, positive, v, inside, alpha));
                    }
                }
                m
            })
        } else {
            let nodes = far_nodes(datum, Boundary::Square(r_out), decay, tol, 2, &[true, true])?;
            par::map_range(grid.len(), |i| moments_from_nodes(&grid.cell(i), &nodes, alpha, second_ok, &rule))
        };
        Ok(Self { datum: datum.clone(), rect_values, rect_in_set, far })
    }

    pub fn datum(&self) -> &Arc<ExteriorDatum> {
        &self.datum
    }

    pub fn rect_values(&self) -> &[f64] {
        &self.rect_values
    }

    pub fn rect_in_set(&self) -> &[bool] {
        &self.rect_in_set
    }

    pub fn far(&self, i: usize) -> &FarMoments {
        &self.far[i]
    }

    pub fn far_moments(&self) -> &[FarMoments] {
        &self.far
    }
}

/// Symbolic exterior region for [`tail_weight`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ExteriorRegion {
    Empty,
    /// `(start, ∞)` if `positive`, else `(-∞, start)`; one dimension only.
    HalfLine { start: f64, positive: bool },
    /// Complement of `[-R, R]^n`.
    BoxComplement { half_width: f64 },
    /// Complement of the ball `B_R` about the origin.
    BallComplement { radius: f64 },
    /// `{y · normal > offset}`.
    Halfspace { normal: Point, offset: f64 },
}

fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// `∫_{C} ∫_{region} |x - y|^{-(n+α)} dy dx`.
pub fn tail_weight(cell: &Cell, region: &ExteriorRegion, alpha: f64, tol: f64) -> Result<f64> {
    check_alpha(alpha)?;
    super::pair::check_tol(tol)?;
    let n = cell.dim;
    let touching = || Error::Geometry("region touches the cell; the interaction diverges for α ≥ 1".into());
    let overlap = || Error::Geometry("region overlaps the cell".into());
    match *region {
        ExteriorRegion::Empty => Ok(0.0),
        ExteriorRegion::HalfLine { start, positive } => {
            if n != 1 {
                return Err(Error::Geometry("half-lines are one-dimensional regions".into()));
            }
            let (a, b, c) = if positive {
                (cell.lo[0], cell.hi[0], start)
            } else {
                (-cell.hi[0], -cell.lo[0], -start)
            };
            if b > c {
                return Err(overlap());
            }
            if b == c && alpha >= 1.0 {
                return Err(touching());
            }
            Ok(half_line_weight(a, b, c, alpha))
        }
        ExteriorRegion::BoxComplement { half_width: r } | ExteriorRegion::BallComplement { radius: r } => {
            let inside = (0..n).all(|d| cell.lo[d] >= -r && cell.hi[d] <= r);
            let ball = matches!(region, ExteriorRegion::BallComplement { .. });
            let reach = if ball {
                let far = [cell.lo[0].abs().max(cell.hi[0].abs()), cell.lo[1].abs().max(cell.hi[1].abs())];
                norm(&far, n)
            } else {
                0.0
            };
            if !inside || reach > r {
                return Err(overlap());
            }
            if n == 1 {
                let right = tail_weight(cell, &ExteriorRegion::HalfLine { start: r, positive: true }, alpha, tol)?;
                let left = tail_weight(cell, &ExteriorRegion::HalfLine { start: -r, positive: false }, alpha, tol)?;
                return Ok(right + left);
            }
            let gap = if ball { r - reach } else { (0..2).map(|d| (r - cell.hi[d]).min(cell.lo[d] + r)).fold(f64::INFINITY, f64::min) };
            if gap == 0.0 && alpha >= 1.0 {
                return Err(touching());
            }
            let datum = ExteriorDatum::constant(2, 1.0);
            let boundary = if ball { Boundary::Circle(r) } else { Boundary::Square(r) };
            let nodes = far_nodes(&datum, boundary, alpha, tol, 2, &[true, true])?;
            let order = if gap > 8.0 * cell.diameter() { 3 } else { 10 };
            let rule = GaussRule::new(order);
            Ok(csum(nodes.iter().map(|nd| nd.w * cell_kernel(cell, &nd.y, alpha, &rule))))
        }
        ExteriorRegion::Halfspace { normal, offset } => {
            let len = norm(&normal, n);
            if len == 0.0 {
                return Err(Error::Parameter("halfspace normal must be nonzero".into()));
            }
            let nu = [normal[0] / len, if n == 2 { normal[1] / len } else { 0.0 }];
            let o = offset / len;
            let corners: [Point; 4] = [cell.lo, [cell.hi[0], cell.lo[1]], [cell.lo[0], cell.hi[1]], cell.hi];
            let top = corners[..if n == 1 { 2 } else { 4 }]
                .iter()
                .map(|c| nu[0] * c[0] + nu[1] * c[1])
                .fold(f64::NEG_INFINITY, f64::max);
            if top > o {
                return Err(overlap());
            }
            if top == o && alpha >= 1.0 {
                return Err(touching());
            }
            // the transverse integral of |x-y|^{-2-α} is c_α |x_ν - y_ν|^{-1-α}
            let c_alpha = if n == 1 {
                1.0
            } else {
                sqrt(PI) * gamma(0.5 * (1.0 + alpha)) / gamma(1.0 + 0.5 * alpha)
            };
            if n == 1 {
                let (a, b, c) = if nu[0] > 0.0 { (cell.lo[0], cell.hi[0], o) } else { (-cell.hi[0], -cell.lo[0], o) };
                return Ok(half_line_weight(a, b, c, alpha));
            }
            for d in 0..2 {
                if nu[1 - d] == 0.0 {
                    let s = nu[d];
                    let (a, b) = if s > 0.0 { (cell.lo[d], cell.hi[d]) } else { (-cell.hi[d], -cell.lo[d]) };
                    return Ok(c_alpha * cell.width(1 - d) * half_line_weight(a, b, o, alpha));
                }
            }
            let rule = GaussRule::new(16);
            let v = rule.integrate(cell.lo[0], cell.hi[0], |x0| {
                rule.integrate(cell.lo[1], cell.hi[1], |x1| powf(o - nu[0] * x0 - nu[1] * x1, -alpha) / alpha)
            });
            Ok(c_alpha * v)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_region_gives_zero() {
        let c = Cell::interval(0.0, 1.0);
        assert_eq!(tail_weight(&c, &ExteriorRegion::Empty, 0.5, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn half_line_golden_and_overlap() {
        let c = Cell::interval(0.0, 1.0);
        let t = tail_weight(&c, &ExteriorRegion::HalfLine { start: 2.0, positive: true }, 0.5, 1e-10).unwrap();
        assert!((t - (4.0 * sqrt(2.0) - 4.0)).abs() < 1e-13);
        let mirrored = tail_weight(&Cell::interval(-1.0, 0.0), &ExteriorRegion::HalfLine { start: -2.0, positive: false }, 0.5, 1e-10).unwrap();
        assert!((t - mirrored).abs() < 1e-15);
        assert!(tail_weight(&c, &ExteriorRegion::HalfLine { start: 0.5, positive: true }, 0.5, 1e-10).is_err());
    }

    #[test]
    fn log_radial_rule_matches_closed_form_in_1d() {
        // a cone of degree 0 has constant rays but goes through the generic path
        let d = ExteriorDatum::cone_1d(0.0, 1.0, 1.0);
        let (decay, ok) = decay_rates(&d, 0.5).unwrap();
        assert!(ok);
        let nodes = far_nodes(&d, Boundary::Square(4.0), decay, 1e-12, 1, &[true, true]).unwrap();
        let cell = Cell::interval(0.25, 0.5);
        let m = moments_from_nodes(&cell, &nodes, 0.5, true, &GaussRule::new(2));
        let exact = half_line_weight(0.25, 0.5, 4.0, 0.5) + half_line_weight(-0.5, -0.25, 4.0, 0.5);
        assert!((m.mass() - exact).abs() < 1e-9 * exact, "{} {}", m.mass(), exact);
        assert!((m.mass_in - half_line_weight(0.25, 0.5, 4.0, 0.5)).abs() < 1e-9 * exact);
    }

    #[test]
    fn box_complement_2d_vs_halfspaces() {
        // a small cell deep inside: the complement of a huge box is tiny but positive,
        // and the halfspace closed form dominates one side of it
        let cell = Cell::rect([0.0, 0.0], [0.1, 0.1]);
        let alpha = 0.6;
        let boxc = tail_weight(&cell, &ExteriorRegion::BoxComplement { half_width: 1.0 }, alpha, 1e-10).unwrap();
        let right = tail_weight(&cell, &ExteriorRegion::Halfspace { normal: [1.0, 0.0], offset: 1.0 }, alpha, 1e-10).unwrap();
        assert!(boxc > right && boxc < 4.0 * right);
        let ball = tail_weight(&cell, &ExteriorRegion::BallComplement { radius: 1.0 }, alpha, 1e-10).unwrap();
        assert!(ball > boxc);
    }

    #[test]
    fn ball_complement_exact_for_centered_disk_kernel() {
        // ∫_{|y|>R} |y|^{-2-α} dy = 2π R^{-α}/α; a tiny cell at the origin sees this times its area
        let h = 1e-3;
        let cell = Cell::rect([-h / 2.0, -h / 2.0], [h / 2.0, h / 2.0]);
        let alpha = 0.8;
        let v = tail_weight(&cell, &ExteriorRegion::BallComplement { radius: 1.0 }, alpha, 1e-12).unwrap();
        let exact = h * h * 2.0 * PI / alpha;
        assert!((v - exact).abs() < 1e-6 * exact, "{v} {exact}");
    }

    #[test]
    fn oblique_halfspace_matches_axis_limit() {
        let cell = Cell::rect([0.0, 0.0], [0.5, 0.5]);
        let axis = tail_weight(&cell, &ExteriorRegion::Halfspace { normal: [1.0, 0.0], offset: 2.0 }, 0.7, 1e-10).unwrap();
        let tilt = tail_weight(&cell, &ExteriorRegion::Halfspace { normal: [1.0, 1e-9], offset: 2.0 }, 0.7, 1e-10).unwrap();
        assert!((axis - tilt).abs() < 1e-7 * axis);
    }
}
