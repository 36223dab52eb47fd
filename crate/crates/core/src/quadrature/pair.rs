//! Cell-pair weights `∬_{C_i × C_j} |x - y|^{-(n+α)} dx dy`.
//!
//! One dimension uses the closed-form double antiderivative. In two
//! dimensions the integral is rewritten over the difference variable
//! `t = y - x`: the overlap length of the two cells translated by `t`
//! factorizes into a product of trapezoids `ℓ_1(t_1) ℓ_2(t_2)`, each piecewise
//! linear. On every linear patch near the origin the radial integral is done
//! in closed form and the angular one by Gauss–Legendre, which removes the
//! singularity at `t = 0` for touching cells. Patches far from the origin are
//! integrated by tensor Gauss rules.
//!
//! For `α ≥ 1` the integral over face-touching cells diverges. Those pairs get
//! the weight that reproduces the kernel's second moment,
//! `h^{-2} ∬ (t·ν)^2 |t|^{-(n+α)}`, with ν the face normal, which is what
//! keeps the discrete fractional Laplacian consistent.

use alloc::format;

use crate::math::{atan2, ceil, cos, expm1, ln, powf, sin, sqrt, GaussRule};
use crate::model::Cell;
use crate::{Error, Result};
use core::f64::consts::PI;

/// How a weight was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PairMethod {
    SameCell,
    ClosedForm,
    MomentMatched,
    Polar,
    Gauss,
    Midpoint,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::Parameter(format!("kernel exponent α must lie in (0,2), got {alpha}")));
    }
    Ok(())
}

pub(crate) fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Parameter(format!("quadrature tolerance must lie in (0,1), got {tol}")));
    }
    Ok(())
}

/// Second antiderivative of `t^{-1-γ}` in the sign convention of [`pattern`];
/// `Ψ(0) = 0` whenever `γ < 1`.
fn psi(t: f64, gamma: f64) -> f64 {
    // Shifted by a constant, which the differences taken by callers cancel.
    let eps = 1.0 - gamma;
    if t == 0.0 {
        return if eps > 0.0 { -1.0 / (gamma * eps) } else { 0.0 };
    }
    if eps == 0.0 {
        ln(t) / gamma
    } else {
        expm1(eps * ln(t)) / (gamma * eps)
    }
}

fn pattern(a: f64, b: f64, c: f64, d: f64, gamma: f64) -> f64 {
    psi(c - a, gamma) - psi(c - b, gamma) - psi(d - a, gamma) + psi(d - b, gamma)
}

/// `∬_{[a,b]×[c,d]} |x-y|^{-1-α}` for intervals with disjoint interiors.
pub fn interval_weight(a: f64, b: f64, c: f64, d: f64, alpha: f64) -> (f64, PairMethod) {
    let (a, b, c, d) = if b <= c { (a, b, c, d) } else { (c, d, a, b) };
    let gap = c - b;
    let w = (b - a).max(d - c);
    if gap >= 4.0 * w {
        let rule = GaussRule::new(8);
        let v = rule.integrate(a, b, |x| rule.integrate(c, d, |y| powf(y - x, -1.0 - alpha)));
        (v, PairMethod::Gauss)
    } else if gap > 0.0 || alpha < 1.0 {
        (pattern(a, b, c, d, alpha), PairMethod::ClosedForm)
    } else {
        let h = 0.5 * ((b - a) + (d - c));
        (pattern(a, b, c, d, alpha - 2.0) / (h * h), PairMethod::MomentMatched)
    }
}

/// `∫_a^b ∫_c^∞ (y-x)^{-1-α} dy dx` for `b ≤ c`.
pub fn half_line_weight(a: f64, b: f64, c: f64, alpha: f64) -> f64 {
    let gap = c - b;
    if gap >= 4.0 * (b - a) {
        GaussRule::new(8).integrate(a, b, |x| powf(c - x, -alpha) / alpha)
    } else if alpha == 1.0 {
        ln((c - a) / gap)
    } else {
        psi(c - a, alpha) - psi(gap, alpha)
    }
}

/// Overlap length of `[a,b]` with `[c,d] - τ`.
#[derive(Debug, Clone, Copy)]
struct Tent {
    a: f64,
    b: f64,
    c: f64,
    d: f64,
}

struct Piece {
    lo: f64,
    hi: f64,
    c0: f64,
    c1: f64,
}

impl Tent {
    fn axis(ci: &Cell, cj: &Cell, k: usize) -> Self {
        Tent { a: ci.lo[k], b: ci.hi[k], c: cj.lo[k], d: cj.hi[k] }
    }

    /// Linear pieces with `ℓ(t) = c0 + c1 t` on `[lo, hi]`.
    fn pieces(&self) -> [Piece; 3] {
        let p0 = self.c - self.b;
        let p1 = (self.c - self.a).min(self.d - self.b);
        let p2 = (self.c - self.a).max(self.d - self.b);
        let p3 = self.d - self.a;
        let height = (self.b - self.a).min(self.d - self.c);
        [
            Piece { lo: p0, hi: p1, c0: -p0, c1: 1.0 },
            Piece { lo: p1, hi: p2, c0: height, c1: 0.0 },
            Piece { lo: p2, hi: p3, c0: p3, c1: -1.0 },
        ]
    }
}

/// `Σ c[i][j] t1^i t2^j`.
type Poly = [[f64; 4]; 4];

fn r_integral(r0: f64, r1: f64, beta: f64) -> f64 {
    if r0 == 0.0 {
        if beta > 0.0 {
            powf(r1, beta) / beta
        } else {
            f64::INFINITY
        }
    } else if beta == 0.0 {
        ln(r1 / r0)
    } else {
        powf(r0, beta) * expm1(beta * ln(r1 / r0)) / beta
    }
}

/// Entry and exit distance of the ray `ρ (cx, cy)` through the rectangle.
fn ray_span(x0: f64, x1: f64, y0: f64, y1: f64, cx: f64, cy: f64) -> Option<(f64, f64)> {
    let mut enter = 0.0f64;
    let mut exit = f64::INFINITY;
    for (lo, hi, c) in [(x0, x1, cx), (y0, y1, cy)] {
        if c.abs() < 1e-300 {
            if lo > 0.0 || hi < 0.0 {
                return None;
            }
        } else {
            let (t0, t1) = if c > 0.0 { (lo / c, hi / c) } else { (hi / c, lo / c) };
            enter = enter.max(t0);
            exit = exit.min(t1);
        }
    }
    (exit > enter).then_some((enter, exit))
}

/// `∫_S P(t) |t|^{-2-α} dt` over `S = [x0,x1]×[y0,y1]`, the origin outside
/// the open rectangle: closed-form radial integrals, Gauss in the angle with
/// breaks at the corner directions.
fn polar_moment(s: [f64; 4], poly: &Poly, alpha: f64, rule: &GaussRule) -> f64 {
    let [x0, x1, y0, y1] = s;
    let reference = atan2(0.5 * (y0 + y1), 0.5 * (x0 + x1));
    let mut angles = [0.0f64; 4];
    let mut count = 0;
    for (x, y) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        if x == 0.0 && y == 0.0 {
            continue;
        }
        let mut a = atan2(y, x);
        if a < reference - PI {
            a += 2.0 * PI;
        } else if a > reference + PI {
            a -= 2.0 * PI;
        }
        angles[count] = a;
        count += 1;
    }
    let angles = &mut angles[..count];
    angles.sort_by(f64::total_cmp);
    let max_width = PI / 12.0;
    let mut total = 0.0;
    for w in angles.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        if tb - ta < 1e-14 {
            continue;
        }
        let pieces = ceil((tb - ta) / max_width).max(1.0) as usize;
        let step = (tb - ta) / pieces as f64;
        for p in 0..pieces {
            let lo = ta + p as f64 * step;
            total += rule.integrate(lo, lo + step, |theta| {
                let (c, s) = (cos(theta), sin(theta));
                let Some((r0, r1)) = ray_span(x0, x1, y0, y1, c, s) else {
                    return 0.0;
                };
                let mut acc = 0.0;
                let mut cp = 1.0;
                for (i, row) in poly.iter().enumerate() {
                    let mut sp = 1.0;
                    for (j, &coef) in row.iter().enumerate() {
                        if coef != 0.0 {
                            acc += coef * cp * sp * r_integral(r0, r1, (i + j) as f64 - alpha);
                        }
                        sp *= s;
                    }
                    cp *= c;
                }
                acc
            });
        }
    }
    total
}

/// `∬ ℓ_1 ℓ_2 [(t_d)^2 / h^2] |t|^{-2-α} dt` over the support of the tents.
fn tent_integral(tents: [Tent; 2], alpha: f64, moment: Option<(usize, f64)>) -> f64 {
    let polar_rule = GaussRule::new(16);
    let mut total = 0.0;
    for p in tents[0].pieces() {
        if !(p.hi > p.lo) {
            continue;
        }
        for q in tents[1].pieces() {
            if !(q.hi > q.lo) {
                continue;
            }
            let dx = if p.lo > 0.0 { p.lo } else if p.hi < 0.0 { -p.hi } else { 0.0 };
            let dy = if q.lo > 0.0 { q.lo } else if q.hi < 0.0 { -q.hi } else { 0.0 };
            let dist = sqrt(dx * dx + dy * dy);
            let diag = sqrt((p.hi - p.lo) * (p.hi - p.lo) + (q.hi - q.lo) * (q.hi - q.lo));
            if dist > 2.0 * diag {
                let order = if dist > 20.0 * diag {
                    4
                } else if dist > 6.0 * diag {
                    5
                } else {
                    8
                };
                let rule = GaussRule::new(order);
                total += rule.integrate(p.lo, p.hi, |t1| {
                    let l1 = p.c0 + p.c1 * t1;
                    rule.integrate(q.lo, q.hi, |t2| {
                        let mut v = l1 * (q.c0 + q.c1 * t2) * powf(t1 * t1 + t2 * t2, -1.0 - 0.5 * alpha);
                        if let Some((d, h)) = moment {
                            let td = if d == 0 { t1 } else { t2 };
                            v *= td * td / (h * h);
                        }
                        v
                    })
                });
            } else {
                let mut poly: Poly = [[0.0; 4]; 4];
                poly[0][0] = p.c0 * q.c0;
                poly[1][0] = p.c1 * q.c0;
                poly[0][1] = p.c0 * q.c1;
                poly[1][1] = p.c1 * q.c1;
                if let Some((d, h)) = moment {
                    let mut shifted: Poly = [[0.0; 4]; 4];
                    for i in 0..2 {
                        for j in 0..2 {
                            let (si, sj) = if d == 0 { (i + 2, j) } else { (i, j + 2) };
                            shifted[si][sj] = poly[i][j] / (h * h);
                        }
                    }
                    poly = shifted;
                }
                total += polar_moment([p.lo, p.hi, q.lo, q.hi], &poly, alpha, &polar_rule);
            }
        }
    }
    total
}

fn face_normal(ci: &Cell, cj: &Cell) -> Option<usize> {
    (0..2).find(|&d| {
        let o = 1 - d;
        let touch = ci.hi[d] == cj.lo[d] || cj.hi[d] == ci.lo[d];
        let overlap = ci.hi[o].min(cj.hi[o]) - ci.lo[o].max(cj.lo[o]);
        touch && overlap > 0.0
    })
}

/// Rectangle pair weight; cells must have disjoint interiors.
pub fn rect_weight(ci: &Cell, cj: &Cell, alpha: f64, tol: f64) -> (f64, PairMethod) {
    let gap = ci.distance(cj);
    let a = ci.center();
    let b = cj.center();
    let dc2 = (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]);
    let di = ci.diameter();
    let dj = cj.diameter();
    if gap > 0.0 && di * di + dj * dj < tol * dc2 {
        let v = ci.volume() * cj.volume() * powf(dc2, -1.0 - 0.5 * alpha);
        return (v, PairMethod::Midpoint);
    }
    let tents = [Tent::axis(ci, cj, 0), Tent::axis(ci, cj, 1)];
    if gap == 0.0 && alpha >= 1.0 {
        if let Some(d) = face_normal(ci, cj) {
            let h = sqrt(ci.width(d) * cj.width(d));
            return (tent_integral(tents, alpha, Some((d, h))), PairMethod::MomentMatched);
        }
    }
    let method = if gap > 2.0 * di.max(dj) { PairMethod::Gauss } else { PairMethod::Polar };
    (tent_integral(tents, alpha, None), method)
}

/// Weight of a pair of cells together with the method used.
pub fn cell_pair_weight_with_method(ci: &Cell, cj: &Cell, alpha: f64, tol: f64) -> Result<(f64, PairMethod)> {
    check_alpha(alpha)?;
    check_tol(tol)?;
    if ci.dim != cj.dim || !(1..=2).contains(&ci.dim) {
        return Err(Error::Geometry("cells of different or unsupported dimension".into()));
    }
    if (0..ci.dim).any(|d| !(ci.hi[d] > ci.lo[d]) || !(cj.hi[d] > cj.lo[d])) {
        return Err(Error::Geometry("degenerate cell".into()));
    }
    if ci == cj {
        return Ok((0.0, PairMethod::SameCell));
    }
    if ci.overlaps(cj) {
        return Err(Error::Geometry(format!("cells {:?} and {:?} overlap", ci, cj)));
    }
    // canonical order makes the result exactly symmetric
    let key = |c: &Cell| (c.lo[0], c.lo[1], c.hi[0], c.hi[1]);
    let (ci, cj) = if key(cj).partial_cmp(&key(ci)) == Some(core::cmp::Ordering::Less) {
        (cj, ci)
    } else {
        (ci, cj)
    };
    Ok(if ci.dim == 1 {
        interval_weight(ci.lo[0], ci.hi[0], cj.lo[0], cj.hi[0], alpha)
    } else {
        rect_weight(ci, cj, alpha, tol)
    })
}

/// `∬_{C_i × C_j} |x-y|^{-(n+α)} dx dy`; the same-cell value is 0.
pub fn cell_pair_weight(ci: &Cell, cj: &Cell, alpha: f64, tol: f64) -> Result<f64> {
    cell_pair_weight_with_method(ci, cj, alpha, tol).map(|(w, _)| w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Cell {
        Cell::interval(a, b)
    }

    fn sq(x: f64, y: f64, h: f64) -> Cell {
        Cell::rect([x, y], [x + h, y + h])
    }

    #[test]
    fn touching_intervals_closed_form() {
        let w = cell_pair_weight(&iv(0.0, 1.0), &iv(1.0, 2.0), 0.5, 1e-10).unwrap();
        let exact = 8.0 - 4.0 * sqrt(2.0);
        assert!((w - exact).abs() < 1e-14 * exact);
    }

    #[test]
    fn distant_intervals_near_midpoint() {
        let w = cell_pair_weight(&iv(0.0, 1.0), &iv(10.0, 11.0), 0.5, 1e-10).unwrap();
        let mid = powf(10.0, -1.5);
        assert!((w - mid).abs() < 0.005 * mid);
        let closed = pattern(0.0, 1.0, 10.0, 11.0, 0.5);
        assert!((w - closed).abs() < 1e-12 * w);
    }

    #[test]
    fn half_line_tail_golden() {
        let t = half_line_weight(0.0, 1.0, 2.0, 0.5);
        let exact = 4.0 * sqrt(2.0) - 4.0;
        assert!((t - exact).abs() < 1e-14);
        let far = half_line_weight(0.0, 1.0, 40.0, 0.5);
        let closed = psi(40.0, 0.5) - psi(39.0, 0.5);
        assert!((far - closed).abs() < 1e-12 * far);
    }

    #[test]
    fn moment_matched_touching_1d() {
        let alpha = 1.3;
        let (w, m) = interval_weight(0.0, 1.0, 1.0, 2.0, alpha);
        assert_eq!(m, PairMethod::MomentMatched);
        let expect = (powf(2.0, 3.0 - alpha) - 2.0) / ((2.0 - alpha) * (3.0 - alpha));
        assert!((w - expect).abs() < 1e-14);
    }

    #[test]
    fn logarithmic_case_is_continuous() {
        let at = pattern(0.0, 1.0, 1.5, 2.5, 1.0);
        let near = pattern(0.0, 1.0, 1.5, 2.5, 1.0 + 1e-7);
        assert!((at - near).abs() < 1e-5 * at);
    }

    #[test]
    fn overlap_and_alpha_errors() {
        assert!(matches!(
            cell_pair_weight(&iv(0.0, 1.0), &iv(0.5, 1.5), 0.5, 1e-8),
            Err(Error::Geometry(_))
        ));
        assert!(matches!(
            cell_pair_weight(&iv(0.0, 1.0), &iv(1.0, 2.0), 2.0, 1e-8),
            Err(Error::Parameter(_))
        ));
        assert_eq!(cell_pair_weight(&iv(0.0, 1.0), &iv(0.0, 1.0), 0.5, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn rect_weight_far_agrees_with_midpoint_estimate() {
        let a = sq(0.0, 0.0, 1.0);
        let b = sq(30.0, 7.0, 1.0);
        let w = cell_pair_weight(&a, &b, 0.7, 1e-12).unwrap();
        let d2: f64 = 30.0 * 30.0 + 49.0;
        let mid = powf(d2, -1.35);
        assert!((w - mid).abs() < 2e-3 * mid);
    }

    #[test]
    fn rect_methods_agree_in_overlap_band() {
        // Gauss patches and polar patches must give the same integral
        let a = sq(0.0, 0.0, 1.0);
        let b = sq(3.0, 0.5, 1.0);
        let (w, _) = rect_weight(&a, &b, 0.6, 1e-12);
        let tents = [Tent::axis(&a, &b, 0), Tent::axis(&a, &b, 1)];
        let rule = GaussRule::new(16);
        let mut polar = 0.0;
        for p in tents[0].pieces() {
            for q in tents[1].pieces() {
                if p.hi > p.lo && q.hi > q.lo {
                    let mut poly: Poly = [[0.0; 4]; 4];
                    poly[0][0] = p.c0 * q.c0;
                    poly[1][0] = p.c1 * q.c0;
                    poly[0][1] = p.c0 * q.c1;
                    poly[1][1] = p.c1 * q.c1;
                    polar += polar_moment([p.lo, p.hi, q.lo, q.hi], &poly, 0.6, &rule);
                }
            }
        }
        assert!((w - polar).abs() < 1e-11 * w, "{w} {polar}");
    }

    #[test]
    fn rect_symmetry() {
        let a = sq(0.0, 0.0, 0.5);
        let b = sq(0.5, 0.0, 0.5);
        let c = sq(0.5, 0.5, 0.5);
        for alpha in [0.3, 0.9, 1.4] {
            for other in [&b, &c] {
                let w1 = cell_pair_weight(&a, other, alpha, 1e-10).unwrap();
                let w2 = cell_pair_weight(other, &a, alpha, 1e-10).unwrap();
                assert!(w1 > 0.0 && w1.is_finite());
                assert_eq!(w1, w2);
            }
        }
    }
}
