//! Independent dyadic-subdivision route to the cell-pair weights.
//!
//! Separated pairs are split until the gap exceeds twice the diameter and
//! then evaluated with a tensor Gauss rule. Touching equal cells are handled
//! by self-similarity: the children of a touching pair contain scaled copies
//! of face- and corner-touching pairs, each worth `2^{α-n}` times its parent,
//! so the weight solves a small linear closure.

use alloc::vec::Vec;

use super::pair::check_alpha;
use crate::math::{powf, GaussRule};
use crate::model::Cell;
use crate::{Error, Result};

fn children(c: &Cell) -> Vec<Cell> {
    let m = c.center();
    if c.dim == 1 {
        alloc::vec![Cell::interval(c.lo[0], m[0]), Cell::interval(m[0], c.hi[0])]
    } else {
        let mut out = Vec::with_capacity(4);
        for (y0, y1) in [(c.lo[1], m[1]), (m[1], c.hi[1])] {
            for (x0, x1) in [(c.lo[0], m[0]), (m[0], c.hi[0])] {
                out.push(Cell::rect([x0, y0], [x1, y1]));
            }
        }
        out
    }
}

fn gauss_leaf(ci: &Cell, cj: &Cell, alpha: f64, rule: &GaussRule) -> f64 {
    let n = ci.dim;
    let e = -0.5 * (n as f64 + alpha);
    if n == 1 {
        rule.integrate(ci.lo[0], ci.hi[0], |x| {
            rule.integrate(cj.lo[0], cj.hi[0], |y| powf((x - y) * (x - y), e))
        })
    } else {
        rule.integrate(ci.lo[0], ci.hi[0], |x0| {
            rule.integrate(ci.lo[1], ci.hi[1], |x1| {
                rule.integrate(cj.lo[0], cj.hi[0], |y0| {
                    rule.integrate(cj.lo[1], cj.hi[1], |y1| {
                        powf((x0 - y0) * (x0 - y0) + (x1 - y1) * (x1 - y1), e)
                    })
                })
            })
        })
    }
}

fn separated(ci: &Cell, cj: &Cell, alpha: f64, depth: usize, rule: &GaussRule) -> f64 {
    let gap = ci.distance(cj);
    if depth == 0 || gap >= 2.0 * ci.diameter().max(cj.diameter()) {
        return gauss_leaf(ci, cj, alpha, rule);
    }
    let mut acc = 0.0;
    for a in children(ci) {
        for b in children(cj) {
            acc += separated(&a, &b, alpha, depth - 1, rule);
        }
    }
    acc
}

#[derive(PartialEq)]
enum Contact {
    Separated,
    Face,
    Corner,
}

fn contact(a: &Cell, b: &Cell) -> Contact {
    if a.distance(b) > 0.0 {
        return Contact::Separated;
    }
    let shared = (0..a.dim).filter(|&d| a.hi[d].min(b.hi[d]) - a.lo[d].max(b.lo[d]) > 0.0).count();
    if shared + 1 == a.dim {
        Contact::Face
    } else {
        Contact::Corner
    }
}

/// Sum over child pairs split into (separated part, #face, #corner).
fn split_children(ci: &Cell, cj: &Cell, alpha: f64, depth: usize, rule: &GaussRule) -> (f64, usize, usize) {
    let mut acc = 0.0;
    let (mut faces, mut corners) = (0, 0);
    for a in children(ci) {
        for b in children(cj) {
            match contact(&a, &b) {
                Contact::Separated => acc += separated(&a, &b, alpha, depth, rule),
                Contact::Face => faces += 1,
                Contact::Corner => corners += 1,
            }
        }
    }
    (acc, faces, corners)
}

/// Weight by dyadic subdivision to `depth` levels.
pub fn subdivision_weight(ci: &Cell, cj: &Cell, alpha: f64, depth: usize) -> Result<f64> {
    check_alpha(alpha)?;
    if ci == cj {
        return Ok(0.0);
    }
    if ci.overlaps(cj) {
        return Err(Error::Geometry("overlapping cells".into()));
    }
    let rule = GaussRule::new(4);
    let n = ci.dim;
    let kind = contact(ci, cj);
    if kind == Contact::Separated {
        return Ok(separated(ci, cj, alpha, depth, &rule));
    }
    let equal = (0..n).all(|d| ci.width(d) == cj.width(d) && ci.width(d) == ci.width(0));
    if !equal {
        return Err(Error::Geometry("subdivision closure needs equal cubic cells".into()));
    }
    let kappa = powf(2.0, alpha - n as f64);
    match kind {
        Contact::Corner => {
            let (sep, faces, corners) = split_children(ci, cj, alpha, depth, &rule);
            debug_assert_eq!(faces, 0);
            Ok(sep / (1.0 - corners as f64 * kappa))
        }
        _ => {
            let (sep, faces, corners) = split_children(ci, cj, alpha, depth, &rule);
            let denom = 1.0 - faces as f64 * kappa;
            if denom <= 0.0 {
                return Err(Error::Parameter("touching-face weight diverges for α ≥ 1".into()));
            }
            let corner = if corners > 0 {
                // a corner-touching pair of the same size as (ci, cj)
                let h = ci.width(0);
                let a = Cell::rect([0.0, 0.0], [h, h]);
                let b = Cell::rect([h, h], [2.0 * h, 2.0 * h]);
                let (cs, _, cc) = split_children(&a, &b, alpha, depth, &rule);
                cs / (1.0 - cc as f64 * kappa)
            } else {
                0.0
            };
            Ok((sep + corners as f64 * kappa * corner) / denom)
        }
    }
}
