//! Datum-independent kernel tables for a grid.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use super::pair::{cell_pair_weight_with_method, check_alpha, check_tol, PairMethod};
use crate::math::ceil;
use crate::model::{Cell, Grid};
use crate::{par, Error, Result};

/// Growth ratio of the exterior rectangles in one dimension.
pub const EXTERIOR_RATIO_1D: f64 = 1.1;
/// Growth ratio of the exterior shells in two dimensions.
pub const EXTERIOR_RATIO_2D: f64 = 1.5;

fn next_edge(x: f64, w: f64, ratio: f64, limit: f64) -> f64 {
    let hi = x + w;
    // absorb a sliver that a further step would leave behind
    if hi >= limit || limit - hi < 0.5 * w * ratio {
        limit
    } else {
        hi
    }
}

/// Graded rectangles tiling `[-R_out, R_out]^n` minus the box.
pub fn exterior_mesh(grid: &Grid) -> Vec<Cell> {
    let spec = grid.spec();
    let l = spec.half_width;
    let r = spec.truncation_radius;
    let h = grid.width();
    let mut out = Vec::new();
    if r <= l {
        return out;
    }
    if grid.dim() == 1 {
        let mut right = Vec::new();
        let (mut x, mut w) = (l, h);
        while x < r {
            let hi = next_edge(x, w, EXTERIOR_RATIO_1D, r);
            right.push((x, hi));
            x = hi;
            w *= EXTERIOR_RATIO_1D;
        }
        for &(a, b) in &right {
            out.push(Cell::interval(a, b));
        }
        for &(a, b) in &right {
            out.push(Cell::interval(-b, -a));
        }
        return out;
    }
    let (mut s, mut w) = (l, h);
    while s < r {
        let s1 = next_edge(s, w, EXTERIOR_RATIO_2D, r);
        let pieces = ceil(2.0 * s / w - 1e-9).max(1.0) as usize;
        let step = 2.0 * s / pieces as f64;
        for k in 0..pieces {
            let a = -s + k as f64 * step;
            let b = if k + 1 == pieces { s } else { -s + (k + 1) as f64 * step };
            out.push(Cell::rect([a, -s1], [b, -s]));
            out.push(Cell::rect([a, s], [b, s1]));
            out.push(Cell::rect([-s1, a], [-s, b]));
            out.push(Cell::rect([s, a], [s1, b]));
        }
        out.push(Cell::rect([-s1, -s1], [-s, -s]));
        out.push(Cell::rect([s, -s1], [s1, -s]));
        out.push(Cell::rect([-s1, s], [-s, s1]));
        out.push(Cell::rect([s, s], [s1, s1]));
        s = s1;
        w *= EXTERIOR_RATIO_2D;
    }
    out
}

/// Pair weights between grid cells and between grid cells and the exterior
/// rectangles, for one kernel exponent. Box weights depend on the index
/// offset only and are stored per offset.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    grid: Arc<Grid>,
    alpha: f64,
    tol: f64,
    offsets: Vec<f64>,
    methods: Vec<PairMethod>,
    rects: Vec<Cell>,
    rect_weights: Vec<f64>,
}

fn offset_extent(grid: &Grid) -> usize {
    2 * grid.cells_per_side() - 1
}

fn offset_code(grid: &Grid, di: isize, dj: isize) -> usize {
    let m = grid.cells_per_side() as isize;
    let e = offset_extent(grid) as isize;
    if grid.dim() == 1 {
        return (di + m - 1) as usize;
    }
    ((di + m - 1) + e * (dj + m - 1)) as usize
}

fn offset_of(grid: &Grid, code: usize) -> (isize, isize) {
    let m = grid.cells_per_side() as isize;
    let e = offset_extent(grid);
    ((code % e) as isize - (m - 1), (code / e) as isize - (m - 1))
}

fn canonical(di: isize, dj: isize) -> (isize, isize) {
    if dj < 0 || (dj == 0 && di < 0) {
        (-di, -dj)
    } else {
        (di, dj)
    }
}

fn offset_cell(grid: &Grid, di: isize, dj: isize) -> Cell {
    let h = grid.width();
    if grid.dim() == 1 {
        Cell::interval(di as f64 * h, (di + 1) as f64 * h)
    } else {
        Cell::rect([di as f64 * h, dj as f64 * h], [(di + 1) as f64 * h, (dj + 1) as f64 * h])
    }
}

/// Builds the kernel table for exponent `α` (weights `|x-y|^{-(n+α)}`).
pub fn assemble_table(grid: &Arc<Grid>, alpha: f64, tol: f64) -> Result<KernelTable> {
    check_alpha(alpha)?;
    check_tol(tol)?;
    let count = if grid.dim() == 1 { offset_extent(grid) } else { offset_extent(grid).pow(2) };
    let origin = offset_cell(grid, 0, 0);
    let codes: Vec<Result<(f64, PairMethod)>> = par::map_range(count, |code| {
        let (di, dj) = offset_of(grid, code);
        let (ci, cj) = canonical(di, dj);
        cell_pair_weight_with_method(&origin, &offset_cell(grid, ci, cj), alpha, tol)
    });
    let mut offsets = Vec::with_capacity(count);
    let mut methods = Vec::with_capacity(count);
    for c in codes {
        let (w, m) = c?;
        offsets.push(w);
        methods.push(m);
    }
    let rects = exterior_mesh(grid);
    let rect_weights = rect_weights(grid, &rects, alpha, tol)?;
    Ok(KernelTable { grid: grid.clone(), alpha, tol, offsets, methods, rects, rect_weights })
}

fn rect_weights(grid: &Arc<Grid>, rects: &[Cell], alpha: f64, tol: f64) -> Result<Vec<f64>> {
    let rows: Vec<Result<Vec<f64>>> = par::map_range(grid.len(), |i| {
        let ci = grid.cell(i);
        rects
            .iter()
            .map(|r| cell_pair_weight_with_method(&ci, r, alpha, tol).map(|(w, _)| w))
            .collect()
    });
    let mut out = Vec::with_capacity(grid.len() * rects.len());
    for row in rows {
        out.extend(row?);
    }
    Ok(out)
}

impl KernelTable {
    /// Rebuilds a table from stored box offsets and rectangle weights.
    pub fn from_parts(
        grid: &Arc<Grid>,
        alpha: f64,
        tol: f64,
        offsets: Vec<f64>,
        methods: Vec<PairMethod>,
        rect_weights: Vec<f64>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let count = if grid.dim() == 1 { offset_extent(grid) } else { offset_extent(grid).pow(2) };
        let rects = exterior_mesh(grid);
        if offsets.len() != count || methods.len() != count || rect_weights.len() != grid.len() * rects.len() {
            return Err(Error::Parameter(format!(
                "stored table sizes ({}, {}) do not match the grid ({count}, {})",
                offsets.len(),
                rect_weights.len(),
                grid.len() * rects.len()
            )));
        }
        if offsets.iter().chain(&rect_weights).any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter("stored table has invalid weights".into()));
        }
        Ok(Self { grid: grid.clone(), alpha, tol, offsets, methods, rects, rect_weights })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn code(&self, i: usize, j: usize) -> usize {
        let (ai, aj) = self.grid.coords(i);
        let (bi, bj) = self.grid.coords(j);
        offset_code(&self.grid, bi as isize - ai as isize, bj as isize - aj as isize)
    }

    fn canonical_code(&self, i: usize, j: usize) -> usize {
        let (ai, aj) = self.grid.coords(i);
        let (bi, bj) = self.grid.coords(j);
        let (di, dj) = canonical(bi as isize - ai as isize, bj as isize - aj as isize);
        offset_code(&self.grid, di, dj)
    }

    /// `W_ij`; 0 on the diagonal.
    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.offsets[self.code(i, j)]
        }
    }

    pub fn method(&self, i: usize, j: usize) -> PairMethod {
        if i == j {
            PairMethod::SameCell
        } else {
            self.methods[self.canonical_code(i, j)]
        }
    }

    /// Weight per index offset, in storage order.
    pub fn offset_weights(&self) -> &[f64] {
        &self.offsets
    }

    pub fn offset_methods(&self) -> &[PairMethod] {
        &self.methods
    }

    /// Number of unordered cell pairs including the diagonal.
    pub fn pair_count(&self) -> usize {
        let n = self.grid.len();
        n * (n + 1) / 2
    }

    /// Upper triangle `W_ij, j ≥ i`, row by row.
    pub fn packed(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut out = Vec::with_capacity(self.pair_count());
        for i in 0..n {
            for j in i..n {
                out.push(self.weight(i, j));
            }
        }
        out
    }

    pub fn rects(&self) -> &[Cell] {
        &self.rects
    }

    pub fn rect_weights(&self) -> &[f64] {
        &self.rect_weights
    }

    /// Weights of cell `i` against every exterior rectangle.
    pub fn rect_row(&self, i: usize) -> &[f64] {
        let r = self.rects.len();
        &self.rect_weights[i * r..(i + 1) * r]
    }

    /// `Σ_{j ≠ i} W_ij` over grid cells.
    pub fn box_row_sum(&self, i: usize) -> f64 {
        crate::math::csum((0..self.grid.len()).map(|j| self.weight(i, j)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_grid, GridSpec};

    #[test]
    fn exterior_mesh_tiles_annulus() {
        for (n, m) in [(1usize, 8usize), (2, 6)] {
            let g = build_grid(GridSpec::new(n, 1.0, m).with_truncation_radius(10.0)).unwrap();
            let mesh = exterior_mesh(&g);
            let vol: f64 = mesh.iter().map(|c| c.volume()).sum();
            let expect = if n == 1 { 18.0 } else { 400.0 - 4.0 };
            assert!((vol - expect).abs() < 1e-9 * expect, "{n}: {vol}");
            for (k, a) in mesh.iter().enumerate() {
                for b in &mesh[k + 1..] {
                    assert!(!a.overlaps(b), "{a:?} {b:?}");
                }
                for c in 0..g.len() {
                    assert!(!a.overlaps(&g.cell(c)));
                }
            }
        }
    }

    #[test]
    fn first_shell_matches_cell_size() {
        let g = build_grid(GridSpec::new(2, 1.0, 4)).unwrap();
        let mesh = exterior_mesh(&g);
        for c in &mesh[..20] {
            assert!((c.width(0) - 0.5).abs() < 1e-15 && (c.width(1) - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn small_table_counts_and_symmetry() {
        let g = Arc::new(build_grid(GridSpec::new(1, 1.0, 4)).unwrap());
        let t = assemble_table(&g, 0.5, 1e-10).unwrap();
        assert_eq!(t.pair_count(), 10);
        assert_eq!(t.packed().len(), 10);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(t.weight(i, j), t.weight(j, i));
            }
        }
    }
}
