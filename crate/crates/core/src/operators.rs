//! Discrete fractional Laplacian and s-harmonicity residuals.
//!
//! The operator uses the kernel normalization of the energy tables, with no
//! dimensional constant:
//!
//! ```text
//! (-Δ)^s u (C) = (2 / |C|) [ Σ_j W_Cj (u_C - u_j) + ∫_ext (u_C - φ) K_C ]
//! ```
//!
//! which is the Gagliardo gradient divided by `2|C|`. Reflected neighbors
//! `C ± d` are summed as second differences before accumulation.

use alloc::vec;
use alloc::vec::Vec;

use crate::energy::Discretization;
use crate::math::{sqrt, CompensatedSum};
use crate::model::{AdmissiblePair, DiscreteFunction};
use crate::{par, Error, Result};

fn reflect(grid: &crate::model::Grid, c: usize, j: usize) -> Option<usize> {
    let m = grid.cells_per_side() as isize;
    let (ci, cj) = grid.coords(c);
    let (ji, jj) = grid.coords(j);
    let ri = 2 * ci as isize - ji as isize;
    let rj = 2 * cj as isize - jj as isize;
    if ri < 0 || ri >= m || rj < 0 || rj >= m {
        return None;
    }
    Some(grid.index(ri as usize, rj as usize))
}

/// `(-Δ)^s` at cell `c` for raw cell values bound to `disc`'s datum.
pub fn frac_laplacian_values(values: &[f64], c: usize, disc: &Discretization) -> Result<f64> {
    let grid = disc.grid();
    if values.len() != grid.len() {
        return Err(Error::Parameter("value vector has the wrong length".into()));
    }
    if c >= grid.len() {
        return Err(Error::Parameter("cell index out of range".into()));
    }
    if grid.on_box_boundary(c) {
        return Err(Error::OutOfStencil(c));
    }
    let uc = values[c];
    let mut acc = CompensatedSum::new();
    for j in 0..grid.len() {
        if j == c {
            continue;
        }
        match reflect(grid, c, j) {
            Some(r) if r < j => continue,
            Some(r) => {
                // W_{c,j} = W_{c,r} by translation invariance
                acc.add(disc.table.weight(c, j) * (2.0 * uc - values[j] - values[r]));
            }
            None => acc.add(disc.table.weight(c, j) * (uc - values[j])),
        }
    }
    let (mass, first) = disc.exterior_linear(c);
    acc.add(uc * mass - first);
    Ok(2.0 * acc.value() / grid.cell_volume())
}

/// `(-Δ)^s u` at cell `c`; the table must have exponent `2s`.
pub fn frac_laplacian(u: &DiscreteFunction, c: usize, disc: &Discretization, s: f64) -> Result<f64> {
    if (disc.alpha() - 2.0 * s).abs() > 1e-14 {
        return Err(Error::Parameter("fractional Laplacian needs the table of exponent 2s".into()));
    }
    if **disc.grid() != **u.grid() {
        return Err(Error::GridMismatch);
    }
    if **disc.tail.datum() != **u.datum() {
        return Err(Error::Parameter("table bound to a different datum".into()));
    }
    frac_laplacian_values(u.values(), c, disc)
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ResidualField {
    /// Residual per cell, 0 off the mask.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
    pub max: f64,
    /// `(Σ r² |C|)^{1/2}` over the mask.
    pub l2: f64,
    pub delta: f64,
}

impl ResidualField {
    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    pub fn masked_cells(&self) -> Vec<usize> {
        (0..self.mask.len()).filter(|&k| self.mask[k]).collect()
    }
}

/// Default mask threshold `0.05 · max|u|` over Ω.
pub fn default_delta(u: &DiscreteFunction) -> f64 {
    0.05 * u.max_abs_omega()
}

/// Residuals of `(-Δ)^s u` on Ω cells with `|u| > δ` away from the box boundary.
/// An empty mask is reported through [`ResidualField::is_empty`].
pub fn harmonicity_residual(pair: &AdmissiblePair, disc: &Discretization, delta: f64) -> Result<ResidualField> {
    let u = &pair.u;
    let grid = u.grid().clone();
    if **disc.grid() != *grid {
        return Err(Error::GridMismatch);
    }
    let mask: Vec<bool> = (0..grid.len())
        .map(|k| grid.in_omega(k) && !grid.on_box_boundary(k) && u.values()[k].abs() > delta)
        .collect();
    let res: Vec<Result<f64>> = par::map_range(grid.len(), |k| {
        if mask[k] {
            frac_laplacian_values(u.values(), k, disc)
        } else {
            Ok(0.0)
        }
    });
    let mut values = vec![0.0; grid.len()];
    for (k, r) in res.into_iter().enumerate() {
        values[k] = r?;
    }
    let max = values.iter().zip(&mask).filter(|(_, &m)| m).fold(0.0f64, |a, (v, _)| a.max(v.abs()));
    let vol = grid.cell_volume();
    let l2 = sqrt(crate::math::csum(values.iter().zip(&mask).filter(|(_, &m)| m).map(|(v, _)| v * v * vol)));
    Ok(ResidualField { values, mask, max, l2, delta })
}
