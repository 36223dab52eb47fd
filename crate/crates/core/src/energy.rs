//! Interaction, fractional perimeter, Gagliardo energy and the total
//! functional, assembled from kernel tables and bound exterior data.
//!
//! Ω-Ω pairs and Ω-exterior pairs are both counted in ordered form, so every
//! unordered pair touching Ω carries a factor 2 in the Gagliardo energy; the
//! perimeter counts each unordered pair of opposite phases once.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::CompensatedSum;
use crate::model::{AdmissiblePair, DiscreteFunction, ExteriorDatum, FractionalParams, Grid, PhaseSet};
use crate::quadrature::{assemble_table, KernelTable, TailData};
use crate::{par, Error, Result};

/// A kernel table together with the exterior datum it is bound to.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub table: Arc<KernelTable>,
    pub tail: Arc<TailData>,
}

impl Discretization {
    pub fn new(table: Arc<KernelTable>, datum: &Arc<ExteriorDatum>) -> Result<Self> {
        let tail = Arc::new(TailData::new(&table, datum)?);
        Ok(Self { table, tail })
    }

    pub fn build(grid: &Arc<Grid>, datum: &Arc<ExteriorDatum>, alpha: f64, tol: f64) -> Result<Self> {
        Self::new(Arc::new(assemble_table(grid, alpha, tol)?), datum)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.table.grid()
    }

    pub fn alpha(&self) -> f64 {
        self.table.alpha()
    }

    fn check_alpha(&self, alpha: f64, what: &str) -> Result<()> {
        if (self.alpha() - alpha).abs() > 1e-14 {
            return Err(Error::Parameter(format!(
                "{what} needs a table of exponent {alpha}, got {}",
                self.alpha()
            )));
        }
        Ok(())
    }

    fn check_grid(&self, grid: &Grid) -> Result<()> {
        if **self.grid() != *grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Exterior mass of cell `i` restricted to `E_0` (`inside`) or its complement.
    pub fn exterior_mass(&self, i: usize, inside: bool) -> f64 {
        let row = self.table.rect_row(i);
        let mut acc = CompensatedSum::new();
        for (w, &flag) in row.iter().zip(self.tail.rect_in_set()) {
            if flag == inside {
                acc.add(*w);
            }
        }
        let far = self.tail.far(i);
        acc.add(if inside { far.mass_in } else { far.mass_out });
        acc.value()
    }

    /// `∫_{ext} (v - φ)^2 K_i` over everything outside the box.
    pub fn exterior_square(&self, i: usize, v: f64) -> f64 {
        let row = self.table.rect_row(i);
        let mut acc = CompensatedSum::new();
        for (w, f) in row.iter().zip(self.tail.rect_values()) {
            acc.add(w * (v - f) * (v - f));
        }
        let far = self.tail.far(i);
        acc.add(v * v * far.mass() - 2.0 * v * far.first + far.second);
        acc.value()
    }

    /// `(∫ K_i, ∫ φ K_i)` over everything outside the box.
    pub fn exterior_linear(&self, i: usize) -> (f64, f64) {
        let row = self.table.rect_row(i);
        let mut mass = CompensatedSum::new();
        let mut first = CompensatedSum::new();
        for (w, f) in row.iter().zip(self.tail.rect_values()) {
            mass.add(*w);
            first.add(w * f);
        }
        let far = self.tail.far(i);
        mass.add(far.mass());
        first.add(far.first);
        (mass.value(), first.value())
    }

    /// `∫_{ext} φ^2 K_i`.
    pub fn exterior_constant(&self, i: usize) -> f64 {
        let row = self.table.rect_row(i);
        let mut acc = CompensatedSum::new();
        for (w, f) in row.iter().zip(self.tail.rect_values()) {
            acc.add(w * f * f);
        }
        acc.add(self.tail.far(i).second);
        acc.value()
    }
}

/// Tables for both exponents, `2s` and `σ`, bound to one datum.
#[derive(Debug, Clone)]
pub struct Tables {
    pub s: Discretization,
    pub sigma: Discretization,
}

impl Tables {
    pub fn build(grid: &Arc<Grid>, datum: &Arc<ExteriorDatum>, params: &FractionalParams, tol: f64) -> Result<Self> {
        params.validate()?;
        let s = Discretization::build(grid, datum, 2.0 * params.s, tol)?;
        let sigma = if (2.0 * params.s - params.sigma).abs() < 1e-15 {
            s.clone()
        } else {
            Discretization::build(grid, datum, params.sigma, tol)?
        };
        Ok(Self { s, sigma })
    }

    /// Rebinds existing tables to another datum.
    pub fn rebind(&self, datum: &Arc<ExteriorDatum>) -> Result<Self> {
        let s = Discretization::new(self.s.table.clone(), datum)?;
        let sigma = if Arc::ptr_eq(&self.s.table, &self.sigma.table) {
            s.clone()
        } else {
            Discretization::new(self.sigma.table.clone(), datum)?
        };
        Ok(Self { s, sigma })
    }
}

/// Which part of the region outside the box joins a [`Region`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExteriorPart {
    None,
    InSet,
    OutSet,
    All,
}

/// A collection of grid cells plus, optionally, part of the exterior.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub cells: Vec<usize>,
    pub exterior: ExteriorPart,
}

impl Region {
    pub fn cells(cells: Vec<usize>) -> Self {
        Self { cells, exterior: ExteriorPart::None }
    }

    pub fn empty() -> Self {
        Self::cells(Vec::new())
    }
}

/// `L(A, B)`: the kernel integrated over `A × B`.
pub fn interaction(a: &Region, b: &Region, disc: &Discretization) -> Result<f64> {
    let grid = disc.grid();
    let mut mark = vec![false; grid.len()];
    for &i in &a.cells {
        if i >= grid.len() {
            return Err(Error::Parameter(format!("cell index {i} out of range")));
        }
        mark[i] = true;
    }
    if let Some(&j) = b.cells.iter().find(|&&j| j >= grid.len() || mark[j]) {
        return Err(Error::Geometry(format!("regions overlap or index out of range at cell {j}")));
    }
    if a.exterior != ExteriorPart::None && b.exterior != ExteriorPart::None {
        let disjoint = matches!(
            (a.exterior, b.exterior),
            (ExteriorPart::InSet, ExteriorPart::OutSet) | (ExteriorPart::OutSet, ExteriorPart::InSet)
        );
        return Err(Error::Geometry(if disjoint {
            "exterior-exterior interactions are not represented".into()
        } else {
            "regions overlap outside the box".into()
        }));
    }
    let ext = |i: usize, part: ExteriorPart| match part {
        ExteriorPart::None => 0.0,
        ExteriorPart::InSet => disc.exterior_mass(i, true),
        ExteriorPart::OutSet => disc.exterior_mass(i, false),
        ExteriorPart::All => disc.exterior_mass(i, true) + disc.exterior_mass(i, false),
    };
    let mut acc = CompensatedSum::new();
    for &i in &a.cells {
        for &j in &b.cells {
            acc.add(disc.table.weight(i, j));
        }
        acc.add(ext(i, b.exterior));
    }
    for &j in &b.cells {
        acc.add(ext(j, a.exterior));
    }
    Ok(acc.value())
}

/// The three perimeter terms `L(E∩Ω, E^c∩Ω)`, `L(E∩Ω, E^c∖Ω)`, `L(E∖Ω, E^c∩Ω)`.
pub fn perimeter_terms(e: &PhaseSet, omega: &[bool], disc: &Discretization) -> Result<[f64; 3]> {
    let grid = disc.grid();
    disc.check_grid(e.grid())?;
    if omega.len() != grid.len() {
        return Err(Error::Parameter("domain mask has the wrong length".into()));
    }
    let n = grid.len();
    let ind = e.indicator();
    let rows: Vec<[f64; 3]> = par::map_range(n, |i| {
        if !omega[i] {
            return [0.0; 3];
        }
        let mut inner = CompensatedSum::new();
        let mut out_t = [CompensatedSum::new(), CompensatedSum::new()];
        let pi = ind[i];
        for j in 0..n {
            if ind[j] == pi || j == i {
                continue;
            }
            let w = disc.table.weight(i, j);
            if omega[j] {
                if j > i {
                    inner.add(w);
                }
            } else if pi > 0 {
                out_t[0].add(w);
            } else {
                out_t[1].add(w);
            }
        }
        // exterior of the box lies outside Ω
        if pi > 0 {
            out_t[0].add(disc.exterior_mass(i, false));
        } else {
            out_t[1].add(disc.exterior_mass(i, true));
        }
        [inner.value(), out_t[0].value(), out_t[1].value()]
    });
    let mut t = [CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new()];
    for r in rows {
        for k in 0..3 {
            t[k].add(r[k]);
        }
    }
    Ok([t[0].value(), t[1].value(), t[2].value()])
}

/// `Per_σ(E, Ω)` on the grid's Ω.
pub fn frac_perimeter(e: &PhaseSet, disc: &Discretization, sigma: f64) -> Result<f64> {
    disc.check_alpha(sigma, "perimeter")?;
    let t = perimeter_terms(e, e.grid().omega(), disc)?;
    Ok(t[0] + t[1] + t[2])
}

/// `Per_σ(E, Ω')` for a sub-domain given as a cell mask.
pub fn frac_perimeter_in(e: &PhaseSet, omega: &[bool], disc: &Discretization) -> Result<f64> {
    let t = perimeter_terms(e, omega, disc)?;
    Ok(t[0] + t[1] + t[2])
}

/// Gagliardo energy split into (box part, exterior part) for a domain mask.
pub fn gagliardo_parts(u: &DiscreteFunction, omega: &[bool], disc: &Discretization) -> Result<(f64, f64)> {
    let grid = disc.grid();
    disc.check_grid(u.grid())?;
    if omega.len() != grid.len() {
        return Err(Error::Parameter("domain mask has the wrong length".into()));
    }
    let n = grid.len();
    let v = u.values();
    let rows: Vec<(f64, f64)> = par::map_range(n, |i| {
        if !omega[i] {
            return (0.0, 0.0);
        }
        let mut acc = CompensatedSum::new();
        for j in 0..n {
            if j == i || (omega[j] && j < i) {
                continue;
            }
            let d = v[i] - v[j];
            acc.add(2.0 * d * d * disc.table.weight(i, j));
        }
        (acc.value(), 2.0 * disc.exterior_square(i, v[i]))
    });
    let mut inner = CompensatedSum::new();
    let mut outer = CompensatedSum::new();
    for (a, b) in rows {
        inner.add(a);
        outer.add(b);
    }
    let outer = outer.value();
    if !outer.is_finite() {
        return Err(Error::IncompleteDatum(
            "the datum's square is not integrable against the kernel at infinity".into(),
        ));
    }
    Ok((inner.value(), outer))
}

/// Gagliardo energy over `R^{2n} ∖ (Ω^c)^2` on the grid's Ω.
pub fn gagliardo_energy(u: &DiscreteFunction, disc: &Discretization, s: f64) -> Result<f64> {
    disc.check_alpha(2.0 * s, "gagliardo energy")?;
    let (a, b) = gagliardo_parts(u, u.grid().omega(), disc)?;
    Ok(a + b)
}

/// Gagliardo energy for a sub-domain mask.
pub fn gagliardo_energy_in(u: &DiscreteFunction, omega: &[bool], disc: &Discretization) -> Result<f64> {
    let (a, b) = gagliardo_parts(u, omega, disc)?;
    Ok(a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyBreakdown {
    pub gagliardo: f64,
    pub perimeter: f64,
    pub total: f64,
    /// Ω-to-exterior share of the Gagliardo energy (outside the box).
    pub gagliardo_exterior: f64,
    /// `L(E∩Ω, E^c∩Ω)`, `L(E∩Ω, E^c∖Ω)`, `L(E∖Ω, E^c∩Ω)`.
    pub perimeter_terms: [f64; 3],
}

fn check_tables(pair: &AdmissiblePair, params: &FractionalParams, tables: &Tables) -> Result<()> {
    params.validate()?;
    tables.s.check_alpha(2.0 * params.s, "gagliardo energy")?;
    tables.sigma.check_alpha(params.sigma, "perimeter")?;
    if *tables.s.tail.datum() != *pair.u.datum() || *tables.sigma.tail.datum() != *pair.e.datum() {
        return Err(Error::Parameter("tables are bound to a different exterior datum".into()));
    }
    Ok(())
}

/// `F(u, E)` with its parts, on a domain mask.
pub fn total_energy_in(pair: &AdmissiblePair, omega: &[bool], params: &FractionalParams, tables: &Tables) -> Result<EnergyBreakdown> {
    check_tables(pair, params, tables)?;
    let (inner, outer) = gagliardo_parts(&pair.u, omega, &tables.s)?;
    let terms = perimeter_terms(&pair.e, omega, &tables.sigma)?;
    let gagliardo = inner + outer;
    let perimeter = terms[0] + terms[1] + terms[2];
    Ok(EnergyBreakdown {
        gagliardo,
        perimeter,
        total: gagliardo + perimeter,
        gagliardo_exterior: outer,
        perimeter_terms: terms,
    })
}

/// `F(u, E)` on the grid's Ω.
pub fn total_energy(pair: &AdmissiblePair, params: &FractionalParams, tables: &Tables) -> Result<EnergyBreakdown> {
    total_energy_in(pair, pair.grid().omega(), params, tables)
}

/// The Gagliardo energy as a quadratic in the Ω values:
/// `E(u) = uᵀ A u - 2 bᵀ u + c`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    /// Grid cells of the unknowns.
    pub cells: Vec<usize>,
    /// Row-major `A`.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    /// `+∞` when the datum's square does not decay fast enough.
    pub c: f64,
}

impl QuadraticForm {
    pub fn build(disc: &Discretization, u: &DiscreteFunction) -> Result<Self> {
        let grid = disc.grid();
        disc.check_grid(u.grid())?;
        let cells = grid.omega_cells();
        let k = cells.len();
        let v = u.values();
        let omega = grid.omega();
        let rows: Vec<(Vec<f64>, f64, f64)> = par::map_range(k, |p| {
            let i = cells[p];
            let mut row = vec![0.0; k];
            let mut diag = CompensatedSum::new();
            let mut lin = CompensatedSum::new();
            let mut cst = CompensatedSum::new();
            for (q, &j) in cells.iter().enumerate() {
                if q != p {
                    let w = disc.table.weight(i, j);
                    row[q] = -2.0 * w;
                    diag.add(w);
                }
            }
            for j in 0..grid.len() {
                if !omega[j] {
                    let w = disc.table.weight(i, j);
                    diag.add(w);
                    lin.add(w * v[j]);
                    cst.add(w * v[j] * v[j]);
                }
            }
            let (mass, first) = disc.exterior_linear(i);
            diag.add(mass);
            lin.add(first);
            cst.add(disc.exterior_constant(i));
            row[p] = 2.0 * diag.value();
            (row, 2.0 * lin.value(), 2.0 * cst.value())
        });
        let mut a = Vec::with_capacity(k * k);
        let mut b = Vec::with_capacity(k);
        let mut c = CompensatedSum::new();
        for (row, bi, ci) in rows {
            a.extend(row);
            b.push(bi);
            c.add(ci);
        }
        Ok(Self { cells, a, b, c: c.value() })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let k = self.len();
        (0..k)
            .map(|i| crate::math::csum(self.a[i * k..(i + 1) * k].iter().zip(x).map(|(a, b)| a * b)))
            .collect()
    }

    /// `∇E = 2 (A u - b)`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x).iter().zip(&self.b).map(|(ax, b)| 2.0 * (ax - b)).collect()
    }

    /// `uᵀ A u - 2 bᵀ u`, which omits the constant.
    pub fn reduced_value(&self, x: &[f64]) -> f64 {
        let ax = self.apply(x);
        crate::math::csum(x.iter().zip(&ax).zip(&self.b).map(|((xi, ai), bi)| xi * ai - 2.0 * bi * xi))
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.reduced_value(x) + self.c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::sqrt;
    use crate::model::{build_grid, make_pair, sample_datum, GridSpec};

    fn halfline(m: usize, alpha: f64) -> (Arc<Grid>, Arc<ExteriorDatum>, Discretization) {
        let g = Arc::new(build_grid(GridSpec::new(1, 1.0, m)).unwrap());
        let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
        let disc = Discretization::build(&g, &d, alpha, 1e-10).unwrap();
        (g, d, disc)
    }

    #[test]
    fn perimeter_golden_value() {
        let (g, d, disc) = halfline(8, 0.5);
        let (_, e) = sample_datum(&d, &g).unwrap();
        let p = frac_perimeter(&e, &disc, 0.5).unwrap();
        let exact = 4.0 * sqrt(2.0);
        assert!((p - exact).abs() < 1e-9 * exact, "{p}");
    }

    #[test]
    fn interaction_of_whole_cells() {
        let g = Arc::new(build_grid(GridSpec::new(1, 2.0, 4)).unwrap());
        let d = Arc::new(ExteriorDatum::constant(1, 1.0));
        let disc = Discretization::build(&g, &d, 0.5, 1e-10).unwrap();
        // cells [0,1] and [1,2]
        let a = Region::cells(vec![2]);
        let b = Region::cells(vec![3]);
        let v = interaction(&a, &b, &disc).unwrap();
        assert!((v - (8.0 - 4.0 * sqrt(2.0))).abs() < 1e-13);
        assert_eq!(v, interaction(&b, &a, &disc).unwrap());
        assert_eq!(interaction(&a, &Region::empty(), &disc).unwrap(), 0.0);
        assert!(interaction(&a, &a, &disc).is_err());
    }

    #[test]
    fn indicator_energy_is_eight_perimeters() {
        let (g, d, disc) = halfline(8, 0.5);
        let (u, e) = sample_datum(&d, &g).unwrap();
        let gag = gagliardo_energy(&u, &disc, 0.25).unwrap();
        let per = frac_perimeter(&e, &disc, 0.5).unwrap();
        assert!((gag - 8.0 * per).abs() < 1e-10 * gag);
        assert!((gag - 32.0 * sqrt(2.0)).abs() < 1e-8 * gag);
    }

    #[test]
    fn quadratic_form_reproduces_energy() {
        let (g, d, disc) = halfline(10, 0.6);
        let vals: Vec<f64> = (0..10).map(|k| (k as f64 * 0.7).sin()).collect();
        let u = DiscreteFunction::new(g.clone(), d.clone(), vals.clone()).unwrap();
        let q = QuadraticForm::build(&disc, &u).unwrap();
        let direct = gagliardo_energy(&u, &disc, 0.3).unwrap();
        assert!((q.value(&vals) - direct).abs() < 1e-10 * direct);
        let (_, e) = sample_datum(&d, &g).unwrap();
        let _ = make_pair(u.scaled(0.0).unwrap(), e, 1e-9).unwrap();
    }

    #[test]
    fn constant_datum_has_zero_energy() {
        let g = Arc::new(build_grid(GridSpec::new(1, 1.0, 6)).unwrap());
        let d = Arc::new(ExteriorDatum::constant(1, 2.0));
        let params = FractionalParams::new(0.3, 0.5);
        let tables = Tables::build(&g, &d, &params, 1e-10).unwrap();
        let (u, e) = sample_datum(&d, &g).unwrap();
        let pair = make_pair(u, e, 1e-9).unwrap();
        let b = total_energy(&pair, &params, &tables).unwrap();
        assert!(b.total.abs() < 1e-9, "{b:?}");
        assert_eq!(b.total, b.gagliardo + b.perimeter);
    }
}
