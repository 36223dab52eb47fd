//! Minimization of `F` over admissible pairs.
//!
//! For a fixed phase set the Gagliardo energy is a strictly convex quadratic
//! in the Ω values with sign constraints `p_c u_c ≥ 0`. It is solved by
//! projected Barzilai–Borwein gradient steps followed by a primal active-set
//! polish with dense Cholesky solves on the free set. Phases on the discrete
//! zero set are then chosen by perimeter descent, and the two steps alternate
//! from several starting phases.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::energy::{perimeter_terms, Discretization, EnergyBreakdown, QuadraticForm, Tables};
use crate::math::{csum, Cholesky, CompensatedSum};
use crate::model::{make_pair, AdmissiblePair, DiscreteFunction, FractionalParams, PhaseSet};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum FlipStrategy {
    Greedy,
    /// Exhaustive over the zero set when it has at most 12 cells, greedy otherwise.
    ExhaustiveOnZeroSet,
}

/// Largest zero set searched exhaustively.
pub const EXHAUSTIVE_ZERO_SET_LIMIT: usize = 12;
/// Default cell limit of [`brute_force_minimize`].
pub const DEFAULT_ORACLE_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SolverParams {
    pub max_outer_iters: usize,
    /// Bound on the projected gradient, in fractional-Laplacian units.
    pub qp_tolerance: f64,
    pub qp_max_iters: usize,
    /// Cells with `|u| ≤ δ_flip` may change phase.
    pub zero_threshold: f64,
    pub flip_strategy: FlipStrategy,
    /// Number of random starting phases on top of the deterministic ones.
    pub random_starts: usize,
    pub seed: u64,
    pub energy_stall_tolerance: f64,
    /// Also try phase flips of zero cells judged by the re-solved total energy.
    pub energy_flips: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            max_outer_iters: 100,
            qp_tolerance: 1e-9,
            qp_max_iters: 2000,
            zero_threshold: 1e-9,
            flip_strategy: FlipStrategy::ExhaustiveOnZeroSet,
            random_starts: 4,
            seed: 0,
            energy_stall_tolerance: 1e-12,
            energy_flips: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.into()));
        if self.max_outer_iters < 1 {
            return bad("max_outer_iters must be at least 1");
        }
        if self.qp_max_iters < 1 {
            return bad("qp_max_iters must be at least 1");
        }
        if !(self.qp_tolerance > 0.0) {
            return bad("qp_tolerance must be positive");
        }
        if !(self.zero_threshold > 0.0) {
            return bad("zero_threshold must be positive");
        }
        if !(self.energy_stall_tolerance > 0.0) {
            return bad("energy_stall_tolerance must be positive");
        }
        Ok(())
    }
}

/// Result of one constrained quadratic solve.
#[derive(Debug, Clone)]
pub struct QpSolution {
    /// Values on the Ω cells, in [`QuadraticForm::cells`] order.
    pub x: Vec<f64>,
    /// `max |projected gradient| / (2|C|)`.
    pub kkt_residual: f64,
    pub iterations: usize,
}

fn project(x: &mut [f64], phase: &[i8]) {
    for (v, &p) in x.iter_mut().zip(phase) {
        if (p as f64) * *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn projected_gradient(x: &[f64], g: &[f64], phase: &[i8]) -> f64 {
    x.iter()
        .zip(g)
        .zip(phase)
        .map(|((&v, &gi), &p)| {
            let p = p as f64;
            if p * v > 0.0 || p * gi < 0.0 {
                gi.abs()
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

fn gradient(q: &QuadraticForm, x: &[f64]) -> Vec<f64> {
    q.gradient(x)
}

/// Solves `min uᵀAu - 2bᵀu` subject to `phase_c · u_c ≥ 0`.
pub fn solve_qp(
    q: &QuadraticForm,
    phase: &[i8],
    warm: Option<&[f64]>,
    cell_volume: f64,
    params: &SolverParams,
) -> Result<QpSolution> {
    let k = q.len();
    if phase.len() != k {
        return Err(Error::Parameter("phase vector has the wrong length".into()));
    }
    if k == 0 {
        return Ok(QpSolution { x: Vec::new(), kkt_residual: 0.0, iterations: 0 });
    }
    let scale = 2.0 * cell_volume;
    let tol = params.qp_tolerance * scale;
    let mut x = warm.map(|w| w.to_vec()).unwrap_or_else(|| vec![0.0; k]);
    project(&mut x, phase);
    let mut g = gradient(q, &x);
    let diag_max = (0..k).map(|i| q.a[i * k + i]).fold(0.0, f64::max);
    let mut step = 0.5 / diag_max;
    let mut iterations = 0;
    let mut recent = [q.reduced_value(&x); 8];
    // projected Barzilai–Borwein with a non-monotone safeguard
    while iterations < params.qp_max_iters && projected_gradient(&x, &g, phase) > 100.0 * tol {
        iterations += 1;
        let mut trial_step = step;
        let (xn, gn, fnew) = loop {
            let mut xn: Vec<f64> = x.iter().zip(&g).map(|(v, gi)| v - trial_step * gi).collect();
            project(&mut xn, phase);
            let fnew = q.reduced_value(&xn);
            let fmax = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if fnew <= fmax + 1e-14 * fmax.abs() || trial_step < 1e-3 / diag_max {
                let gn = gradient(q, &xn);
                break (xn, gn, fnew);
            }
            trial_step *= 0.5;
        };
        let sy = csum(xn.iter().zip(&x).zip(gn.iter().zip(&g)).map(|((a, b), (c, d))| (a - b) * (c - d)));
        let ss = csum(xn.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)));
        step = if sy > 0.0 { (ss / sy).clamp(1e-3 / diag_max, 1e3 / diag_max) } else { 1.0 / diag_max };
        let slot = iterations % recent.len();
        recent[slot] = fnew;
        x = xn;
        g = gn;
        if ss == 0.0 {
            break;
        }
    }
    polish(q, phase, &mut x, &mut g, tol, &mut iterations)?;
    let kkt = projected_gradient(&x, &g, phase) / scale;
    if !(kkt <= params.qp_tolerance) {
        return Err(Error::NonConvergence { iterations, residual: kkt, best: x });
    }
    Ok(QpSolution { x, kkt_residual: kkt, iterations })
}

/// Primal active-set iterations started from a feasible point.
fn polish(
    q: &QuadraticForm,
    phase: &[i8],
    x: &mut Vec<f64>,
    g: &mut Vec<f64>,
    tol: f64,
    iterations: &mut usize,
) -> Result<()> {
    let k = q.len();
    let mut free: Vec<bool> = (0..k)
        .map(|i| {
            let p = phase[i] as f64;
            p * x[i] > 0.0 || p * g[i] < 0.0
        })
        .collect();
    for i in 0..k {
        if !free[i] {
            x[i] = 0.0;
        }
    }
    let budget = 4 * k + 20;
    for _ in 0..budget {
        *iterations += 1;
        let idx: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
        let mut target = vec![0.0; k];
        if !idx.is_empty() {
            let m = idx.len();
            let mut sub = Vec::with_capacity(m * m);
            for &i in &idx {
                for &j in &idx {
                    sub.push(q.a[i * k + j]);
                }
            }
            let Some(ch) = Cholesky::factor(m, sub) else {
                return Err(Error::NonConvergence {
                    iterations: *iterations,
                    residual: f64::INFINITY,
                    best: x.clone(),
                });
            };
            let rhs: Vec<f64> = idx.iter().map(|&i| q.b[i]).collect();
            for (v, &i) in ch.solve(&rhs).into_iter().zip(&idx) {
                target[i] = v;
            }
        }
        let infeasible: Vec<usize> = idx.iter().copied().filter(|&i| (phase[i] as f64) * target[i] < 0.0).collect();
        if infeasible.is_empty() {
            *x = target;
            *g = gradient(q, x);
            // release the most violated multiplier
            let mut worst = None;
            let mut worst_val = -0.5 * tol;
            for i in 0..k {
                if !free[i] {
                    let pg = phase[i] as f64 * g[i];
                    if pg < worst_val {
                        worst_val = pg;
                        worst = Some(i);
                    }
                }
            }
            match worst {
                Some(i) => free[i] = true,
                None => return Ok(()),
            }
        } else {
            let mut t = 1.0f64;
            let mut hit = Vec::new();
            for &i in &infeasible {
                let p = phase[i] as f64;
                let (a, b) = (p * x[i], p * target[i]);
                let ti = if a - b > 0.0 { a / (a - b) } else { 0.0 };
                if ti < t - 1e-15 {
                    t = ti;
                    hit.clear();
                    hit.push(i);
                } else if (ti - t).abs() <= 1e-15 {
                    hit.push(i);
                }
            }
            for i in 0..k {
                x[i] += t * (target[i] - x[i]);
            }
            for &i in &hit {
                x[i] = 0.0;
                free[i] = false;
            }
            project(x, phase);
            for i in 0..k {
                if free[i] && x[i] == 0.0 && (phase[i] as f64) * target[i] < 0.0 {
                    free[i] = false;
                }
            }
        }
    }
    *g = gradient(q, x);
    Ok(())
}

fn omega_phase(e: &PhaseSet, cells: &[usize]) -> Vec<i8> {
    cells.iter().map(|&c| e.phase(c)).collect()
}

fn assemble_function(u_template: &DiscreteFunction, cells: &[usize], x: &[f64]) -> Result<DiscreteFunction> {
    let mut vals = u_template.values().to_vec();
    for (&c, &v) in cells.iter().zip(x) {
        vals[c] = v;
    }
    DiscreteFunction::new(u_template.grid().clone(), u_template.datum().clone(), vals)
}

fn datum_function(disc: &Discretization, e: &PhaseSet) -> Result<DiscreteFunction> {
    let grid = e.grid();
    DiscreteFunction::new(grid.clone(), disc.tail.datum().clone(), vec![0.0; grid.len()])
}

/// Constrained minimizer of the Gagliardo energy for a fixed phase set.
#[derive(Debug, Clone)]
pub struct PhaseSolve {
    pub u: DiscreteFunction,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Minimizes the discrete Gagliardo energy over `u` with `u ≥ 0` on `E ∩ Ω`,
/// `u ≤ 0` on `E^c ∩ Ω` and `u = φ` outside Ω.
pub fn solve_u_given_phase(e: &PhaseSet, disc: &Discretization, params: &SolverParams) -> Result<PhaseSolve> {
    params.validate()?;
    let template = datum_function(disc, e)?;
    let q = QuadraticForm::build(disc, &template)?;
    let phase = omega_phase(e, &q.cells);
    let sol = solve_qp(&q, &phase, None, e.grid().cell_volume(), params)?;
    Ok(PhaseSolve {
        u: assemble_function(&template, &q.cells, &sol.x)?,
        kkt_residual: sol.kkt_residual,
        iterations: sol.iterations,
    })
}

/// Incremental bookkeeping of `Per_σ` under single-cell flips.
struct FlipState<'a> {
    disc: &'a Discretization,
    cells: Vec<usize>,
    phase: Vec<i8>,
    /// Perimeter change if cell `k` (of `cells`) is flipped.
    delta: Vec<f64>,
}

impl<'a> FlipState<'a> {
    fn new(disc: &'a Discretization, e: &PhaseSet, cells: Vec<usize>) -> Self {
        let grid = disc.grid();
        let ind = e.indicator().to_vec();
        let delta = par::map_range(cells.len(), |k| {
            let i = cells[k];
            let mut acc = CompensatedSum::new();
            for j in 0..grid.len() {
                if j != i {
                    let w = disc.table.weight(i, j);
                    acc.add(if ind[j] == ind[i] { w } else { -w });
                }
            }
            let inside = ind[i] > 0;
            acc.add(disc.exterior_mass(i, inside));
            acc.add(-disc.exterior_mass(i, !inside));
            acc.value()
        });
        let phase = cells.iter().map(|&c| ind[c]).collect();
        Self { disc, cells, phase, delta }
    }

    /// Flips entry `k` and updates the deltas of the tracked entries.
    fn flip(&mut self, k: usize, tracked: &[usize]) {
        let i = self.cells[k];
        let old = self.phase[k];
        for &t in tracked {
            if t == k {
                continue;
            }
            let w = self.disc.table.weight(i, self.cells[t]);
            if self.phase[t] == old {
                self.delta[t] -= 2.0 * w;
            } else {
                self.delta[t] += 2.0 * w;
            }
        }
        self.delta[k] = -self.delta[k];
        self.phase[k] = -old;
    }
}

/// Forces the phase where `|u| > δ_flip` and lowers the perimeter over the
/// zero set; ties keep the incumbent phase.
pub fn update_phase(u: &DiscreteFunction, e: &PhaseSet, disc: &Discretization, params: &SolverParams) -> Result<PhaseSet> {
    if **u.grid() != **e.grid() || **disc.grid() != **e.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = e.grid();
    let mut ind = e.indicator().to_vec();
    let mut zero = Vec::new();
    for c in grid.omega_cells() {
        let v = u.values()[c];
        if v > params.zero_threshold {
            ind[c] = 1;
        } else if v < -params.zero_threshold {
            ind[c] = -1;
        } else {
            zero.push(c);
        }
    }
    let forced = e.with_indicator(ind);
    if zero.is_empty() {
        return Ok(forced);
    }
    let mut state = FlipState::new(disc, &forced, zero.clone());
    let all: Vec<usize> = (0..zero.len()).collect();
    let scale = state.delta.iter().fold(0.0f64, |a, d| a.max(d.abs())).max(1e-300);
    let eps = 1e-12 * scale;
    if params.flip_strategy == FlipStrategy::ExhaustiveOnZeroSet && zero.len() <= EXHAUSTIVE_ZERO_SET_LIMIT {
        // Gray-code walk over all patterns of the zero set
        let z = zero.len();
        let start = state.phase.clone();
        let mut offset = 0.0;
        let mut best = (0.0, 0u32);
        let mut code = 0u32;
        for step in 1u32..(1u32 << z) {
            let bit = step.trailing_zeros() as usize;
            offset += state.delta[bit];
            state.flip(bit, &all);
            code ^= 1 << bit;
            if offset < best.0 - eps {
                best = (offset, code);
            }
        }
        let mut ind = forced.indicator().to_vec();
        for (k, &c) in zero.iter().enumerate() {
            ind[c] = if best.1 & (1 << k) != 0 { -start[k] } else { start[k] };
        }
        return Ok(forced.with_indicator(ind));
    }
    loop {
        let (k, _) = state
            .delta
            .iter()
            .copied()
            .enumerate()
            .fold((usize::MAX, -eps), |acc, (k, d)| if d < acc.1 { (k, d) } else { acc });
        if k == usize::MAX {
            break;
        }
        state.flip(k, &all);
    }
    let mut ind = forced.indicator().to_vec();
    for (k, &c) in zero.iter().enumerate() {
        ind[c] = state.phase[k];
    }
    Ok(forced.with_indicator(ind))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Termination {
    Converged,
    MaxIterations,
    Stalled,
    Exhaustive,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub pair: AdmissiblePair,
    pub energy: EnergyBreakdown,
    /// Per outer iteration of the winning start.
    pub trace: Vec<EnergyBreakdown>,
    /// Final total of every start, in start order.
    pub start_energies: Vec<f64>,
    pub best_start: usize,
    pub termination: Termination,
    pub outer_iterations: usize,
    pub qp_solves: usize,
    pub kkt_residual: f64,
    /// Bound guaranteed for the projected gradient (fractional-Laplacian units).
    pub kkt_bound: f64,
    /// `(pattern, total)` for every phase pattern, brute force only.
    pub landscape: Option<Vec<(u64, f64)>>,
}

struct Context<'a> {
    q: QuadraticForm,
    template: DiscreteFunction,
    tables: &'a Tables,
    params: &'a SolverParams,
    volume: f64,
}

struct Candidate {
    e: PhaseSet,
    x: Vec<f64>,
    reduced: f64,
    kkt: f64,
}

impl<'a> Context<'a> {
    fn new(e: &PhaseSet, tables: &'a Tables, params: &'a SolverParams) -> Result<Self> {
        let template = datum_function(&tables.s, e)?;
        let q = QuadraticForm::build(&tables.s, &template)?;
        Ok(Self { q, template, tables, params, volume: e.grid().cell_volume() })
    }

    fn perimeter(&self, e: &PhaseSet) -> Result<[f64; 3]> {
        perimeter_terms(e, e.grid().omega(), &self.tables.sigma)
    }

    fn evaluate(&self, e: PhaseSet, warm: Option<&[f64]>) -> Result<Candidate> {
        let phase = omega_phase(&e, &self.q.cells);
        let sol = solve_qp(&self.q, &phase, warm, self.volume, self.params)?;
        let t = self.perimeter(&e)?;
        let reduced = self.q.reduced_value(&sol.x) + t[0] + t[1] + t[2];
        Ok(Candidate { e, x: sol.x, reduced, kkt: sol.kkt_residual })
    }

    fn breakdown(&self, c: &Candidate) -> Result<EnergyBreakdown> {
        let t = self.perimeter(&c.e)?;
        let gagliardo = self.q.value(&c.x);
        let mut ext = CompensatedSum::new();
        for (&cell, &v) in self.q.cells.iter().zip(&c.x) {
            ext.add(2.0 * self.tables.s.exterior_square(cell, v));
        }
        let perimeter = t[0] + t[1] + t[2];
        Ok(EnergyBreakdown {
            gagliardo,
            perimeter,
            total: gagliardo + perimeter,
            gagliardo_exterior: ext.value(),
            perimeter_terms: t,
        })
    }

    fn pair(&self, c: &Candidate) -> Result<AdmissiblePair> {
        let u = assemble_function(&self.template, &self.q.cells, &c.x)?;
        make_pair(u, c.e.clone(), crate::model::DEFAULT_SIGN_TOLERANCE)
    }

    fn function(&self, c: &Candidate) -> Result<DiscreteFunction> {
        assemble_function(&self.template, &self.q.cells, &c.x)
    }
}

struct StartResult {
    best: Candidate,
    trace: Vec<EnergyBreakdown>,
    termination: Termination,
    iterations: usize,
    solves: usize,
}

fn run_start(ctx: &Context<'_>, start: PhaseSet) -> Result<StartResult> {
    let params = ctx.params;
    let mut solves = 1;
    let mut cur = ctx.evaluate(start, None)?;
    let mut trace = vec![ctx.breakdown(&cur)?];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    while iterations < params.max_outer_iters {
        iterations += 1;
        let u = ctx.function(&cur)?;
        let next_e = update_phase(&u, &cur.e, &ctx.tables.sigma, params)?;
        let mut improved = false;
        if next_e.indicator() != cur.e.indicator() {
            let cand = ctx.evaluate(next_e, Some(&cur.x))?;
            solves += 1;
            if cand.reduced < cur.reduced - params.energy_stall_tolerance * (1.0 + cur.reduced.abs()) {
                cur = cand;
                improved = true;
            }
        }
        if !improved && params.energy_flips {
            // zero cells whose sign constraint binds: try the other phase
            let g = ctx.q.gradient(&cur.x);
            let phase = omega_phase(&cur.e, &ctx.q.cells);
            let mut cands: Vec<(f64, usize)> = (0..ctx.q.len())
                .filter(|&k| cur.x[k] == 0.0 && (phase[k] as f64) * g[k] > 0.0)
                .map(|k| (-(phase[k] as f64) * g[k], k))
                .collect();
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for &(_, k) in cands.iter().take(8) {
                let mut ind = cur.e.indicator().to_vec();
                let c = ctx.q.cells[k];
                ind[c] = -ind[c];
                let cand = ctx.evaluate(cur.e.with_indicator(ind), Some(&cur.x))?;
                solves += 1;
                if cand.reduced < cur.reduced - params.energy_stall_tolerance * (1.0 + cur.reduced.abs()) {
                    cur = cand;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            termination = Termination::Converged;
            break;
        }
        trace.push(ctx.breakdown(&cur)?);
    }
    Ok(StartResult { best: cur, trace, termination, iterations, solves })
}

fn starting_phases(init: &AdmissiblePair, ctx: &Context<'_>, params: &SolverParams) -> Result<Vec<PhaseSet>> {
    let e = &init.e;
    let grid = e.grid();
    let cells = &ctx.q.cells;
    let datum = e.datum();
    let mut out: Vec<PhaseSet> = vec![e.clone()];
    let mut datum_ind = e.indicator().to_vec();
    for &c in cells {
        datum_ind[c] = if datum.in_set(&grid.center(c))? { 1 } else { -1 };
    }
    out.push(e.with_indicator(datum_ind.clone()));
    // sign of the unconstrained minimizer
    let k = ctx.q.len();
    if k > 0 {
        if let Some(ch) = Cholesky::factor(k, ctx.q.a.clone()) {
            let free = ch.solve(&ctx.q.b);
            let mut ind = datum_ind.clone();
            for (p, &c) in cells.iter().enumerate() {
                if free[p] > 0.0 {
                    ind[c] = 1;
                } else if free[p] < 0.0 {
                    ind[c] = -1;
                }
            }
            out.push(e.with_indicator(ind));
        }
    }
    let mut flipped = datum_ind.clone();
    for &c in cells {
        flipped[c] = -flipped[c];
    }
    out.push(e.with_indicator(flipped));
    for r in 0..params.random_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(r as u64));
        let mut ind = datum_ind.clone();
        for &c in cells {
            ind[c] = if rng.random::<bool>() { 1 } else { -1 };
        }
        out.push(e.with_indicator(ind));
    }
    let mut unique: Vec<PhaseSet> = Vec::new();
    for p in out {
        if !unique.iter().any(|q| q.indicator() == p.indicator()) {
            unique.push(p);
        }
    }
    Ok(unique)
}

fn check_inputs(init: &AdmissiblePair, params: &FractionalParams, tables: &Tables, sp: &SolverParams) -> Result<()> {
    sp.validate()?;
    params.validate()?;
    if (tables.s.alpha() - 2.0 * params.s).abs() > 1e-14 || (tables.sigma.alpha() - params.sigma).abs() > 1e-14 {
        return Err(Error::Parameter("table exponents do not match (2s, σ)".into()));
    }
    if **tables.s.grid() != **init.grid() || **tables.sigma.grid() != **init.grid() {
        return Err(Error::GridMismatch);
    }
    if **tables.s.tail.datum() != **init.u.datum() {
        return Err(Error::Parameter("tables are bound to a different exterior datum".into()));
    }
    Ok(())
}

/// Alternating minimization from several starting phases; returns the best.
pub fn alternate_minimize(
    init: &AdmissiblePair,
    params: &FractionalParams,
    tables: &Tables,
    sp: &SolverParams,
) -> Result<SolveReport> {
    check_inputs(init, params, tables, sp)?;
    let ctx = Context::new(&init.e, tables, sp)?;
    let starts = starting_phases(init, &ctx, sp)?;
    let mut results = Vec::with_capacity(starts.len());
    for s in starts {
        results.push(run_start(&ctx, s)?);
    }
    let mut best = 0;
    for (k, r) in results.iter().enumerate() {
        if r.best.reduced < results[best].best.reduced {
            best = k;
        }
    }
    let start_energies: Vec<f64> = results.iter().map(|r| r.best.reduced + ctx.q.c).collect();
    let qp_solves = results.iter().map(|r| r.solves).sum();
    let outer_iterations = results.iter().map(|r| r.iterations).sum();
    let win = results.swap_remove(best);
    let energy = ctx.breakdown(&win.best)?;
    Ok(SolveReport {
        pair: ctx.pair(&win.best)?,
        energy,
        trace: win.trace,
        start_energies,
        best_start: best,
        termination: win.termination,
        outer_iterations,
        qp_solves,
        kkt_residual: win.best.kkt,
        kkt_bound: sp.qp_tolerance,
        landscape: None,
    })
}

/// Global minimizer over all `2^N` phase patterns of the Ω cells.
pub fn brute_force_minimize(
    init: &AdmissiblePair,
    params: &FractionalParams,
    tables: &Tables,
    sp: &SolverParams,
    limit: usize,
) -> Result<SolveReport> {
    check_inputs(init, params, tables, sp)?;
    let ctx = Context::new(&init.e, tables, sp)?;
    let cells = ctx.q.cells.clone();
    let n = cells.len();
    if n > limit || n >= 63 {
        return Err(Error::TooLarge { cells: n, limit });
    }
    let base = init.e.indicator().to_vec();
    let count = 1usize << n;
    let runs: Vec<Result<Candidate>> = par::map_range(count, |pattern| {
        let mut ind = base.clone();
        for (k, &c) in cells.iter().enumerate() {
            ind[c] = if pattern & (1 << k) != 0 { 1 } else { -1 };
        }
        ctx.evaluate(init.e.with_indicator(ind), None)
    });
    let mut cands = Vec::with_capacity(count);
    for r in runs {
        cands.push(r?);
    }
    let mut best = 0;
    for (k, c) in cands.iter().enumerate() {
        if c.reduced < cands[best].reduced {
            best = k;
        }
    }
    let landscape: Vec<(u64, f64)> = cands.iter().enumerate().map(|(k, c)| (k as u64, c.reduced + ctx.q.c)).collect();
    let win = cands.swap_remove(best);
    let energy = ctx.breakdown(&win)?;
    Ok(SolveReport {
        pair: ctx.pair(&win)?,
        energy,
        trace: vec![energy],
        start_energies: vec![energy.total],
        best_start: best,
        termination: Termination::Exhaustive,
        outer_iterations: 0,
        qp_solves: count,
        kkt_residual: win.kkt,
        kkt_bound: sp.qp_tolerance,
        landscape: Some(landscape),
    })
}

/// Phase vector of a pattern index, for reading a brute-force landscape.
pub fn pattern_phase(pattern: u64, n: usize) -> Vec<i8> {
    (0..n).map(|k| if pattern & (1 << k) != 0 { 1 } else { -1 }).collect()
}
