//! Experiment pipelines.

use std::path::PathBuf;
use std::sync::Arc;

use fracfree_core::energy::{gagliardo_energy_in, total_energy, total_energy_in, EnergyBreakdown, Tables};
use fracfree_core::extension::{cone_defect_fields, extend_scalar, extend_set, free_boundary_at_origin, weiss_profile, HalfGrid, WeissProfile};
use fracfree_core::model::{
    build_grid, make_pair, rescale_pair, sample_datum, AdmissiblePair, DatumKind, DiscreteFunction, ExteriorDatum,
    FractionalParams, Grid, GridSpec, DEFAULT_SIGN_TOLERANCE,
};
use fracfree_core::operators::{frac_laplacian, harmonicity_residual};
use fracfree_core::solver::{alternate_minimize, brute_force_minimize, SolveReport, SolverParams};
use fracfree_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cache::{TableCache, TableSource};
use crate::config::{Experiment, ExperimentConfig, ProfileSource};
use crate::instances::{halfspace_cone, lower_bounded_datum, random_datum, upper_bounded_datum};
use crate::report::{num, ExperimentReport, Status, Stopwatch, Table};

/// Tolerances of the built-in verdicts.
pub mod tol {
    /// Alternating result may undercut the oracle by at most this much.
    pub const ORACLE_FLOOR: f64 = 1e-9;
    /// Alternating result counts as a match within this gap.
    pub const ORACLE_MATCH: f64 = 1e-6;
    /// Share of instances that must match the oracle.
    pub const ORACLE_HIT_SHARE: f64 = 0.9;
    pub const COMPARISON: f64 = 1e-6;
    /// Residual bound in multiples of the QP KKT bound.
    pub const HARMONIC_FACTOR: f64 = 10.0;
    pub const REMARK_LEVEL: f64 = 0.5;
    pub const WEISS_SLACK: f64 = 1e-3;
    pub const WEISS_MIN_RADII: usize = 8;
    pub const WEISS_FLAT: f64 = 0.02;
    pub const SCALING: f64 = 1e-10;
    pub const DYDA_THRESHOLD: f64 = 0.05;
    /// Slack on `-σ` of the cone-defect decay exponent.
    pub const CONE_SLACK: f64 = 0.6;
    /// Tolerance on the sign of the cone defect, relative to its largest value.
    pub const CONE_SIGN: f64 = 1e-6;
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn is_non_convergence(&self) -> bool {
        matches!(self, RunError::Core(Error::NonConvergence { .. }))
    }
}

pub type RunResult<T> = Result<T, RunError>;

/// Runs `cfg` into `dir` and writes the report. The report is returned even
/// when the pipeline fails; its status then says why.
pub fn run_in_dir(cfg: &ExperimentConfig, dir: PathBuf) -> RunResult<ExperimentReport> {
    std::fs::create_dir_all(&dir)?;
    let mut report = ExperimentReport::new(cfg.clone(), dir);
    let source = TableSource::new(cfg.cache_dir.as_ref().map(TableCache::new));
    let mut clock = Stopwatch::start();
    let outcome = Runner { cfg, source }.run(&mut report);
    clock.lap(&mut report, "total_seconds");
    if let Err(e) = &outcome {
        report.status = if e.is_non_convergence() { Status::NonConvergence } else { Status::Failed };
        report.error = Some(e.to_string());
    }
    report.finish()?;
    outcome.map(|_| report)
}

/// Creates `<outdir>/<experiment>-<timestamp>` and runs there.
pub fn run_experiment(cfg: &ExperimentConfig) -> RunResult<ExperimentReport> {
    run_in_dir(cfg, fresh_dir(cfg)?)
}

fn fresh_dir(cfg: &ExperimentConfig) -> std::io::Result<PathBuf> {
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{}-{stamp}", cfg.experiment.name());
    std::fs::create_dir_all(&cfg.outdir)?;
    for k in 0.. {
        let name = if k == 0 { base.clone() } else { format!("{base}-{k}") };
        let dir = cfg.outdir.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

struct Runner<'a> {
    cfg: &'a ExperimentConfig,
    source: TableSource,
}

/// A solved instance together with the tables it used.
struct Solved {
    rep: SolveReport,
    tables: Tables,
}

fn omega_extremes(u: &DiscreteFunction) -> (f64, f64) {
    let g = u.grid();
    g.omega_cells()
        .into_iter()
        .map(|c| u.values()[c])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn trace_table(trace: &[EnergyBreakdown]) -> Table {
    let mut t = Table::new(&["iter", "gagliardo", "perimeter", "total"]);
    for (k, b) in trace.iter().enumerate() {
        t.row(vec![k.to_string(), num(b.gagliardo), num(b.perimeter), num(b.total)]);
    }
    t
}

fn profile_table(p: &WeissProfile) -> Table {
    let mut t = Table::new(&["r", "G", "H", "Phi"]);
    for k in 0..p.radii.len() {
        t.row(vec![num(p.radii[k]), num(p.g[k]), num(p.h[k]), num(p.phi[k])]);
    }
    t
}

fn energy_json(b: &EnergyBreakdown) -> serde_json::Value {
    serde_json::json!({
        "gagliardo": b.gagliardo,
        "perimeter": b.perimeter,
        "total": b.total,
        "gagliardo_exterior": b.gagliardo_exterior,
        "perimeter_terms": b.perimeter_terms,
    })
}

/// `Φ(r_{k+1}) ≥ Φ(r_k) - slack · max|Φ|` for every consecutive pair.
pub fn monotone_within(phi: &[f64], slack: f64) -> (bool, f64) {
    let scale = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let worst = phi.windows(2).map(|w| w[0] - w[1]).fold(f64::NEG_INFINITY, f64::max);
    (phi.windows(2).all(|w| w[1] >= w[0] - slack * scale), worst / scale)
}

/// `(max - min) / max|Φ|`.
pub fn relative_spread(phi: &[f64]) -> f64 {
    let hi = phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = phi.iter().cloned().fold(f64::INFINITY, f64::min);
    let scale = phi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (hi - lo) / scale
}

impl Runner<'_> {
    fn params(&self) -> FractionalParams {
        self.cfg.params()
    }

    fn grid(&self) -> RunResult<Arc<Grid>> {
        Ok(Arc::new(build_grid(self.cfg.spec())?))
    }

    fn datum(&self) -> Arc<ExteriorDatum> {
        Arc::new(self.cfg.datum.clone().expect("validated config carries a datum"))
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed)
    }

    fn sp(&self) -> &SolverParams {
        &self.cfg.solver
    }

    fn tables(&self, g: &Arc<Grid>, d: &Arc<ExteriorDatum>) -> RunResult<Tables> {
        Ok(self.source.tables(g, d, &self.params(), self.cfg.quadrature_tol)?)
    }

    /// Zero function on Ω with the datum's phase, admissible for every datum.
    fn start(&self, g: &Arc<Grid>, d: &Arc<ExteriorDatum>) -> RunResult<AdmissiblePair> {
        let (_, e) = sample_datum(d, g)?;
        let zero = DiscreteFunction::new(g.clone(), d.clone(), vec![0.0; g.len()])?;
        Ok(make_pair(zero, e, DEFAULT_SIGN_TOLERANCE)?)
    }

    fn sampled(&self, g: &Arc<Grid>, d: &Arc<ExteriorDatum>) -> RunResult<AdmissiblePair> {
        let (u, e) = sample_datum(d, g)?;
        Ok(make_pair(u, e, DEFAULT_SIGN_TOLERANCE)?)
    }

    fn solve(&self, g: &Arc<Grid>, d: &Arc<ExteriorDatum>, base: Option<&Tables>) -> RunResult<Solved> {
        let tables = match base {
            Some(t) => t.rebind(d)?,
            None => self.tables(g, d)?,
        };
        let init = self.start(g, d)?;
        let rep = alternate_minimize(&init, &self.params(), &tables, self.sp())?;
        Ok(Solved { rep, tables })
    }

    fn solution_table(&self, s: &Solved) -> RunResult<Table> {
        let pair = &s.rep.pair;
        let g = pair.grid();
        let res = harmonicity_residual(pair, &s.tables.s, self.delta(&pair.u))?;
        let mut t = Table::new(&["cell", "x", "y", "omega", "u", "phase", "residual", "masked"]);
        for c in 0..g.len() {
            let p = g.center(c);
            t.row(vec![
                c.to_string(),
                num(p[0]),
                num(p[1]),
                (g.in_omega(c) as u8).to_string(),
                num(pair.u.values()[c]),
                pair.e.phase(c).to_string(),
                num(res.values[c]),
                (res.mask[c] as u8).to_string(),
            ]);
        }
        Ok(t)
    }

    fn delta(&self, u: &DiscreteFunction) -> f64 {
        self.cfg.options.residual_fraction * u.max_abs_omega()
    }

    fn run(&self, report: &mut ExperimentReport) -> RunResult<()> {
        match self.cfg.experiment {
            Experiment::Energy => self.energy(report),
            Experiment::Minimize => self.minimize(report),
            Experiment::Oracle => self.oracle(report),
            Experiment::Comparison => self.comparison(report),
            Experiment::RemarkR => self.remark_r(report),
            Experiment::Plateau => self.plateau(report),
            Experiment::WeissScan => self.weiss_scan(report),
            Experiment::Blowup => self.blowup(report),
            Experiment::Cone2d => self.cone2d(report),
            Experiment::Dyda => self.dyda(report),
            Experiment::EnergyBound => self.energy_bound(report),
        }
    }

    fn energy(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let d = self.datum();
        let pair = self.sampled(&g, &d)?;
        let tables = self.tables(&g, &d)?;
        let b = total_energy(&pair, &self.params(), &tables)?;
        report.set("energy", energy_json(&b));
        report.set("omega_cells", g.omega_cells().len());
        let mut t = Table::new(&["cell", "x", "y", "u", "phase"]);
        for c in 0..g.len() {
            let p = g.center(c);
            t.row(vec![c.to_string(), num(p[0]), num(p[1]), num(pair.u.values()[c]), pair.e.phase(c).to_string()]);
        }
        report.csv("field.csv", &t)?;
        let scale = b.gagliardo.abs() + b.perimeter.abs();
        report.verdict(
            "finite_nonnegative",
            b.total.is_finite() && b.gagliardo >= -1e-12 * scale && b.perimeter >= -1e-12 * scale,
            format!("gagliardo {:e}, perimeter {:e}", b.gagliardo, b.perimeter),
        );
        Ok(())
    }

    fn minimize(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let d = self.datum();
        let s = self.solve(&g, &d, None)?;
        self.report_solution(report, &s)?;
        let res = harmonicity_residual(&s.rep.pair, &s.tables.s, self.delta(&s.rep.pair.u))?;
        let bound = tol::HARMONIC_FACTOR * s.rep.kkt_bound;
        report.set("residual_max", res.max);
        report.set("residual_l2", res.l2);
        report.set("residual_cells", res.masked_cells().len());
        report.verdict(
            "s_harmonic",
            res.max < bound,
            format!("max residual {:e} on {} cells, bound {:e}", res.max, res.masked_cells().len(), bound),
        );
        let tr = &s.rep.trace;
        let slack = 1e-9 * (1.0 + tr.first().map_or(0.0, |b| b.total.abs()));
        report.verdict(
            "trace_nonincreasing",
            tr.windows(2).all(|w| w[1].total <= w[0].total + slack),
            format!("{} iterations", tr.len()),
        );
        Ok(())
    }

    fn report_solution(&self, report: &mut ExperimentReport, s: &Solved) -> RunResult<()> {
        let r = &s.rep;
        report.set("energy", energy_json(&r.energy));
        report.set("termination", format!("{:?}", r.termination));
        report.set("outer_iterations", r.outer_iterations);
        report.set("qp_solves", r.qp_solves);
        report.set("kkt_residual", r.kkt_residual);
        report.set("kkt_bound", r.kkt_bound);
        report.set("start_energies", &r.start_energies);
        report.set("best_start", r.best_start);
        let (lo, hi) = omega_extremes(&r.pair.u);
        report.set("min_u", lo);
        report.set("max_u", hi);
        report.csv("trace.csv", &trace_table(&r.trace))?;
        report.csv("solution.csv", &self.solution_table(s)?)?;
        Ok(())
    }

    fn oracle(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let n = g.dim();
        let mut rng = self.rng();
        let probe = Arc::new(ExteriorDatum::constant(n, 0.0));
        let base = self.tables(&g, &probe)?;
        let mut t = Table::new(&["instance", "alternate", "oracle", "gap", "alternate_qp_solves", "oracle_qp_solves"]);
        let (mut floor_ok, mut hits, mut worst) = (true, 0usize, f64::NEG_INFINITY);
        let count = self.cfg.options.instances;
        for k in 0..count {
            let d = Arc::new(random_datum(n, g.half_width(), &mut rng));
            let alt = self.solve(&g, &d, Some(&base))?;
            let init = self.start(&g, &d)?;
            let orc = brute_force_minimize(&init, &self.params(), &alt.tables, self.sp(), self.cfg.options.oracle_limit)?;
            let (a, o) = (alt.rep.energy.total, orc.energy.total);
            let gap = a - o;
            floor_ok &= gap >= -tol::ORACLE_FLOOR;
            hits += (gap <= tol::ORACLE_MATCH) as usize;
            worst = worst.max(gap);
            t.row(vec![
                k.to_string(),
                num(a),
                num(o),
                num(gap),
                alt.rep.qp_solves.to_string(),
                orc.qp_solves.to_string(),
            ]);
        }
        report.csv("instances.csv", &t)?;
        report.set("instances", count);
        report.set("matches", hits);
        report.set("worst_gap", worst);
        report.verdict("never_below_oracle", floor_ok, format!("tolerance {:e}", tol::ORACLE_FLOOR));
        let need = (tol::ORACLE_HIT_SHARE * count as f64).ceil() as usize;
        report.verdict(
            "matches_oracle",
            hits >= need,
            format!("{hits}/{count} within {:e}, need {need}", tol::ORACLE_MATCH),
        );
        Ok(())
    }

    fn comparison(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let n = g.dim();
        let l = g.half_width();
        let mut rng = self.rng();
        let probe = Arc::new(ExteriorDatum::constant(n, 0.0));
        let base = self.tables(&g, &probe)?;
        let mut t = Table::new(&["bound", "side", "instance", "min_u", "max_u", "total", "pass"]);
        let mut all = true;
        let mut worst = 0.0f64;
        for &a in &self.cfg.options.thresholds {
            for lower in [true, false] {
                for k in 0..self.cfg.options.instances {
                    let d = if lower {
                        lower_bounded_datum(a, n, l, &mut rng)
                    } else {
                        upper_bounded_datum(a, n, l, &mut rng)
                    };
                    let s = self.solve(&g, &Arc::new(d), Some(&base))?;
                    let (lo, hi) = omega_extremes(&s.rep.pair.u);
                    let excess = if lower { a - lo } else { hi - a };
                    let pass = excess <= tol::COMPARISON;
                    all &= pass;
                    worst = worst.max(excess);
                    t.row(vec![
                        num(a),
                        (if lower { "lower" } else { "upper" }).to_string(),
                        k.to_string(),
                        num(lo),
                        num(hi),
                        num(s.rep.energy.total),
                        (pass as u8).to_string(),
                    ]);
                }
            }
        }
        report.csv("instances.csv", &t)?;
        report.set("worst_violation", worst);
        report.verdict("bounds_respected", all, format!("worst violation {worst:e}, tolerance {:e}", tol::COMPARISON));
        if let Some(d) = &self.cfg.datum {
            let s = self.solve(&g, &Arc::new(d.clone()), Some(&base))?;
            let (lo, hi) = omega_extremes(&s.rep.pair.u);
            report.set("configured_min_u", lo);
            report.set("configured_max_u", hi);
            if let DatumKind::Constant { value } = d.kind {
                if d.bumps.is_empty() {
                    let dev = (lo - value).abs().max((hi - value).abs());
                    report.verdict("constant_datum_reproduced", dev <= tol::COMPARISON, format!("deviation {dev:e}"));
                }
            }
        }
        Ok(())
    }

    fn remark_r(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let d = self.datum();
        let s = self.solve(&g, &d, None)?;
        self.report_solution(report, &s)?;
        let pair = &s.rep.pair;
        let cells = g.omega_cells();
        let plus = cells.iter().filter(|&&c| pair.e.phase(c) == 1).count();
        let minus = cells.len() - plus;
        let low = cells.iter().map(|&c| pair.u.values()[c].abs()).fold(f64::INFINITY, f64::min);
        report.set("plus_cells", plus);
        report.set("minus_cells", minus);
        report.set("min_abs_u", low);
        report.verdict("both_phases", plus > 0 && minus > 0, format!("{plus} cells in E, {minus} outside"));
        report.verdict(
            "not_an_indicator",
            low <= tol::REMARK_LEVEL,
            format!("min |u| on Ω is {low}, level {}", tol::REMARK_LEVEL),
        );
        Ok(())
    }

    fn plateau(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let mut rng = self.rng();
        let probe = Arc::new(ExteriorDatum::constant(1, 0.0));
        let base = self.tables(&g, &probe)?;
        let s_exp = self.params().s;
        let mut t = Table::new(&["instance", "zero_cells", "single_cell_residual", "kkt_bound", "pass"]);
        let mut all = true;
        let mut plateaus = 0;
        for k in 0..self.cfg.options.instances {
            let d = Arc::new(random_datum(1, g.half_width(), &mut rng));
            let s = self.solve(&g, &d, Some(&base))?;
            let u = &s.rep.pair.u;
            let zeros: Vec<usize> =
                g.omega_cells().into_iter().filter(|&c| u.values()[c].abs() <= self.sp().zero_threshold).collect();
            let bound = tol::HARMONIC_FACTOR * s.rep.kkt_bound;
            let single = if zeros.len() == 1 && !g.on_box_boundary(zeros[0]) {
                Some(frac_laplacian(u, zeros[0], &s.tables.s, s_exp)?.abs())
            } else {
                None
            };
            let pass = !single.is_some_and(|r| r > bound);
            all &= pass;
            plateaus += (zeros.len() >= 2) as usize;
            t.row(vec![
                k.to_string(),
                zeros.len().to_string(),
                single.map_or(String::new(), num),
                num(s.rep.kkt_bound),
                (pass as u8).to_string(),
            ]);
        }
        report.csv("instances.csv", &t)?;
        report.set("plateaus", plateaus);
        report.verdict(
            "no_isolated_unbalanced_zero",
            all,
            format!("single-cell zero sets must satisfy |(-Δ)^s u| ≤ {} × kkt bound", tol::HARMONIC_FACTOR),
        );
        Ok(())
    }

    fn half_grid(&self, g: &Arc<Grid>) -> RunResult<Arc<HalfGrid>> {
        let top = self.cfg.options.extension_top.unwrap_or(g.half_width());
        Ok(Arc::new(HalfGrid::with_ratio(g.clone(), top, self.cfg.options.level_ratio)?))
    }

    fn radii(&self, half: &HalfGrid) -> Vec<f64> {
        if !self.cfg.options.radii.is_empty() {
            return self.cfg.options.radii.clone();
        }
        let top = half.reach();
        (0..9).map(|k| 0.25 * top * 4f64.powf(k as f64 / 8.0)).collect()
    }

    /// The pair whose Weiss profile is scanned.
    fn profile_pair(&self, report: &mut ExperimentReport) -> RunResult<(Arc<Grid>, AdmissiblePair)> {
        let g = self.grid()?;
        let d = self.datum();
        let pair = match self.cfg.options.profile_source {
            ProfileSource::Datum => self.sampled(&g, &d)?,
            ProfileSource::Minimizer => {
                let s = self.solve(&g, &d, None)?;
                self.report_solution(report, &s)?;
                s.rep.pair
            }
        };
        Ok((g, pair))
    }

    fn weiss_scan(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let (g, pair) = self.profile_pair(report)?;
        let at_origin = free_boundary_at_origin(&pair.e);
        report.verdict("free_boundary_at_origin", at_origin, "both phases within h/2 of 0");
        if !at_origin {
            return Ok(());
        }
        let half = self.half_grid(&g)?;
        let radii = self.radii(&half);
        let prof = weiss_profile(&pair, &radii, &self.params(), &half)?;
        report.csv("profile.csv", &profile_table(&prof))?;
        report.set("levels", half.len());
        report.set("reach", half.reach());
        let spread = relative_spread(&prof.phi);
        report.set("relative_spread", spread);
        match self.cfg.options.profile_source {
            ProfileSource::Minimizer => {
                let (ok, worst) = monotone_within(&prof.phi, tol::WEISS_SLACK);
                report.set("worst_relative_drop", worst);
                report.verdict(
                    "monotone",
                    ok && radii.len() >= tol::WEISS_MIN_RADII,
                    format!(
                        "{} radii, worst drop {worst:e} of max|Φ|, slack {:e}, need {} radii",
                        radii.len(),
                        tol::WEISS_SLACK,
                        tol::WEISS_MIN_RADII
                    ),
                );
            }
            ProfileSource::Datum => {
                report.verdict(
                    "flat",
                    spread < tol::WEISS_FLAT,
                    format!("spread {spread:e} of max|Φ|, tolerance {}", tol::WEISS_FLAT),
                );
            }
        }
        Ok(())
    }

    fn blowup(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let (g, pair) = self.profile_pair(report)?;
        let params = self.params();
        let at_origin = free_boundary_at_origin(&pair.e);
        report.verdict("free_boundary_at_origin", at_origin, "both phases within h/2 of 0");
        if !at_origin {
            return Ok(());
        }
        let half = self.half_grid(&g)?;
        let top = self.cfg.options.extension_top.unwrap_or(g.half_width());
        let t0 = self.cfg.options.blowup_radius;
        let tables = self.tables(&g, pair.u.datum())?;
        let omega = g.omega().to_vec();
        let energy = total_energy_in(&pair, &omega, &params, &tables)?.total;
        let n = g.dim() as f64;
        let mut t =
            Table::new(&["r", "t", "phi_direct", "phi_rescaled", "energy_rescaled", "energy_predicted"]);
        let (mut phi_ok, mut energy_ok) = (true, true);
        let (mut phi_err, mut energy_err) = (0.0f64, 0.0f64);
        for &r in &self.cfg.options.scales {
            let scaled = rescale_pair(&pair, r, &params)?;
            let gr = scaled.grid().clone();
            let half_r = Arc::new(HalfGrid::with_ratio(gr.clone(), top / r, self.cfg.options.level_ratio)?);
            let direct = weiss_profile(&pair, &[r * t0], &params, &half)?.phi[0];
            let rescaled = weiss_profile(&scaled, &[t0], &params, &half_r)?.phi[0];
            let tables_r = self.tables(&gr, scaled.u.datum())?;
            let er = total_energy_in(&scaled, gr.omega(), &params, &tables_r)?.total;
            let predicted = r.powf(params.sigma - n) * energy;
            let pe = (direct - rescaled).abs() / direct.abs().max(f64::MIN_POSITIVE);
            let ee = (er - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE);
            phi_ok &= pe <= tol::SCALING;
            energy_ok &= ee <= tol::SCALING;
            phi_err = phi_err.max(pe);
            energy_err = energy_err.max(ee);
            t.row(vec![num(r), num(t0), num(direct), num(rescaled), num(er), num(predicted)]);
        }
        report.csv("blowup.csv", &t)?;
        let radii = self.radii(&half);
        let prof = weiss_profile(&pair, &radii, &params, &half)?;
        report.csv("profile.csv", &profile_table(&prof))?;
        report.set("energy", energy);
        report.verdict("phi_scaling", phi_ok, format!("worst relative error {phi_err:e}, tolerance {:e}", tol::SCALING));
        report.verdict(
            "energy_scaling",
            energy_ok,
            format!("worst relative error {energy_err:e}, tolerance {:e}", tol::SCALING),
        );
        Ok(())
    }

    fn cone2d(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let params = self.params();
        let d = match &self.cfg.datum {
            Some(d) => Arc::new(d.clone()),
            // degree 0 is the halfplane indicator, whose exterior integrals are closed form
            None if params.cone_degree() == 0.0 => Arc::new(ExteriorDatum::indicator_halfspace(2, [1.0, 0.0], 0.0)),
            None => Arc::new(halfspace_cone(2, params.cone_degree())),
        };
        let pair = self.sampled(&g, &d)?;
        let half = self.half_grid(&g)?;
        report.set("levels", half.len());
        report.set("reach", half.reach());
        let mut t = Table::new(&["R", "defect", "error"]);
        let mut values: Vec<(f64, Option<f64>)> = Vec::new();
        let ubar = extend_scalar(&pair.u, &half, params.s)?;
        let uset = extend_set(&pair.e, &half, params.sigma)?;
        for &r in &self.cfg.options.cone_radii {
            match cone_defect_fields(&ubar, &uset, r, params.c_ratio) {
                Ok(v) => {
                    t.row(vec![num(r), num(v), String::new()]);
                    values.push((r, Some(v)));
                }
                Err(e @ (Error::Geometry(_) | Error::OutOfRange { .. })) => {
                    t.row(vec![num(r), String::new(), e.to_string()]);
                    values.push((r, None));
                }
                Err(e) => return Err(e.into()),
            }
        }
        report.csv("defect.csv", &t)?;
        let scale = values.iter().filter_map(|v| v.1).fold(0.0f64, |a, v| a.max(v.abs()));
        let missing: Vec<String> = values.iter().filter(|v| v.1.is_none()).map(|v| num(v.0)).collect();
        let positive = missing.is_empty() && values.iter().all(|v| v.1.unwrap() >= -tol::CONE_SIGN * scale);
        report.verdict(
            "defect_positive",
            positive,
            if missing.is_empty() {
                format!("smallest defect {:e}", values.iter().filter_map(|v| v.1).fold(f64::INFINITY, f64::min))
            } else {
                format!("defect undefined at R = {}", missing.join(", "))
            },
        );
        let limit = -params.sigma + tol::CONE_SLACK;
        let mut decay_ok = missing.is_empty();
        let mut slopes = Vec::new();
        for w in values.windows(2) {
            if let ((r0, Some(a)), (r1, Some(b))) = (w[0], w[1]) {
                let slope = (b / a).log2() / (r1 / r0).log2();
                decay_ok &= slope <= limit;
                slopes.push(serde_json::json!({ "from": r0, "to": r1, "log2_ratio": slope }));
            }
        }
        report.set("slopes", &slopes);
        let shown: Vec<String> = slopes
            .iter()
            .map(|v| format!("{}->{}: {}", v["from"], v["to"], v["log2_ratio"]))
            .collect();
        report.verdict("decay", decay_ok, format!("log2 ratios [{}], limit {limit}", shown.join(", ")));
        Ok(())
    }

    fn dyda(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let s = self.params().s;
        let l = self.cfg.grid.half_width;
        let [lo, hi] = self.cfg.options.window;
        let d = Arc::new(ExteriorDatum::cone_1d(s, 1.0, 0.0));
        let mut t = Table::new(&["cells_per_side", "h", "max_residual", "window_cells"]);
        let mut seq = Vec::new();
        for &m in &self.cfg.options.refinements {
            let spec = GridSpec { cells_per_side: m, ..self.cfg.spec() };
            let g = Arc::new(build_grid(spec)?);
            let (u, _) = sample_datum(&d, &g)?;
            let disc = self.source.discretization(&g, &d, 2.0 * s, self.cfg.quadrature_tol)?;
            let cells: Vec<usize> = (0..g.len())
                .filter(|&c| {
                    let x = g.center(c)[0];
                    x >= lo && x <= hi && g.in_omega(c) && !g.on_box_boundary(c)
                })
                .collect();
            let mut worst = 0.0f64;
            for &c in &cells {
                worst = worst.max(frac_laplacian(&u, c, &disc, s)?.abs());
            }
            t.row(vec![m.to_string(), num(2.0 * l / m as f64), num(worst), cells.len().to_string()]);
            seq.push(worst);
        }
        report.csv("dyda.csv", &t)?;
        report.set("residuals", &seq);
        report.verdict("strictly_decreasing", seq.windows(2).all(|w| w[1] < w[0]), format!("{seq:?}"));
        let last = *seq.last().expect("validated refinements");
        report.verdict(
            "finest_below_threshold",
            last <= tol::DYDA_THRESHOLD,
            format!("{last:e} against {}", tol::DYDA_THRESHOLD),
        );
        Ok(())
    }

    fn energy_bound(&self, report: &mut ExperimentReport) -> RunResult<()> {
        let g = self.grid()?;
        let n = g.dim();
        let mut rng = self.rng();
        let probe = Arc::new(ExteriorDatum::constant(n, 0.0));
        let base = self.tables(&g, &probe)?;
        let params = self.params();
        let inner = g.ball_mask(self.cfg.options.inner_radius);
        let mut t = Table::new(&["instance", "energy_inner", "weighted_l2", "ratio"]);
        let mut ratios = Vec::new();
        for k in 0..self.cfg.options.instances {
            let d = Arc::new(random_datum(n, g.half_width(), &mut rng));
            let s = self.solve(&g, &d, Some(&base))?;
            let pair = &s.rep.pair;
            let e_in = gagliardo_energy_in(&pair.u, &inner, &s.tables.s)?
                + fracfree_core::energy::frac_perimeter_in(&pair.e, &inner, &s.tables.sigma)?;
            let vol = g.cell_volume();
            let wl2: f64 = (0..g.len())
                .map(|c| {
                    let x = g.center(c);
                    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                    pair.u.values()[c].powi(2) * vol / (1.0 + r.powf(n as f64 + 2.0 * params.s))
                })
                .sum();
            let ratio = e_in / (1.0 + wl2);
            ratios.push(ratio);
            t.row(vec![k.to_string(), num(e_in), num(wl2), num(ratio)]);
        }
        report.csv("instances.csv", &t)?;
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        report.set("max_ratio", max);
        report.set("ratios", &ratios);
        report.verdict("finite", ratios.iter().all(|r| r.is_finite()), format!("largest ratio {max:e}"));
        Ok(())
    }
}
