//! Acceptance checks. Each test prints one `[PASS]`/`[FAIL]` line and then
//! asserts it; tolerances are the constants below or `experiments::tol`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use fracfree::experiments::tol;
use fracfree::instances::random_datum;
use fracfree::report::read_csv;
use fracfree::{parse_config, run_in_dir, ExperimentConfig, ExperimentReport, Status};
use fracfree_core::energy::*;
use fracfree_core::model::*;
use fracfree_core::quadrature::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

const GOLDEN: f64 = 1e-6;
const PERIMETER: f64 = 1e-3;
const CROSS_TERM: f64 = 1e-6;
const WEIGHT_SCALING: f64 = 1e-12;

fn check(id: u32, name: &str, pass: bool, detail: impl AsRef<str>) {
    println!("[{}] {id:>2} {name}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
    assert!(pass, "criterion {id} ({name}) failed: {}", detail.as_ref());
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn config_file(name: &str) -> String {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Loads `configs/<name>` and overlays `patch` key by key.
fn config(name: &str, patch: Value) -> ExperimentConfig {
    let mut doc: Value = serde_json::from_str(&config_file(name)).unwrap();
    merge(&mut doc, patch);
    parse_config(&doc.to_string()).unwrap()
}

fn merge(into: &mut Value, patch: Value) {
    match (into, patch) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in b {
                merge(a.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

struct Run {
    report: ExperimentReport,
    dir: PathBuf,
    seconds: f64,
    _tmp: tempfile::TempDir,
}

impl Run {
    fn csv(&self, file: &str) -> Vec<std::collections::HashMap<String, String>> {
        let (header, rows) = read_csv(&self.dir.join(file)).unwrap();
        rows.into_iter().map(|r| header.iter().cloned().zip(r).collect()).collect()
    }

    fn result(&self, key: &str) -> f64 {
        self.report.results[key].as_f64().unwrap_or_else(|| panic!("{key} is not a number"))
    }

    fn verdicts(&self) -> String {
        self.report.verdicts.iter().map(|v| format!("{}={}", v.name, v.pass)).collect::<Vec<_>>().join(" ")
    }
}

fn run(cfg: &ExperimentConfig) -> Run {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let t = Instant::now();
    let report = run_in_dir(cfg, dir.clone()).unwrap_or_else(|e| panic!("{} failed: {e}", cfg.experiment.name()));
    Run { report, dir, seconds: t.elapsed().as_secs_f64(), _tmp: tmp }
}

fn f(row: &std::collections::HashMap<String, String>, col: &str) -> f64 {
    row[col].parse().unwrap_or_else(|_| panic!("{col} = {:?}", row[col]))
}

#[test]
fn c01_kernel_golden_values() {
    let t = Instant::now();
    let w = cell_pair_weight(&Cell::interval(0.0, 1.0), &Cell::interval(1.0, 2.0), 0.5, DEFAULT_TOL).unwrap();
    let region = ExteriorRegion::HalfLine { start: 2.0, positive: true };
    let tail = tail_weight(&Cell::interval(0.0, 1.0), &region, 0.5, DEFAULT_TOL).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let (ew, et) = (8.0 - 4.0 * 2f64.sqrt(), 4.0 * 2f64.sqrt() - 4.0);
    check(
        1,
        "kernel golden values",
        rel(w, ew) <= GOLDEN && rel(tail, et) <= GOLDEN && secs < 1.0,
        format!("pair {w} vs {ew}, tail {tail} vs {et}, {secs:.3}s"),
    );
}

#[test]
fn c02_halfline_perimeter() {
    let g = Arc::new(build_grid(GridSpec::new(1, 1.0, 32).with_truncation_radius(64.0)).unwrap());
    let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
    let (_, e) = sample_datum(&d, &g).unwrap();
    let disc = Discretization::build(&g, &d, 0.5, DEFAULT_TOL).unwrap();
    let p = frac_perimeter(&e, &disc, 0.5).unwrap();
    let expect = 4.0 * 2f64.sqrt();
    check(2, "half-line perimeter", rel(p, expect) <= PERIMETER, format!("{p} vs {expect}, R_out = 64"));
}

#[test]
fn c03_cross_term_identity() {
    let s = 0.25;
    let g = Arc::new(build_grid(GridSpec::new(1, 1.0, 24)).unwrap());
    let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
    let disc = Discretization::build(&g, &d, 2.0 * s, DEFAULT_TOL).unwrap();
    let (_, e0) = sample_datum(&d, &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let mut ind = e0.indicator().to_vec();
        for c in g.omega_cells() {
            ind[c] = if rng.random::<bool>() { 1 } else { -1 };
        }
        let e = PhaseSet::new(g.clone(), d.clone(), ind).unwrap();
        let vals = e.indicator().iter().map(|&p| p as f64).collect();
        let u = DiscreteFunction::new(g.clone(), d.clone(), vals).unwrap();
        let gag = gagliardo_energy(&u, &disc, s).unwrap();
        let per = frac_perimeter(&e, &disc, 2.0 * s).unwrap();
        worst = worst.max(rel(gag, 8.0 * per));
    }
    check(3, "cross-term identity", worst <= CROSS_TERM, format!("worst relative error {worst:e} over 10 sets"));
}

#[test]
fn c04_scaling_laws() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let alpha = rng.random_range(0.1..0.95);
        let r = rng.random_range(0.2..5.0);
        let (x, y) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let gap = rng.random_range(0.0..1.5);
        let pairs = [
            (Cell::interval(x, x + 0.5), Cell::interval(x + 0.5 + gap, x + 1.2 + gap), 1),
            (Cell::rect([x, y], [x + 0.5, y + 0.5]), Cell::rect([x + 0.5 + gap, y + gap], [x + 1.0 + gap, y + 0.7 + gap]), 2),
        ];
        for (a, b, n) in pairs {
            let w = cell_pair_weight(&a, &b, alpha, DEFAULT_TOL).unwrap();
            let ws = cell_pair_weight(&a.scaled(r), &b.scaled(r), alpha, DEFAULT_TOL).unwrap();
            worst = worst.max(rel(ws, r.powf(n as f64 - alpha) * w));
        }
    }
    let r = run(&config("blowup.json", json!({})));
    let rows = r.csv("blowup.csv");
    let (mut phi, mut energy) = (0.0f64, 0.0f64);
    for row in &rows {
        phi = phi.max(rel(f(row, "phi_rescaled"), f(row, "phi_direct")));
        energy = energy.max(rel(f(row, "energy_rescaled"), f(row, "energy_predicted")));
    }
    check(
        4,
        "scaling laws",
        worst <= WEIGHT_SCALING && phi <= tol::SCALING && energy <= tol::SCALING && rows.len() >= 2,
        format!("weights {worst:e}, energy {energy:e}, Phi {phi:e} over {} scales", rows.len()),
    );
}

#[test]
fn c05_dyda_sequence() {
    let r = run(&config("dyda.json", json!({})));
    let res: Vec<f64> = r.csv("dyda.csv").iter().map(|row| f(row, "max_residual")).collect();
    let decreasing = res.windows(2).all(|w| w[1] < w[0]);
    let last = *res.last().unwrap();
    check(
        5,
        "dyda refinement",
        res.len() == 3 && decreasing && last <= tol::DYDA_THRESHOLD && r.seconds < 30.0,
        format!("residuals {res:?}, {:.1}s", r.seconds),
    );
}

#[test]
fn c06_oracle_agreement() {
    let r = run(&config("oracle.json", json!({})));
    let rows = r.csv("instances.csv");
    let gaps: Vec<f64> = rows.iter().map(|row| f(row, "alternate") - f(row, "oracle")).collect();
    let floor = gaps.iter().all(|&g| g >= -tol::ORACLE_FLOOR);
    let hits = gaps.iter().filter(|&&g| g <= tol::ORACLE_MATCH).count();
    check(
        6,
        "oracle agreement",
        rows.len() == 20 && floor && hits >= 18 && r.seconds < 300.0,
        format!("{hits}/{} within {:e}, never below: {floor}, {:.1}s", rows.len(), tol::ORACLE_MATCH, r.seconds),
    );
}

#[test]
fn c07_comparison_principle() {
    let r = run(&config("comparison.json", json!({})));
    let rows = r.csv("instances.csv");
    let mut worst = f64::NEG_INFINITY;
    for row in &rows {
        let a = f(row, "bound");
        let excess = if row["side"] == "lower" { a - f(row, "min_u") } else { f(row, "max_u") - a };
        worst = worst.max(excess);
    }
    check(
        7,
        "comparison bounds",
        rows.len() == 60 && worst <= tol::COMPARISON,
        format!("{} instances, worst violation {worst:e}", rows.len()),
    );
}

#[test]
fn c08_minimizers_are_s_harmonic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut lines = Vec::new();
    let mut all = true;
    for _ in 0..5 {
        let mut cfg = config("minimize.json", json!({}));
        cfg.datum = Some(random_datum(1, cfg.grid.half_width, &mut rng));
        let r = run(&cfg);
        let bound = tol::HARMONIC_FACTOR * r.result("kkt_bound");
        let worst = r
            .csv("solution.csv")
            .iter()
            .filter(|row| row["masked"] == "1")
            .map(|row| f(row, "residual").abs())
            .fold(0.0, f64::max);
        all &= worst < bound;
        lines.push(format!("{worst:.1e}<{bound:.1e}"));
    }
    check(8, "s-harmonic away from the free boundary", all, lines.join(", "));
}

#[test]
fn c09_weiss_monotonicity() {
    let flat = run(&config("weiss-flat.json", json!({})));
    let phi: Vec<f64> = flat.csv("profile.csv").iter().map(|row| f(row, "Phi")).collect();
    let spread = fracfree::experiments::relative_spread(&phi);
    let mut pass = phi.len() >= tol::WEISS_MIN_RADII && spread <= tol::WEISS_FLAT;
    let mut detail = format!("cone datum spread {:.2}% over {} radii", 100.0 * spread, phi.len());
    for amp in [1.0, 2.0] {
        let cfg = config("weiss-scan.json", json!({ "datum": { "kind": { "plus": amp, "minus": amp } } }));
        let r = run(&cfg);
        let at_origin = r.report.find("free_boundary_at_origin").is_some_and(|v| v.pass);
        let phi: Vec<f64> = r.csv("profile.csv").iter().map(|row| f(row, "Phi")).collect();
        let (mono, drop) = fracfree::experiments::monotone_within(&phi, tol::WEISS_SLACK);
        pass &= at_origin && mono && phi.len() >= tol::WEISS_MIN_RADII;
        detail += &format!("; minimizer ±{amp}: monotone {mono} (worst drop {drop:e})");
    }
    check(9, "Weiss monotonicity", pass, detail);
}

#[test]
fn c10_minimizer_is_not_an_indicator() {
    let r = run(&config("remark-r.json", json!({})));
    let rows: Vec<_> = r.csv("solution.csv").into_iter().filter(|row| row["omega"] == "1").collect();
    let plus = rows.iter().filter(|row| row["phase"] == "1").count();
    let minus = rows.len() - plus;
    let off = rows.iter().map(|row| (f(row, "u").abs() - 1.0).abs()).fold(0.0, f64::max);
    check(
        10,
        "minimizer is not ±1 on its phases",
        r.report.passed() && plus > 0 && minus > 0 && off > tol::REMARK_LEVEL,
        format!("{plus}/{minus} cells, max ||u|-1| = {off:.3}; {}", r.verdicts()),
    );
}

#[test]
fn c11_no_isolated_zero_plateau() {
    let r = run(&config("plateau.json", json!({})));
    let rows = r.csv("instances.csv");
    let all = rows.iter().all(|row| row["pass"] == "1");
    let zeros: Vec<&str> = rows.iter().map(|row| row["zero_cells"].as_str()).collect();
    check(
        11,
        "zero sets",
        rows.len() == 5 && all && r.report.passed(),
        format!("zero cells per instance {zeros:?}; {}", r.verdicts()),
    );
}

/// Red by construction: the bi-Lipschitz perturbation `X ± φ(|X|/R) e₁` with
/// the quintic cutoff folds for `R ≤ 7.5`, so the smallest radius is undefined.
#[test]
#[ignore = "the defect is undefined at R = 4; see README"]
fn c12_cone_defect_decay() {
    let r = run(&config("cone2d.json", json!({})));
    let rows = r.csv("defect.csv");
    let detail = rows
        .iter()
        .map(|row| format!("R={} defect={} {}", row["R"], row["defect"], row["error"]))
        .collect::<Vec<_>>()
        .join("; ");
    check(12, "cone defect decay", r.report.status == Status::Ok && r.report.passed(), format!("{detail}; {}", r.verdicts()));
}

#[test]
fn c12_cone_defect_decay_at_admissible_radii() {
    let r = run(&config("cone2d.json", json!({ "options": { "cone_radii": [8.0, 16.0] } })));
    let rows = r.csv("defect.csv");
    let d: Vec<f64> = rows.iter().map(|row| f(row, "defect")).collect();
    let sigma = r.report.config.params.sigma;
    let slope = (d[1] / d[0]).log2();
    println!(
        "[INFO] 12 cone defect at R = 8, 16 only: defects {d:?}, log2 ratio {slope:.4}, limit {:.4}",
        -sigma + tol::CONE_SLACK
    );
    assert!(d.iter().all(|&x| x > tol::CONE_SIGN) && slope <= -sigma + tol::CONE_SLACK);
}

fn summary_with_threads(cfg: &ExperimentConfig, threads: usize) -> String {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let r = pool.install(|| run(cfg));
    std::fs::read_to_string(r.dir.join("summary.json")).unwrap()
}

#[test]
fn c13_thread_count_independence() {
    let many = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let mut pass = true;
    let mut names = Vec::new();
    for cfg in [
        config("oracle.json", json!({ "options": { "instances": 4 } })),
        config("minimize.json", json!({})),
        config("energy.json", json!({})),
    ] {
        let a = summary_with_threads(&cfg, 1);
        let b = summary_with_threads(&cfg, many);
        pass &= a == b;
        names.push(format!("{}: {}", cfg.experiment.name(), if a == b { "identical" } else { "differs" }));
    }
    check(13, "thread-count independence", pass, format!("1 vs {many} threads; {}", names.join(", ")));
}
