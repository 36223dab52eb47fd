use std::sync::Arc;

use fracfree_core::energy::*;
use fracfree_core::model::*;
use fracfree_core::operators::*;
use fracfree_core::quadrature::*;
use proptest::prelude::*;

fn grid(n: usize, l: f64, m: usize) -> Arc<Grid> {
    Arc::new(build_grid(GridSpec::new(n, l, m)).unwrap())
}

fn rect(x: f64, y: f64, w: f64, v: f64) -> Cell {
    Cell::rect([x, y], [x + w, y + v])
}

fn disjoint(a: &Cell, b: &Cell) -> bool {
    !a.overlaps(b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interval_weights_are_symmetric_positive_and_scale(
        a in -3.0f64..3.0, wa in 0.1f64..1.5, gap in 0.0f64..2.0, wb in 0.1f64..1.5,
        alpha in 0.1f64..1.9, r in 0.2f64..5.0,
    ) {
        let ci = Cell::interval(a, a + wa);
        let cj = Cell::interval(a + wa + gap, a + wa + gap + wb);
        let w = cell_pair_weight(&ci, &cj, alpha, DEFAULT_TOL).unwrap();
        let w2 = cell_pair_weight(&cj, &ci, alpha, DEFAULT_TOL).unwrap();
        prop_assert!(w > 0.0);
        prop_assert_eq!(w, w2);
        let ws = cell_pair_weight(&ci.scaled(r), &cj.scaled(r), alpha, DEFAULT_TOL).unwrap();
        let expect = r.powf(1.0 - alpha) * w;
        prop_assert!((ws - expect).abs() <= 1e-12 * expect, "{} vs {}", ws, expect);
    }

    #[test]
    fn rect_weights_are_symmetric_positive_and_scale(
        x in -2.0f64..2.0, y in -2.0f64..2.0, dx in -1.5f64..1.5, dy in -1.5f64..1.5,
        alpha in 0.1f64..0.95, r in 0.25f64..4.0,
    ) {
        let ci = rect(x, y, 0.5, 0.5);
        let cj = rect(x + 0.5 + dx.abs(), y + dy, 0.5, 0.5);
        prop_assume!(disjoint(&ci, &cj));
        let w = cell_pair_weight(&ci, &cj, alpha, DEFAULT_TOL).unwrap();
        let w2 = cell_pair_weight(&cj, &ci, alpha, DEFAULT_TOL).unwrap();
        prop_assert!(w > 0.0);
        prop_assert_eq!(w, w2);
        let ws = cell_pair_weight(&ci.scaled(r), &cj.scaled(r), alpha, DEFAULT_TOL).unwrap();
        let expect = r.powf(2.0 - alpha) * w;
        prop_assert!((ws - expect).abs() <= 1e-12 * expect, "{} vs {}", ws, expect);
    }

    #[test]
    fn weights_are_stable_under_tolerance_halving(
        dx in 0.0f64..2.0, dy in 0.0f64..2.0, alpha in 0.1f64..0.95,
    ) {
        let ci = rect(0.0, 0.0, 1.0, 1.0);
        let cj = rect(1.0 + dx, dy, 1.0, 1.0);
        let tol = 1e-6;
        let a = cell_pair_weight(&ci, &cj, alpha, tol).unwrap();
        let b = cell_pair_weight(&ci, &cj, alpha, tol / 2.0).unwrap();
        prop_assert!((a - b).abs() <= tol * a.abs(), "{} {}", a, b);
    }

    #[test]
    fn touching_cells_match_subdivision(
        k in -8i32..8, j in 0u32..4, alpha in 0.1f64..0.95, corner in any::<bool>(),
    ) {
        // dyadic coordinates keep both widths exactly equal
        let w = 0.5f64.powi(j as i32);
        let a = k as f64 * 0.125;
        let ci = Cell::interval(a, a + w);
        let cj = Cell::interval(a + w, a + 2.0 * w);
        let x = cell_pair_weight(&ci, &cj, alpha, DEFAULT_TOL).unwrap();
        let o = subdivision_weight(&ci, &cj, alpha, 10).unwrap();
        prop_assert!((x - o).abs() <= 1e-6 * x, "{} {}", x, o);
        let ri = rect(a, 0.0, w, w);
        let rj = rect(a + w, if corner { w } else { 0.0 }, w, w);
        let x = cell_pair_weight(&ri, &rj, alpha, DEFAULT_TOL).unwrap();
        let o = subdivision_weight(&ri, &rj, alpha, 6).unwrap();
        prop_assert!((x - o).abs() <= 1e-6 * x, "{} {}", x, o);
    }
}

fn random_phase(g: &Arc<Grid>, d: &Arc<ExteriorDatum>, bits: u64) -> PhaseSet {
    let (_, e) = sample_datum(d, g).unwrap();
    let mut ind = e.indicator().to_vec();
    for c in g.omega_cells() {
        ind[c] = if (bits >> (c % 64)) & 1 == 1 { 1 } else { -1 };
    }
    PhaseSet::new(g.clone(), d.clone(), ind).unwrap()
}

fn indicator(e: &PhaseSet) -> DiscreteFunction {
    let vals = e.indicator().iter().map(|&p| p as f64).collect();
    DiscreteFunction::new(e.grid().clone(), e.datum().clone(), vals).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cross_term_identity_on_random_sets(bits in any::<u64>()) {
        let s = 0.25;
        let g = grid(1, 1.0, 24);
        let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
        let disc = Discretization::build(&g, &d, 2.0 * s, DEFAULT_TOL).unwrap();
        let e = random_phase(&g, &d, bits);
        let u = indicator(&e);
        let gag = gagliardo_energy(&u, &disc, s).unwrap();
        let per = frac_perimeter(&e, &disc, 2.0 * s).unwrap();
        prop_assert!((gag - 8.0 * per).abs() <= 1e-9 * gag, "{} {}", gag, per);
    }

    #[test]
    fn perimeter_is_complement_symmetric_and_monotone_in_domain(bits in any::<u64>()) {
        let g = grid(1, 1.0, 20);
        let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.1));
        let disc = Discretization::build(&g, &d, 0.6, DEFAULT_TOL).unwrap();
        let e = random_phase(&g, &d, bits);
        let p = frac_perimeter(&e, &disc, 0.6).unwrap();
        let c = e.complement().unwrap();
        let cdisc = Discretization::new(disc.table.clone(), c.datum()).unwrap();
        let q = frac_perimeter(&c, &cdisc, 0.6).unwrap();
        prop_assert!((p - q).abs() <= 1e-12 * p, "{} {}", p, q);
        let small = g.ball_mask(0.5);
        let mid = g.ball_mask(0.75);
        let a = frac_perimeter_in(&e, &small, &disc).unwrap();
        let b = frac_perimeter_in(&e, &mid, &disc).unwrap();
        prop_assert!(a <= b + 1e-14 && b <= p + 1e-14);
        let u = indicator(&e);
        let ga = gagliardo_energy_in(&u, &small, &disc).unwrap();
        let gb = gagliardo_energy_in(&u, &mid, &disc).unwrap();
        prop_assert!(ga >= 0.0 && ga <= gb + 1e-14);
    }

    #[test]
    fn rescaling_preserves_admissibility(r in 0.1f64..10.0, offset in -0.5f64..0.5) {
        let params = FractionalParams::new(0.4, 0.5);
        let g = grid(1, 1.0, 16);
        let d = Arc::new(ExteriorDatum::new(1, DatumKind::Halfspace { normal: [1.0, 0.0], offset, plus: 2.0, minus: 0.5 }));
        let (u, e) = sample_datum(&d, &g).unwrap();
        let pair = make_pair(u, e, DEFAULT_SIGN_TOLERANCE).unwrap();
        let s = rescale_pair(&pair, r, &params).unwrap();
        prop_assert_eq!(s.e.indicator(), pair.e.indicator());
        prop_assert!(sign_violations(&s.u, &s.e, s.sign_tolerance).is_empty());
    }

    #[test]
    fn residual_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        let g = grid(1, 1.0, 24);
        let d = Arc::new(ExteriorDatum::constant(1, 0.0));
        let disc = Discretization::build(&g, &d, 0.8, DEFAULT_TOL).unwrap();
        let f = |k: u64, c: usize| (((seed.wrapping_mul(k + 1) >> (c % 50)) & 0xff) as f64) / 255.0;
        let u: Vec<f64> = (0..g.len()).map(|c| if g.on_box_boundary(c) { 0.0 } else { f(1, c) }).collect();
        let v: Vec<f64> = (0..g.len()).map(|c| if g.on_box_boundary(c) { 0.0 } else { f(2, c) }).collect();
        let w: Vec<f64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        for c in 1..g.len() - 1 {
            let lu = frac_laplacian_values(&u, c, &disc).unwrap();
            let lv = frac_laplacian_values(&v, c, &disc).unwrap();
            let lw = frac_laplacian_values(&w, c, &disc).unwrap();
            let scale = 1.0 + lu.abs() + lv.abs();
            prop_assert!((lw - a * lu - b * lv).abs() <= 1e-10 * scale);
        }
    }
}

#[test]
fn sampling_is_deterministic_and_indicator_matches_phase() {
    let g1 = grid(2, 1.0, 9);
    let g2 = grid(2, 1.0, 9);
    let d = Arc::new(ExteriorDatum::indicator_halfspace(2, [0.3, -0.7], 0.05));
    let (u1, e1) = sample_datum(&d, &g1).unwrap();
    let (u2, e2) = sample_datum(&d, &g2).unwrap();
    assert_eq!(u1.values(), u2.values());
    assert_eq!(e1.indicator(), e2.indicator());
    for c in 0..g1.len() {
        assert_eq!(u1.values()[c], e1.phase(c) as f64);
    }
}

#[test]
fn interior_maximum_has_positive_fractional_laplacian() {
    let g = grid(1, 1.0, 32);
    let d = Arc::new(ExteriorDatum::constant(1, 0.0));
    let disc = Discretization::build(&g, &d, 1.2, DEFAULT_TOL).unwrap();
    let vals: Vec<f64> = (0..g.len()).map(|c| { let x = g.center(c)[0]; (1.0 - 4.0 * x * x).max(0.0) }).collect();
    let u = DiscreteFunction::new(g.clone(), d.clone(), vals).unwrap();
    let c = g.locate(&[0.01, 0.0]).unwrap();
    assert!(frac_laplacian(&u, c, &disc, 0.6).unwrap() > 0.0);
}

#[test]
fn energy_is_nonnegative_and_zero_for_constants() {
    let params = FractionalParams::new(0.3, 0.5);
    let g = grid(1, 1.0, 16);
    let d = Arc::new(ExteriorDatum::constant(1, 1.5));
    let tables = Tables::build(&g, &d, &params, DEFAULT_TOL).unwrap();
    let (u, e) = sample_datum(&d, &g).unwrap();
    let pair = make_pair(u, e, DEFAULT_SIGN_TOLERANCE).unwrap();
    let f = total_energy(&pair, &params, &tables).unwrap();
    assert!(f.total.abs() < 1e-12, "{f:?}");
    let mut v = pair.u.values().to_vec();
    v[5] = 0.7;
    let u = DiscreteFunction::new(g.clone(), d.clone(), v).unwrap();
    let pair = make_pair(u, pair.e.clone(), DEFAULT_SIGN_TOLERANCE).unwrap();
    assert!(total_energy(&pair, &params, &tables).unwrap().total > 0.0);
}
