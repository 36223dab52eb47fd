use std::f64::consts::PI;
use std::sync::Arc;

use fracfree_core::extension::*;
use fracfree_core::model::*;
use fracfree_core::Error;

fn grid(n: usize, l: f64, m: usize) -> Arc<Grid> {
    Arc::new(build_grid(GridSpec::new(n, l, m)).unwrap())
}

fn cone_pair(g: &Arc<Grid>, params: &FractionalParams) -> AdmissiblePair {
    let d = Arc::new(ExteriorDatum::cone_1d(params.cone_degree(), 1.0, 1.0));
    let (u, e) = sample_datum(&d, g).unwrap();
    make_pair(u, e, DEFAULT_SIGN_TOLERANCE).unwrap()
}

#[test]
fn constants_are_preserved() {
    for n in [1, 2] {
        let g = grid(n, 1.0, if n == 1 { 32 } else { 8 });
        let half = Arc::new(HalfGrid::new(g.clone(), 1.0).unwrap());
        let d = Arc::new(ExteriorDatum::constant(n, 1.0));
        let (u, e) = sample_datum(&d, &g).unwrap();
        let ub = extend_scalar(&u, &half, 0.3).unwrap();
        let us = extend_set(&e, &half, 0.6).unwrap();
        for v in ub.values().iter().chain(us.values()) {
            assert!((v - 1.0).abs() < 1e-12, "{v}");
        }
    }
}

#[test]
fn set_field_is_bounded_and_matches_trace() {
    let g = grid(2, 1.0, 10);
    let half = Arc::new(HalfGrid::new(g.clone(), 1.0).unwrap());
    let d = Arc::new(
        ExteriorDatum::indicator_halfspace(2, [0.6, 0.8], 0.1)
            .with_bumps(vec![Bump { center: [1.5, 0.0], radius: 0.3, amplitude: 0.5 }]),
    );
    let (_, e) = sample_datum(&d, &g).unwrap();
    let us = extend_set(&e, &half, 0.4).unwrap();
    assert!(us.values().iter().all(|v| v.abs() <= 1.0));
    for c in 0..g.len() {
        assert_eq!(us.trace()[c], e.phase(c) as f64);
    }
}

#[test]
fn halfspace_extension_matches_closed_form() {
    // for a = 1 and E = {x > 0} the extension is (2/π) atan(x / z)
    let g = grid(1, 1.0, 64);
    let half = Arc::new(HalfGrid::new(g.clone(), 0.5).unwrap());
    let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.0));
    let (_, e) = sample_datum(&d, &g).unwrap();
    let us = extend_set(&e, &half, 0.999_999_999).unwrap();
    let h = g.width();
    let k = half.len() / 2;
    let z = half.z(k);
    let mut worst = 0.0f64;
    for c in 0..g.len() {
        let x = g.center(c)[0];
        // cell averaging of the trace shifts nothing for an odd function
        let exact = 2.0 / PI * (x / z).atan();
        worst = worst.max((us.value(k, c) - exact).abs());
    }
    assert!(worst < 0.2 * h / z, "{worst}");
}

#[test]
fn dirichlet_of_height_function_is_half_disk_area() {
    let g = grid(1, 1.1, 512);
    let half = Arc::new(HalfGrid::new(g.clone(), 1.1).unwrap());
    let f = ExtendedField::from_fn(half, 0.0, |_, z| z);
    let v = weighted_dirichlet(&f, 1.0, 0.0).unwrap();
    assert!((v - PI / 2.0).abs() < 5e-3, "{v}");
    let c = ExtendedField::from_fn(f.half_grid().clone(), 0.0, |_, _| 3.0);
    assert!(weighted_dirichlet(&c, 1.0, 0.0).unwrap().abs() < 1e-20);
    assert!(matches!(weighted_dirichlet(&f, 5.0, 0.0), Err(Error::OutOfRange { .. })));
}

#[test]
fn shell_integral_of_constant_is_weighted_half_sphere() {
    let g = grid(1, 1.1, 128);
    let half = Arc::new(HalfGrid::new(g.clone(), 1.1).unwrap());
    let f = ExtendedField::from_fn(half, 0.0, |_, _| 1.0);
    // ∫_0^π sin^w θ dθ for w = 0.4
    let w = 0.4;
    let exact = PI.sqrt() * libm::tgamma((1.0 + w) / 2.0) / libm::tgamma(1.0 + w / 2.0);
    let v = shell_integral(&f, 0.8, w).unwrap();
    assert!((v - 0.8f64.powf(1.0 + w) * exact).abs() < 1e-6, "{v}");
}

#[test]
fn extensions_scale_on_matched_grids() {
    let params = FractionalParams::new(0.4, 0.5);
    let g = grid(1, 1.05, 128);
    let pair = cone_pair(&g, &params);
    let r = 2.0;
    let scaled = rescale_pair(&pair, r, &params).unwrap();
    let half = Arc::new(HalfGrid::new(g.clone(), 1.0).unwrap());
    let half_r = Arc::new(HalfGrid::new(scaled.grid().clone(), 0.5).unwrap());
    assert_eq!(half.len(), half_r.len());
    let a = extend_scalar(&pair.u, &half, params.s).unwrap();
    let b = extend_scalar(&scaled.u, &half_r, params.s).unwrap();
    let pre = params.rescale_prefactor(r);
    for (x, y) in a.values().iter().zip(b.values()) {
        assert!((pre * x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{x} {y}");
    }
    let u = extend_set(&pair.e, &half, params.sigma).unwrap();
    let v = extend_set(&scaled.e, &half_r, params.sigma).unwrap();
    for (x, y) in u.values().iter().zip(v.values()) {
        assert!((x - y).abs() <= 1e-12, "{x} {y}");
    }
    let radii = [0.2, 0.3, 0.45];
    let p = weiss_profile(&pair, &radii.map(|t| t * r), &params, &half).unwrap();
    let q = weiss_profile(&scaled, &radii, &params, &half_r).unwrap();
    for k in 0..radii.len() {
        assert!((p.phi[k] - q.phi[k]).abs() <= 1e-10 * p.phi[k].abs(), "{} {}", p.phi[k], q.phi[k]);
        assert_eq!(q.phi[k], q.g[k] - q.h[k]);
    }
}

#[test]
fn weiss_profile_of_homogeneous_pair_is_flat() {
    let params = FractionalParams::new(0.5, 0.2);
    let g = grid(1, 1.05, 512);
    let pair = cone_pair(&g, &params);
    let half = Arc::new(HalfGrid::new(g.clone(), 1.02).unwrap());
    let radii: Vec<f64> = (0..9).map(|k| 0.25 * 2f64.powf(k as f64 / 4.0)).collect();
    let prof = weiss_profile(&pair, &radii, &params, &half).unwrap();
    let hi = prof.phi.iter().cloned().fold(f64::MIN, f64::max);
    let lo = prof.phi.iter().cloned().fold(f64::MAX, f64::min);
    assert!((hi - lo) / hi < 0.02, "{:?}", prof.phi);
}

#[test]
fn weiss_profile_needs_free_boundary_at_origin() {
    let params = FractionalParams::new(0.5, 0.5);
    let g = grid(1, 1.0, 32);
    let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], 0.5));
    let (u, e) = sample_datum(&d, &g).unwrap();
    let pair = make_pair(u, e, DEFAULT_SIGN_TOLERANCE).unwrap();
    let half = Arc::new(HalfGrid::new(g.clone(), 0.8).unwrap());
    let err = weiss_profile(&pair, &[0.5], &params, &half).unwrap_err();
    assert_eq!(err, Error::FreeBoundaryNotAtOrigin);
}

#[test]
fn cutoff_has_expected_shape() {
    assert_eq!(cutoff(0.3), (1.0, 0.0));
    assert_eq!(cutoff(-0.8), (0.0, 0.0));
    let (v, d) = cutoff(0.625);
    assert!((v - 0.5).abs() < 1e-15);
    assert!((d + CUTOFF_MAX_SLOPE).abs() < 1e-12);
}

#[test]
fn cone_defect_vanishes_for_translation_invariant_pair() {
    let params = FractionalParams::new(0.4, 0.5);
    let g = grid(2, 12.0, 12);
    let d = Arc::new(ExteriorDatum::new(
        2,
        DatumKind::Halfspace { normal: [0.0, 1.0], offset: 0.0, plus: 0.0, minus: 0.0 },
    ));
    let (u, e) = sample_datum(&d, &g).unwrap();
    let pair = make_pair(u, e, DEFAULT_SIGN_TOLERANCE).unwrap();
    let half = Arc::new(HalfGrid::with_ratio(g.clone(), 8.0, 1.5).unwrap());
    let v = cone_defect(&pair, &params, 8.0, &half).unwrap();
    assert!(v.abs() < 1e-12, "{v}");
    assert!(matches!(cone_defect(&pair, &params, 4.0, &half), Err(Error::Geometry(_))));
}

#[test]
fn harmonic_extension_beats_bump_perturbations() {
    let s = 0.5;
    let g = grid(1, 1.05, 128);
    let d = Arc::new(ExteriorDatum::indicator_halfspace(1, [1.0, 0.0], -0.2));
    let (u, _) = sample_datum(&d, &g).unwrap();
    let half = Arc::new(HalfGrid::new(g.clone(), 1.0).unwrap());
    let ub = extend_scalar(&u, &half, s).unwrap();
    let base = weighted_dirichlet(&ub, 0.9, 0.0).unwrap();
    for (k, (cx, cz)) in [(0.1, 0.3), (-0.3, 0.2), (0.4, 0.5), (0.0, 0.1), (-0.5, 0.4)].into_iter().enumerate() {
        let amp = 0.05 * (1.0 + k as f64);
        let p = ExtendedField::from_fn(half.clone(), 0.0, |x, z| {
            let i = half.levels().iter().position(|&l| l == z).map(|i| i + 1).unwrap_or(0);
            let c = g.locate(&x).unwrap();
            let r2 = ((x[0] - cx).powi(2) + (z - cz).powi(2)) / 0.04;
            ub.value(i, c) + if r2 < 1.0 { amp * (1.0 - r2).powi(3) } else { 0.0 }
        });
        assert!(weighted_dirichlet(&p, 0.9, 0.0).unwrap() > base);
    }
}
