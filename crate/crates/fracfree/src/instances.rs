//! Seeded random exterior data.

use core::f64::consts::PI;

use fracfree_core::model::{complement_datum, Bump, DatumKind, ExteriorDatum, Point};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn sign(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

fn unit(n: usize, rng: &mut ChaCha8Rng) -> Point {
    if n == 1 {
        [sign(rng), 0.0]
    } else {
        let t = rng.random_range(0.0..2.0 * PI);
        [t.cos(), t.sin()]
    }
}

/// Bumps centred outside the box `[-L, L]^n` that never reach into it.
fn outside_bumps(n: usize, l: f64, count: usize, amplitude: (f64, f64), rng: &mut ChaCha8Rng) -> Vec<Bump> {
    (0..count)
        .map(|_| {
            let radius = rng.random_range(0.1..0.2) * l;
            let v = unit(n, rng);
            let sup = v[0].abs().max(v[1].abs());
            let d = rng.random_range(1.2..3.0) * l + radius;
            Bump { center: [d * v[0] / sup, d * v[1] / sup], radius, amplitude: rng.random_range(amplitude.0..amplitude.1) }
        })
        .collect()
}

/// Sign-changing halfspace datum with random normal, offset and amplitudes,
/// plus two bumps outside the box.
pub fn random_datum(n: usize, l: f64, rng: &mut ChaCha8Rng) -> ExteriorDatum {
    let normal = unit(n, rng);
    let offset = rng.random_range(-0.5..0.5) * l;
    let plus = rng.random_range(0.2..2.0);
    let minus = rng.random_range(0.2..2.0);
    let bumps = outside_bumps(n, l, 2, (-1.5, 1.5), rng);
    ExteriorDatum::new(n, DatumKind::Halfspace { normal, offset, plus, minus }).with_bumps(bumps)
}

/// Random datum with `φ ≥ a` everywhere.
pub fn lower_bounded_datum(a: f64, n: usize, l: f64, rng: &mut ChaCha8Rng) -> ExteriorDatum {
    let bumps = outside_bumps(n, l, 2, (0.0, 1.5), rng);
    if a > 0.0 {
        return ExteriorDatum::constant(n, a).with_bumps(bumps);
    }
    let normal = unit(n, rng);
    let offset = rng.random_range(-0.5..0.5) * l;
    let plus = rng.random_range(0.2..2.0);
    let minus = rng.random_range(0.0..1.0) * -a;
    ExteriorDatum::new(n, DatumKind::Halfspace { normal, offset, plus, minus }).with_bumps(bumps)
}

/// Random datum with `φ ≤ a` everywhere, the mirror of [`lower_bounded_datum`].
pub fn upper_bounded_datum(a: f64, n: usize, l: f64, rng: &mut ChaCha8Rng) -> ExteriorDatum {
    complement_datum(&lower_bounded_datum(-a, n, l, rng))
}

/// Homogeneous datum of degree `d` whose set is the halfspace `{x_1 > 0}`:
/// `φ = |x|^d` there and `-|x|^d` on the complement.
pub fn halfspace_cone(n: usize, d: f64) -> ExteriorDatum {
    use fracfree_core::model::ConeSector;
    let sectors = if n == 1 {
        vec![
            ConeSector { from: 0.0, to: PI, coeff: 1.0, in_set: true },
            ConeSector { from: PI, to: 2.0 * PI, coeff: -1.0, in_set: false },
        ]
    } else {
        vec![
            ConeSector { from: 0.0, to: 0.5 * PI, coeff: 1.0, in_set: true },
            ConeSector { from: 0.5 * PI, to: 1.5 * PI, coeff: -1.0, in_set: false },
            ConeSector { from: 1.5 * PI, to: 2.0 * PI, coeff: 1.0, in_set: true },
        ]
    };
    ExteriorDatum::new(n, DatumKind::HomogeneousCone { degree: d, sectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bumps_stay_outside_the_box() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1, 2] {
            for _ in 0..50 {
                for b in outside_bumps(n, 2.0, 2, (-1.0, 1.0), &mut rng) {
                    let sup = b.center[0].abs().max(b.center[1].abs());
                    assert!(sup - b.radius >= 2.0);
                }
            }
        }
    }

    #[test]
    fn bounded_data_respect_their_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for a in [-1.0, 0.5, 2.0] {
            for _ in 0..20 {
                let lo = lower_bounded_datum(a, 1, 1.0, &mut rng);
                let hi = upper_bounded_datum(a, 1, 1.0, &mut rng);
                for k in -400..=400 {
                    let p = [k as f64 * 0.01, 0.0];
                    assert!(lo.value(&p).unwrap() >= a - 1e-15);
                    assert!(hi.value(&p).unwrap() <= a + 1e-15);
                }
            }
        }
    }
}
