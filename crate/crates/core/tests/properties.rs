use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use demailly_lab::demailly::{demailly_value, NumericSettings};
use demailly_lab::domains::{make_grid, Domain, GridSpec, Point};
use demailly_lab::envelope::{convex_envelope, convex_envelope_lp, monotone_minorant, psh_envelope_toric, LogProfile};
use demailly_lab::field::SampledField;
use demailly_lab::weights::{catalog, default_radii, usc_regularize, Weight, WeightParams, SPIKE_TOL};

fn disk_weight(name: &str) -> Weight {
    catalog(name, &WeightParams::default(), 1).unwrap()
}

fn custom(table: Vec<[f64; 2]>) -> Weight {
    catalog("radial_custom", &WeightParams { table: Some(table), ..WeightParams::default() }, 1).unwrap()
}

fn point() -> impl Strategy<Value = Point> {
    (0.0..0.85f64, 0.0..std::f64::consts::TAU).prop_map(|(r, th)| Point::new(vec![Complex64::from_polar(r, th)]))
}

/// Piecewise-linear radial tables on `[0, 1]` with 3 to 6 knots.
fn table() -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.05..1.0f64, -1.0..1.0f64), 2..5).prop_map(|mut knots| {
        knots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        knots.dedup_by(|a, b| (a.0 - b.0).abs() < 0.02);
        let mut t = vec![[0.0, knots[0].1]];
        t.extend(knots.iter().map(|&(r, v)| [r, v]));
        t.push([1.0, knots.last().unwrap().1]);
        t.dedup_by(|a, b| (a[0] - b[0]).abs() < 1e-12);
        t
    })
}

fn log_spec() -> GridSpec {
    GridSpec::log_radial(40, 0.05, -8.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn translation_equivariance(
        name in prop::sample::select(vec!["zero", "log_pole", "neg_abs_square", "abs_square", "angular_bump"]),
        m in 1u32..=16,
        z in point(),
        c in -2.0..2.0f64,
    ) {
        let w = disk_weight(name);
        let d = Domain::unit_disk();
        let s = NumericSettings::default();
        let base = demailly_value(&w, &d, m, &z, &s).unwrap().value;
        let shifted = demailly_value(&w.shifted(c), &d, m, &z, &s).unwrap().value;
        if base == f64::NEG_INFINITY {
            prop_assert_eq!(shifted, f64::NEG_INFINITY);
        } else {
            prop_assert!((shifted - base - c).abs() <= 1e-12, "{} vs {}", shifted - base, c);
        }
    }

    #[test]
    fn kernel_monotonicity(m in 1u32..=16, z in point()) {
        // pointwise ordered on the disk: log|z| <= 0, -|z|^2 <= 0 <= |z|^2
        let d = Domain::unit_disk();
        let s = NumericSettings::default();
        let v = |name: &str| demailly_value(&disk_weight(name), &d, m, &z, &s).unwrap().value;
        let (pole, neg, zero, pos) = (v("log_pole"), v("neg_abs_square"), v("zero"), v("abs_square"));
        prop_assert!(pole <= zero + 1e-9);
        prop_assert!(neg <= zero + 1e-9);
        prop_assert!(zero <= pos + 1e-9);
    }

    #[test]
    fn usc_idempotent_and_monotone(
        values in prop::collection::vec(-3.0..3.0f64, 24),
        bumps in prop::collection::vec(0.0..1.0f64, 24),
    ) {
        let grid = Arc::new(make_grid(&Domain::unit_disk(), &GridSpec::radial(24, 0.05)).unwrap());
        let f = SampledField::new(grid.clone(), values.clone()).unwrap();
        let g = SampledField::new(grid, values.iter().zip(&bumps).map(|(a, b)| a + b).collect()).unwrap();
        let radii = default_radii(&f);
        let uf = usc_regularize(&f, &radii).unwrap();
        prop_assert_eq!(&usc_regularize(&uf, &radii).unwrap().values, &uf.values);
        let ug = usc_regularize(&g, &radii).unwrap();
        for (a, b) in uf.values.iter().zip(&ug.values) {
            prop_assert!(*a <= b + SPIKE_TOL);
        }
    }

    #[test]
    fn hull_matches_linear_program(
        values in prop::collection::vec(-2.0..2.0f64, 3..24),
        slope in prop::sample::select(vec![0.0, 0.5, 1.0]),
    ) {
        let t: Vec<f64> = (0..values.len()).map(|k| -4.0 + 0.25 * k as f64).collect();
        let p = LogProfile::new(vec![t], values, vec![slope]).unwrap();
        let hull = convex_envelope(&p).unwrap();
        let lp = convex_envelope_lp(&p).unwrap();
        for ((a, b), u) in hull.values.iter().zip(&lp).zip(&p.values) {
            prop_assert!((a - b).abs() <= 1e-9, "{} vs {}", a, b);
            prop_assert!(*a <= u + 1e-12);
        }
        let mono = monotone_minorant(&p);
        prop_assert!(mono.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn envelope_properties(table in table(), c in -1.0..1.0f64) {
        let d = Domain::unit_disk();
        let w = custom(table);
        let env = psh_envelope_toric(&w, &d, &log_spec(), 1e-9, 50).unwrap();
        for (z, v) in env.field.grid.points.iter().zip(&env.field.values) {
            prop_assert!(*v <= w.value(z) + 1e-12);
        }
        let again = psh_envelope_toric(&env.as_weight("envelope").unwrap(), &d, &log_spec(), 1e-9, 50).unwrap();
        for (a, b) in again.field.values.iter().zip(&env.field.values) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let shifted = psh_envelope_toric(&w.shifted(c), &d, &log_spec(), 1e-9, 50).unwrap();
        for (a, b) in shifted.field.values.iter().zip(&env.field.values) {
            prop_assert!((a - b - c).abs() <= 1e-12);
        }
        prop_assert!(env.iterations <= 50);
    }

    #[test]
    fn envelope_monotonicity(table in table(), lift in prop::collection::vec(0.0..0.5f64, 1..4)) {
        // W = V + a nonnegative piecewise-linear bump, so V <= W pointwise
        let d = Domain::unit_disk();
        let lower = custom(table.clone());
        let upper_table: Vec<[f64; 2]> = table
            .iter()
            .enumerate()
            .map(|(k, &[r, v])| [r, v + lift[k % lift.len()]])
            .collect();
        let upper = custom(upper_table);
        let a = psh_envelope_toric(&lower, &d, &log_spec(), 1e-9, 50).unwrap();
        let b = psh_envelope_toric(&upper, &d, &log_spec(), 1e-9, 50).unwrap();
        for (x, y) in a.field.values.iter().zip(&b.field.values) {
            prop_assert!(*x <= y + 1e-12);
        }
    }
}
