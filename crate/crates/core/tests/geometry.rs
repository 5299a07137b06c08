use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wen_core::geometry::{
    hull_constraints, hull_cut, one_way_chord, parabola_secant, pipe_polygon, pump_power_hull, random_spec,
    signed_loss, verify_hull, HullCase, HullSpec, Sense, VerifyOptions,
};

fn rel(scale: f64) -> f64 {
    1e-9 * scale.max(1.0)
}

/// Draws a point of the nonconvex set directly. Even draws pick (x1, x2)
/// in the disc and solve for x4; odd draws pick (x3, x4) under x3·x4 ≤ ac
/// and place (x1, x2) on the matching ellipse.
fn omega_point(spec: &HullSpec, k: usize, rng: &mut ChaCha8Rng) -> Option<[f64; 4]> {
    let x3 = rng.gen_range(spec.x3_min..=spec.x3_max);
    if x3 <= 0.0 {
        return None;
    }
    if k.is_multiple_of(2) {
        let rad = spec.c.sqrt() * rng.gen::<f64>().sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let (x1, x2) = (rad * th.cos(), rad * th.sin());
        let x4 = (spec.a * x1 * x1 + spec.b * x2 * x2) / x3;
        return (x4 >= spec.x4_min && x4 <= spec.x4_max).then_some([x1, x2, x3, x4]);
    }
    let top = spec.x4_max.min(spec.ac() / x3);
    if top < spec.x4_min {
        return None;
    }
    let x4 = rng.gen_range(spec.x4_min..=top);
    let q = x3 * x4;
    let th = rng.gen_range(0.0..std::f64::consts::TAU);
    let (x1, x2) = if spec.b > 0.0 {
        ((q / spec.a).sqrt() * th.cos(), (q / spec.b).sqrt() * th.sin())
    } else {
        ((q / spec.a).sqrt(), 0.0)
    };
    if x1 * x1 + x2 * x2 <= spec.c {
        Some([x1, x2, x3, x4])
    } else {
        // Along the x1 axis the point always fits the disc.
        Some([(q / spec.a).sqrt(), 0.0, x3, x4])
    }
}

fn case_strategy() -> impl Strategy<Value = HullCase> {
    prop_oneof![
        Just(HullCase::One),
        Just(HullCase::Two),
        Just(HullCase::Three),
        Just(HullCase::Four)
    ]
}

proptest! {
    #[test]
    fn hull_rows_hold_on_the_nonconvex_set(case in case_strategy(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(case, &mut rng);
        let block = hull_constraints(&spec).unwrap();
        if let Some(cut) = block.cut {
            prop_assert_eq!(cut.case, case);
        }
        let mut seen = 0;
        for k in 0..2000 {
            let Some(x) = omega_point(&spec, k, &mut rng) else { continue };
            seen += 1;
            for row in &block.rows {
                prop_assert!(row.slack(&x) <= rel(row.scale(&x)), "{} slack {}", row.label, row.slack(&x));
            }
            if let Some(cut) = block.cut {
                let scale = cut.k1.abs() * x[2] + cut.k2.abs() * x[3] + cut.d.abs();
                prop_assert!(cut.slack(&x) <= rel(scale));
            }
        }
        prop_assert!(seen > 0);
    }

    #[test]
    fn secant_cut_is_attained(two in any::<bool>(), seed in any::<u64>()) {
        // In the first two cases the cut is the chord of x3·x4 = ac across
        // the box, so it passes through the curve where the curve leaves the box.
        let case = if two { HullCase::Two } else { HullCase::One };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(case, &mut rng);
        let Some(cut) = hull_cut(&spec).unwrap() else { return Ok(()) };
        let ac = spec.ac();
        let mut pts = vec![];
        for x3 in [spec.x3_min, spec.x3_max] {
            if x3 > 0.0 {
                pts.push((x3, ac / x3));
            }
        }
        for x4 in [spec.x4_min, spec.x4_max] {
            if x4 > 0.0 && x4.is_finite() {
                pts.push((ac / x4, x4));
            }
        }
        let feasible: Vec<_> = pts
            .into_iter()
            .filter(|&(x3, x4)| {
                x3 >= spec.x3_min - 1e-12 && x3 <= spec.x3_max + 1e-12 && x4 >= spec.x4_min - 1e-12 && x4 <= spec.x4_max + 1e-12
            })
            .collect();
        let best = feasible
            .iter()
            .map(|&(x3, x4)| cut.k1 * x3 + cut.k2 * x4 - cut.d)
            .fold(f64::NEG_INFINITY, f64::max);
        let scale = cut.d.abs().max(1.0);
        prop_assert!(best.abs() <= 1e-9 * scale, "best {best} over {feasible:?}");
    }

    #[test]
    fn random_specs_pass_sampling(case in case_strategy(), seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(case, &mut rng);
        let r = verify_hull(&spec, &VerifyOptions { samples: 4000, probes: 0, seed, ..Default::default() }).unwrap();
        prop_assert!(r.contained(), "{:?}", r.worst);
    }

    #[test]
    fn polygon_encloses_curve(r in 1e-3f64..1e3, lo in 1e-3f64..10.0, hi in 1e-3f64..10.0, u in 0.0f64..=1.0) {
        let p = pipe_polygon(r, -lo, hi).unwrap();
        let f = -lo + u * (hi + lo);
        let y = signed_loss(r, f);
        prop_assert!(p.contains(f, y, rel(r * (lo.max(hi)).powi(2))));
        prop_assert!(p.lower(f) <= p.upper(f) + rel(r * (lo.max(hi)).powi(2)));
    }

    #[test]
    fn polygon_lines_touch_curve(r in 1e-3f64..1e3, lo in 1e-3f64..10.0, hi in 1e-3f64..10.0) {
        let p = pipe_polygon(r, -lo, hi).unwrap();
        let [up, down, t_hi, t_lo] = p.lines;
        let tol = 1e-9 * r * lo.max(hi).powi(2);
        // Upper line meets the curve at f̄ and is tangent to −R·f² at −(√2−1)·f̄.
        prop_assert!((up.value(hi) - r * hi * hi).abs() <= tol);
        let ft = -(2f64.sqrt() - 1.0) * hi;
        prop_assert!((up.value(ft) + r * ft * ft).abs() <= tol);
        prop_assert!((up.slope - (-2.0 * r * ft)).abs() <= 1e-9 * r * hi);
        prop_assert!((down.value(-lo) + r * lo * lo).abs() <= tol);
        let gt = (2f64.sqrt() - 1.0) * lo;
        prop_assert!((down.value(gt) - r * gt * gt).abs() <= tol);
        // The endpoint lines pass through the curve at both ends of their side.
        prop_assert!((t_hi.value(hi) - r * hi * hi).abs() <= tol);
        prop_assert!((t_lo.value(-lo) + r * lo * lo).abs() <= tol);
        prop_assert_eq!((t_hi.sense, t_lo.sense), (Sense::Above, Sense::Below));
    }

    #[test]
    fn secant_dominates_parabola(r in 1e-3f64..1e3, fmax in 1e-3f64..10.0, u in 0.0f64..=1.0) {
        let s = parabola_secant(r, fmax).unwrap();
        let f = u * fmax;
        prop_assert!(r * f * f <= s.value(f) + rel(r * fmax * fmax));
        prop_assert!((s.value(fmax) - r * fmax * fmax).abs() <= rel(r * fmax * fmax));
        prop_assert_eq!(s.value(0.0), 0.0);
    }

    #[test]
    fn chord_bounds_one_sided_curve(r in 1e-3f64..1e3, a in 0.0f64..5.0, w in 1e-3f64..5.0, u in 0.0f64..=1.0, neg in any::<bool>()) {
        let (lo, hi) = if neg { (-a - w, -a) } else { (a, a + w) };
        let ch = one_way_chord(r, lo, hi);
        let f = lo + u * (hi - lo);
        let tol = rel(r * (a + w).powi(2));
        prop_assert!(ch.violation(f, signed_loss(r, f)) <= tol);
        prop_assert!((ch.value(lo) - signed_loss(r, lo)).abs() <= tol);
        prop_assert!((ch.value(hi) - signed_loss(r, hi)).abs() <= tol);
    }

    #[test]
    fn pump_power_hull_brackets_curve(a1 in -1.0f64..1.0, a0 in 0.0f64..5.0, fmax in 1e-2f64..2.0, eta in 0.3f64..=1.0, u in 0.0f64..=1.0) {
        let h = pump_power_hull(a1, a0, fmax, eta).unwrap();
        let f = u * fmax;
        let (lo, hi) = h.bounds(f);
        let curve = a1 * f * f + a0 * f;
        let tol = 1e-12 * (1.0 + a1.abs() + a0);
        prop_assert!(lo <= curve + tol && curve <= hi + tol);
        let (pl, ph) = h.power_bounds(fmax);
        prop_assert!((pl - ph).abs() <= tol / eta);
        prop_assert!(h.bounds(0.0) == (0.0, 0.0));
    }
}

#[test]
fn polygon_rejects_one_sided_range() {
    assert!(pipe_polygon(1.0, 0.0, 1.0).is_err());
    assert!(pipe_polygon(1.0, -1.0, -0.5).is_err());
    assert!(pipe_polygon(0.0, -1.0, 1.0).is_err());
}

#[test]
fn branch_flow_spec_selects_a_case() {
    let spec = HullSpec::branch_flow(1.2, 0.81, 1.21, 4.0);
    let block = hull_constraints(&spec).unwrap();
    assert!(block.cut.is_some());
}
