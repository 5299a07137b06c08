mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{exact_point_retry, toy};
use wen_core::builder::{build_micp, build_minlp};
use wen_core::study::{self, StudyOptions, Variant};
use wen_core::system::NonconvexExpr;
use wen_core::verifier::{bus_injections, distflow_solve, exactness, hydraulic_input, hydraulic_solve, HydraulicInput};
use wen_core::NexusCase;

#[test]
fn bundled_pumps_hit_their_design_point() {
    let case = NexusCase::bundled();
    let gains: Vec<f64> = case.water.pumps.iter().map(|p| p.head_gain(0.038)).collect();
    assert!((gains[0] - 30.48).abs() < 1e-6, "{gains:?}");
    assert!((gains[1] - 15.24).abs() < 1e-6, "{gains:?}");
}

#[test]
fn idle_network_carries_no_flow() {
    let case = NexusCase::bundled();
    let w = &case.water;
    let fixed: Vec<Option<f64>> = w.nodes.iter().map(|n| n.source.map(|_| n.head_min.max(0.0))).collect();
    let hint: Vec<f64> = w.nodes.iter().map(|n| 0.5 * (n.head_min + n.head_max)).collect();
    let s = hydraulic_solve(
        w,
        &HydraulicInput {
            status: vec![false; w.pumps.len()],
            withdrawal: vec![0.0; w.nodes.len()],
            fixed_head: fixed,
            head_hint: hint,
        },
    )
    .unwrap();
    assert!(s.flow.iter().all(|f| f.abs() < 1e-9), "{:?}", s.flow);
}

#[test]
fn exact_points_have_no_residual() {
    let case = toy(3);
    let exact = build_minlp(&case).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let x = exact_point_retry(&case, &exact, &mut rng, 50).unwrap();
        let r = exactness(&x, &exact, 1e-8).unwrap();
        assert!(r.exact, "{:?}", r.by_kind);
    }
}

#[test]
fn loose_loss_shows_as_residual() {
    let case = toy(2);
    let exact = build_minlp(&case).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut x = exact_point_retry(&case, &exact, &mut rng, 50).unwrap();
    let lay = &exact.layout;
    let (ix, vx) = (lay.line_i[0][1], lay.voltage[case.electric.lines[0].from][1]);
    let delta = 0.25;
    x[ix] += delta;
    let r = exactness(&x, &exact, 1e-5).unwrap();
    assert!(!r.exact);
    assert!((r.by_kind["branch_flow"] - delta * x[vx]).abs() < 1e-9);
    assert_eq!(r.max_residual, r.residuals.iter().map(|q| q.value).fold(0.0, f64::max));
    let per = r.per_period(2);
    assert!(per[0]["branch_flow"] < 1e-8);
    assert!((per[1]["branch_flow"] - r.by_kind["branch_flow"]).abs() < 1e-15);
}

#[test]
fn pipe_residual_measures_distance_to_curve() {
    let case = toy(1);
    let exact = build_minlp(&case).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = exact_point_retry(&case, &exact, &mut rng, 50).unwrap();
    for eq in &exact.nonconvex {
        if let NonconvexExpr::SignedSquare { lhs, flow, coef } = &eq.expr {
            let mut y = x.clone();
            y[*flow] += 0.01;
            let f = y[*flow];
            let want = (lhs.eval(&y) - coef * f * f.abs()).abs();
            assert!((eq.residual(&y) - want).abs() < 1e-12);
            assert!(want > 0.0);
        }
        if let NonconvexExpr::Disjunction { status, flow, .. } = &eq.expr {
            let mut y = x.clone();
            y[*status] = 0.0;
            y[*flow] = 0.03;
            assert!((eq.residual(&y) - 0.03).abs() < 1e-15);
        }
    }
}

#[test]
fn water_flows_down_the_total_head() {
    let case = NexusCase::bundled();
    let out = study::solve(&case, Variant::CoOpt, &StudyOptions::default()).unwrap();
    let w = &case.water;
    for t in 0..case.periods() {
        let input = hydraulic_input(&case, &out.system, &out.x, t);
        let s = hydraulic_solve(w, &input).unwrap();
        for (k, p) in w.pipes.iter().enumerate() {
            if w.pump_on_pipe(k).is_some() {
                continue;
            }
            let total = |i: usize| s.head[i] + w.nodes[i].elevation;
            let drop = total(p.from) - total(p.to);
            assert!(drop * s.flow[k] >= -1e-12, "pipe {} period {t}", p.id);
        }
    }
}

#[test]
fn optimum_round_trips_through_exact_physics() {
    let case = NexusCase::bundled();
    let out = study::solve(&case, Variant::CoOpt, &StudyOptions::default()).unwrap();
    assert!(out.is_exact());
    let (sys, x) = (&out.system, &out.x);
    let lay = &sys.layout;
    let e = &case.electric;
    for t in 0..case.periods() {
        let (p, q) = bus_injections(&case, sys, x, t);
        let s = distflow_solve(e, &p, &q, x[lay.voltage[e.root][t]]).unwrap();
        for (i, b) in e.buses.iter().enumerate() {
            assert!(
                s.v[i] >= b.v_min - 1e-6 && s.v[i] <= b.v_max + 1e-6,
                "bus {} period {t}",
                b.id
            );
            assert!((s.v[i] - x[lay.voltage[i][t]]).abs() < 1e-4);
        }
        for l in 0..e.lines.len() {
            assert!((s.p[l] - x[lay.line_p[l][t]]).abs() < 1e-4);
            assert!((s.q[l] - x[lay.line_q[l][t]]).abs() < 1e-4);
        }
        let h = hydraulic_solve(&case.water, &hydraulic_input(&case, sys, x, t)).unwrap();
        for k in 0..case.water.pipes.len() {
            assert!((h.flow[k] - x[lay.flow[k][t]]).abs() < 1e-4);
        }
        for i in 0..case.water.nodes.len() {
            assert!((h.head[i] - x[lay.head[i][t]]).abs() < 1e-4);
        }
    }
}

#[test]
fn relaxed_and_exact_reports_agree_on_classification() {
    let case = toy(2);
    let out = study::solve(&case, Variant::CoOpt, &StudyOptions::default()).unwrap();
    let exact = build_minlp(&case).unwrap();
    assert_eq!(exact.num_vars(), build_micp(&case).unwrap().num_vars());
    let r = exactness(&out.x, &exact, 1e-5).unwrap();
    assert_eq!(Some(&r), out.exactness.as_ref());
    assert_eq!(r.exact, r.max_residual <= 1e-5);
    assert!(exactness(&out.x[1..], &exact, 1e-5).is_err());
}
