use std::collections::BTreeMap;

use num_complex::Complex64;
use proptest::prelude::*;

use tdcosim::coupler::{boundary_error, BoundaryNorm, BoundaryState, PccBoundary};
use tdcosim::driver::unbalance_factor;
use tdcosim::feeder::{solve_feeder, PhaseSet, SweepOptions};
use tdcosim::fixtures;
use tdcosim::netmodel::{balanced, phases_to_sequence, sequence_to_phase};
use tdcosim::scenarios::{generate, placement_count, PlacementMode, RatingFactors};
use tdcosim::seq_solver::{solve_three_sequence, SolverOptions};

fn phasor() -> impl Strategy<Value = Complex64> {
    (0.0..2.0f64, -std::f64::consts::PI..std::f64::consts::PI).prop_map(|(m, a)| Complex64::from_polar(m, a))
}

fn triple() -> impl Strategy<Value = [Complex64; 3]> {
    [phasor(), phasor(), phasor()]
}

fn boundary(n: usize) -> impl Strategy<Value = BoundaryState> {
    prop::collection::vec((triple(), triple()), n).prop_map(|v| BoundaryState {
        iteration: 0,
        pcc: v
            .into_iter()
            .enumerate()
            .map(|(i, (voltage, power))| PccBoundary {
                bus: i as i64,
                voltage,
                power,
            })
            .collect(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fortescue_roundtrip(v in triple()) {
        let back = sequence_to_phase(&phases_to_sequence(v));
        for p in 0..3 {
            prop_assert!((back[p] - v[p]).norm() <= 1e-12);
        }
    }

    #[test]
    fn boundary_error_is_max_abs_change((a, b) in (1usize..5).prop_flat_map(|n| (boundary(n), boundary(n)))) {
        let mut ev = 0.0f64;
        let mut es = 0.0f64;
        for (x, y) in a.pcc.iter().zip(&b.pcc) {
            for p in 0..3 {
                let dv = x.voltage[p] - y.voltage[p];
                let ds = x.power[p] - y.power[p];
                ev = ev.max((dv.re * dv.re + dv.im * dv.im).sqrt());
                es = es.max((ds.re * ds.re + ds.im * ds.im).sqrt());
            }
        }
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-14 * y.max(1.0);
        prop_assert!(close(boundary_error(&a, &b, BoundaryNorm::VoltageOnly).unwrap(), ev));
        prop_assert!(close(boundary_error(&a, &b, BoundaryNorm::Combined).unwrap(), ev.max(es)));
        prop_assert_eq!(boundary_error(&a, &a, BoundaryNorm::Combined).unwrap(), 0.0);
    }

    #[test]
    fn unbalance_is_scale_and_rotation_invariant(v in triple(), k in 0.1..10.0f64, th in -3.0..3.0f64) {
        prop_assume!(v.iter().all(|x| x.norm() > 1e-3));
        let s = phases_to_sequence(v);
        prop_assume!(s.positive.norm() > 1e-3);
        let u = unbalance_factor(&v).unwrap();
        let w: Vec<Complex64> = v.iter().map(|x| x * Complex64::from_polar(k, th)).collect();
        prop_assert!((unbalance_factor(&w).unwrap() - u).abs() <= 1e-9 * u.max(1.0));
        prop_assert!((u - 100.0 * s.negative.norm() / s.positive.norm()).abs() <= 1e-9 * u.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenario_sets_have_expected_shape(seed in any::<u64>(), n in 1usize..6, independent in any::<bool>()) {
        let feeder = fixtures::ieee13();
        let levels = [10, 30, 50, 100];
        let mode = if independent { PlacementMode::Independent } else { PlacementMode::Incremental };
        let set = generate(&feeder, &levels, n, seed, mode, &RatingFactors::default()).unwrap();
        let customers = feeder.customers().len();
        prop_assert_eq!(set.scenarios.len(), n * levels.len());
        type Key = (String, PhaseSet);
        let mut capacity: BTreeMap<Key, usize> = BTreeMap::new();
        for c in feeder.customers() {
            *capacity.entry((c.node, c.phases)).or_default() += 1;
        }
        for s in 0..n {
            let mut prev: Option<BTreeMap<Key, usize>> = None;
            for &l in &levels {
                let sc = set.get(s, l).unwrap();
                // Customers sharing a node and phases are interchangeable, so
                // uniqueness means no key is used more often than it exists.
                let mut used: BTreeMap<Key, usize> = BTreeMap::new();
                for u in &sc.placements {
                    *used.entry((u.node.clone(), u.phases)).or_default() += 1;
                }
                prop_assert_eq!(sc.placements.len(), placement_count(l, customers));
                prop_assert!(used.iter().all(|(k, &m)| m <= capacity.get(k).copied().unwrap_or(0)));
                prop_assert!(sc.placements.iter().all(|u| u.rating_kw > 0.0));
                if mode == PlacementMode::Incremental {
                    if let Some(p) = &prev {
                        prop_assert!(p.iter().all(|(k, &m)| used.get(k).copied().unwrap_or(0) >= m));
                    }
                }
                prev = Some(used);
            }
        }
        let again = generate(&feeder, &levels, n, seed, mode, &RatingFactors::default()).unwrap();
        prop_assert_eq!(set, again);
    }

    #[test]
    fn more_pv_never_draws_more_power(pick in any::<prop::sample::Index>(), kw in 1.0..300.0f64, extra in 1.0..200.0f64) {
        let mut feeder = fixtures::ieee13();
        let customers = feeder.customers();
        let c = pick.get(&customers);
        let i = feeder.node_index(&c.node).unwrap();
        let ph = c.phases.iter().next().unwrap();
        let src = balanced(Complex64::new(1.0, 0.0));
        let opts = SweepOptions::default();
        feeder.nodes[i].pv_kw[ph] += kw;
        let before = solve_feeder(&feeder, src, &opts).unwrap();
        feeder.nodes[i].pv_kw[ph] += extra;
        let after = solve_feeder(&feeder, src, &opts).unwrap();
        let p = |s: &tdcosim::feeder::FeederSolution| s.pcc_power.iter().map(|x| x.re).sum::<f64>();
        prop_assert!(p(&after) <= p(&before) + 1e-6, "{} -> {}", p(&before), p(&after));
    }

    #[test]
    fn transmission_power_balance_under_load_scaling(k in 0.3..1.3f64) {
        let net = fixtures::ieee9().with_load_scale(k);
        let opts = SolverOptions::default();
        let sol = solve_three_sequence(&net, &[], &opts).unwrap();
        let gen: f64 = net.scheduled_generation().iter().sum::<f64>() + sol.slack_power.re;
        let load: f64 = net.buses.iter().map(|b| b.load_p).sum();
        let loss: f64 = sol.branch_flows.iter().map(|f| f.loss().re).sum();
        prop_assert!((gen - load - loss).abs() < 10.0 * opts.tol_nr);
        prop_assert!(loss >= 0.0);
    }
}
