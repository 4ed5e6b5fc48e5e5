use num_complex::Complex64;

use super::*;
use crate::linalg::DenseMatrix;
use crate::netmodel::{a, load_network, sequence_to_phase, BusKind};

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

const TWO_BUS: &str = r#"{
    "mva_base": 100,
    "buses": [
        {"id": 1, "kind": "slack", "base_kv": 230, "v_setpoint": 1.0},
        {"id": 2, "kind": "pq", "base_kv": 230, "load_p": 1.0, "load_q": 0.5}
    ],
    "branches": [{"from": 1, "to": 2, "z1": [0.01, 0.1], "z0": [0.03, 0.3]}],
    "generators": [{"bus": 1}]
}"#;

fn two_bus() -> TransmissionNetwork {
    load_network(TWO_BUS).unwrap()
}

fn nine_bus() -> TransmissionNetwork {
    crate::fixtures::ieee9()
}

fn tight() -> SolverOptions {
    SolverOptions {
        tol_nr: 1e-12,
        tol_seq: 1e-12,
        ..SolverOptions::default()
    }
}

/// Positive-sequence bus admittance built straight from the branch data
/// with the usual tapped pi model.
fn ybus(net: &TransmissionNetwork) -> Vec<Vec<C>> {
    let n = net.len();
    let mut y = vec![vec![c(0.0, 0.0); n]; n];
    for (i, b) in net.buses.iter().enumerate() {
        y[i][i] += c(b.shunt_g, b.shunt_b);
    }
    for br in &net.branches {
        let (f, t) = (net.bus_index(br.from).unwrap(), net.bus_index(br.to).unwrap());
        let ys = c(1.0, 0.0) / br.z1;
        let sh = c(0.0, br.b1 / 2.0);
        let tap = br.tap;
        y[f][f] += ys / (tap * tap) + sh;
        y[t][t] += ys + sh;
        y[f][t] -= ys / tap;
        y[t][f] -= ys / tap;
    }
    y
}

/// Gauss-Seidel power flow with pv-bus magnitude reset.
fn gauss_seidel(net: &TransmissionNetwork) -> Vec<C> {
    let y = ybus(net);
    let n = net.len();
    let gen = net.scheduled_generation();
    let mut v: Vec<C> = (0..n)
        .map(|i| c(net.setpoint(i).filter(|_| net.buses[i].kind != BusKind::Pq).unwrap_or(1.0), 0.0))
        .collect();
    for _ in 0..200_000 {
        let mut change = 0.0f64;
        for i in 0..n {
            let kind = net.buses[i].kind;
            if kind == BusKind::Slack {
                continue;
            }
            let sum: C = (0..n).filter(|&j| j != i).map(|j| y[i][j] * v[j]).sum();
            let mut s = c(gen[i], 0.0) - net.buses[i].load();
            if kind == BusKind::Pv {
                let q = -(v[i].conj() * (sum + y[i][i] * v[i])).im;
                s.im = q;
            }
            let mut vi = ((s / v[i]).conj() - sum) / y[i][i];
            if kind == BusKind::Pv {
                vi = vi / vi.norm() * net.setpoint(i).unwrap();
            }
            change = change.max((vi - v[i]).norm());
            v[i] = vi;
        }
        if change < 1e-13 {
            return v;
        }
    }
    panic!("Gauss-Seidel oracle did not converge");
}

#[test]
fn two_bus_matches_gauss_seidel() {
    let net = two_bus();
    let gs = gauss_seidel(&net);
    let nr = solve_positive_nr(&net, &[c(0.0, 0.0); 2], &SolverOptions::default()).unwrap();
    assert!((nr[1] - gs[1]).norm() < 1e-8, "{} vs {}", nr[1], gs[1]);
}

#[test]
fn nine_bus_matches_gauss_seidel() {
    let net = nine_bus();
    let gs = gauss_seidel(&net);
    let sol = solve_three_sequence(&net, &[], &SolverOptions::default()).unwrap();
    for (v, g) in sol.voltages.iter().zip(&gs) {
        assert!((v.positive - g).norm() < 1e-7, "{} vs {}", v.positive, g);
    }
    assert!(sol.max_mismatch <= SolverOptions::default().tol_nr);
}

#[test]
fn no_load_network_is_flat() {
    let net = two_bus().with_load_scale(0.0);
    let sol = solve_three_sequence(&net, &[], &SolverOptions::default()).unwrap();
    for v in &sol.voltages {
        assert!((v.positive - c(1.0, 0.0)).norm() < 1e-12);
    }
    assert!(sol.slack_power.norm() < 1e-12);
}

#[test]
fn balanced_pcc_loads_degenerate_to_single_sequence() {
    let net = nine_bus();
    let pcc: Vec<PccLoad> = [5, 6, 8]
        .iter()
        .map(|&b| PccLoad::balanced(b, net.bus(b).unwrap().load()))
        .collect();
    let stripped = net.without_loads(&[5, 6, 8]).unwrap();
    let sol = solve_three_sequence(&stripped, &pcc, &tight()).unwrap();
    let plain = solve_positive_nr(&net, &vec![c(0.0, 0.0); net.len()], &tight()).unwrap();
    assert!(sol.iterations_outer <= 2, "{} outer iterations", sol.iterations_outer);
    for (s, p) in sol.voltages.iter().zip(&plain) {
        assert!(s.zero.norm() < 1e-9 && s.negative.norm() < 1e-9);
        assert!((s.positive - p).norm() < 1e-10);
    }
}

fn unbalanced_nine_bus(delta: f64) -> (TransmissionNetwork, Vec<PccLoad>) {
    let net = nine_bus();
    let pcc = [5, 6, 8]
        .iter()
        .map(|&b| {
            let s = net.bus(b).unwrap().load() / 3.0;
            PccLoad {
                bus: b,
                phase_power: [s * (1.0 + delta), s, s * (1.0 - delta)],
            }
        })
        .collect();
    (net.without_loads(&[5, 6, 8]).unwrap(), pcc)
}

#[test]
fn small_load_unbalance_gives_small_negative_sequence() {
    let (net, pcc) = unbalanced_nine_bus(0.002);
    let sol = solve_three_sequence(&net, &pcc, &SolverOptions::default()).unwrap();
    for b in [5, 6, 8] {
        let v = sol.voltage(b).unwrap();
        let r = v.negative.norm() / v.positive.norm();
        assert!(r > 0.0 && r <= 0.002, "bus {b}: {r}");
    }
}

/// Brute-force phase-frame solve of a two-bus system: balanced source at
/// bus 1, per-phase constant-power load at bus 2, line `A·diag(y)·A⁻¹`.
fn abc_two_bus(net: &TransmissionNetwork, load: [C; 3]) -> [C; 3] {
    let br = &net.branches[0];
    let al = a();
    let syn = DenseMatrix::from_rows(&[
        vec![c(1.0, 0.0); 3],
        vec![c(1.0, 0.0), al * al, al],
        vec![c(1.0, 0.0), al, al * al],
    ]);
    let mut y = DenseMatrix::zeros(3, 3);
    for s in 0..3 {
        for i in 0..3 {
            for j in 0..3 {
                // inverse of the synthesis matrix is conj(syn)^T / 3
                y[(i, j)] += syn[(i, s)] * (c(1.0, 0.0) / br.z(s)) * syn[(j, s)].conj() / 3.0;
            }
        }
    }
    let lu = y.lu().unwrap();
    let vs = [c(1.0, 0.0), al * al, al];
    let mut v = vs;
    for _ in 0..10_000 {
        // y·(V2 - Vs) = -I_load
        let i_load: Vec<C> = (0..3).map(|p| -(load[p] * 3.0 / v[p]).conj()).collect();
        let dv = lu.solve(&i_load);
        let next: [C; 3] = std::array::from_fn(|p| vs[p] + dv[p]);
        let ch = (0..3).map(|p| (next[p] - v[p]).norm()).fold(0.0, f64::max);
        v = next;
        if ch < 1e-14 {
            return v;
        }
    }
    panic!("phase-frame oracle did not converge");
}

#[test]
fn two_bus_unbalanced_matches_phase_frame() {
    let net = two_bus().with_load_scale(0.0);
    let load = [c(0.35, 0.15), c(0.30, 0.20), c(0.40, 0.12)];
    let sol = solve_three_sequence(&net, &[PccLoad { bus: 2, phase_power: load }], &tight()).unwrap();
    let got = sequence_to_phase(&sol.voltages[1]);
    let want = abc_two_bus(&net, load);
    for p in 0..3 {
        assert!((got[p] - want[p]).norm() < 1e-6, "phase {p}: {} vs {}", got[p], want[p]);
    }
    assert!(sol.voltages[1].negative.norm() > 1e-4);
}

#[test]
fn unbalanced_load_has_negative_sequence_compensation() {
    let net = two_bus().with_load_scale(0.0);
    let s = c(0.1, 0.05);
    let load = PccLoad {
        bus: 2,
        phase_power: [s * 1.05, s, s * 0.95],
    };
    let v = vec![SequenceSet::positive(c(1.0, 0.0)); 2];
    let comp = compensation_currents(&net, &v, &[load]).unwrap();
    assert!(comp[1].negative.norm() > 1e-3);
    // Equal phase powers leave nothing to compensate.
    let comp = compensation_currents(&net, &v, &[PccLoad::balanced(2, s * 3.0)]).unwrap();
    assert!(comp[1].negative.norm() < 1e-15 && comp[1].positive.norm() < 1e-15);
}

#[test]
fn transposed_balanced_network_needs_no_compensation() {
    let net = nine_bus();
    let sol = solve_three_sequence(&net, &[], &SolverOptions::default()).unwrap();
    let comp = compensation_currents(&net, &sol.voltages, &[]).unwrap();
    assert!(comp.iter().all(|s| s.to_array().iter().all(|x| x.norm() == 0.0)));
}

#[test]
fn single_coupling_element_by_hand() {
    let text = TWO_BUS.replace(
        r#""z0": [0.03, 0.3]}"#,
        r#""z0": [0.03, 0.3], "coupling": [{"row": 2, "col": 1, "z": [0.0, 0.02]}]}"#,
    );
    let net = load_network(&text).unwrap();
    let v = vec![SequenceSet::positive(c(1.0, 0.0)), SequenceSet::positive(c(0.95, -0.05))];
    let comp = compensation_currents(&net, &v, &[]).unwrap();
    // Z = [[z0,0,0],[0,z1,0],[0,zc,z2]] has Y[2][1] = -zc/(z1·z2).
    let (z1, zc) = (c(0.01, 0.1), c(0.0, 0.02));
    let y21 = -zc / (z1 * z1);
    let i = y21 * (v[0].positive - v[1].positive);
    assert!((comp[0].negative + i).norm() < 1e-14);
    assert!((comp[1].negative - i).norm() < 1e-14);
    assert_eq!(comp[0].zero, c(0.0, 0.0));
}

#[test]
fn linear_solve_zero_injection() {
    let net = nine_bus();
    let y = build_sequence_admittance(&net, 2);
    let ids: Vec<i64> = net.buses.iter().map(|b| b.id).collect();
    let v = solve_sequence_linear(&y, &[c(0.0, 0.0); 9], &[0], &ids).unwrap();
    assert!(v.iter().all(|x| x.norm() == 0.0));
}

#[test]
fn linear_solve_three_bus_by_hand() {
    let text = r#"{
        "buses": [
            {"id": 1, "kind": "slack", "base_kv": 1, "v_setpoint": 1.0},
            {"id": 2, "kind": "pq", "base_kv": 1},
            {"id": 3, "kind": "pq", "base_kv": 1}
        ],
        "branches": [{"from": 1, "to": 2, "z1": [0, 0.1]}, {"from": 2, "to": 3, "z1": [0, 0.2]}]
    }"#;
    let net = load_network(text).unwrap();
    let y = build_sequence_admittance(&net, 2);
    let inj = [c(0.0, 0.0), c(0.3, -0.1), c(-0.2, 0.4)];
    let v = solve_sequence_linear(&y, &inj, &[0], &[1, 2, 3]).unwrap();
    // Reduced 2×2 system [[y1+y2, -y2], [-y2, y2]] inverted by hand.
    let (y1, y2) = (c(1.0, 0.0) / c(0.0, 0.1), c(1.0, 0.0) / c(0.0, 0.2));
    let (m11, m12, m22) = (y1 + y2, -y2, y2);
    let det = m11 * m22 - m12 * m12;
    let v2 = (m22 * inj[1] - m12 * inj[2]) / det;
    let v3 = (-m12 * inj[1] + m11 * inj[2]) / det;
    assert_eq!(v[0], c(0.0, 0.0));
    assert!((v[1] - v2).norm() < 1e-12 && (v[2] - v3).norm() < 1e-12);
}

#[test]
fn linear_solve_residual_on_random_injections() {
    use rand_chacha::ChaCha20Rng;
    use rand_core::{RngCore, SeedableRng};
    let net = nine_bus();
    let ids: Vec<i64> = net.buses.iter().map(|b| b.id).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let mut u = || (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64 - 0.5;
    for seq in [0, 2] {
        let y = build_sequence_admittance(&net, seq);
        let mut inj: Vec<C> = (0..9).map(|_| c(u(), u())).collect();
        inj[0] = c(0.0, 0.0);
        let v = solve_sequence_linear(&y, &inj, &[0], &ids).unwrap();
        let r = y.mul_vec(&v);
        for i in 1..9 {
            assert!((r[i] - inj[i]).norm() < 1e-10);
        }
    }
}

#[test]
fn isolated_zero_sequence_island_is_reported() {
    let text = r#"{
        "buses": [
            {"id": 1, "kind": "slack", "base_kv": 1, "v_setpoint": 1.0},
            {"id": 2, "kind": "pq", "base_kv": 1},
            {"id": 3, "kind": "pq", "base_kv": 1}
        ],
        "branches": [{"from": 1, "to": 2, "z1": [0, 0.1]},
                     {"from": 2, "to": 3, "z1": [0, 0.2], "zero_seq_open": true}]
    }"#;
    let net = load_network(text).unwrap();
    let y0 = build_sequence_admittance(&net, 0);
    let err = solve_sequence_linear(&y0, &[c(0.0, 0.0); 3], &[0], &[1, 2, 3]).unwrap_err();
    assert!(matches!(err, Error::SingularSystem { ref buses } if buses == &vec![3]), "{err}");
}

#[test]
fn slack_power_signs() {
    let net = nine_bus();
    let sol = solve_three_sequence(&net, &[], &SolverOptions::default()).unwrap();
    assert!(sol.slack_power.re > 0.0);
    // Loads below the fixed pv-bus generation push power back into the slack.
    let light = net.with_load_scale(0.5);
    let sol = solve_three_sequence(&light, &[], &SolverOptions::default()).unwrap();
    assert!(sol.slack_power.re < 0.0);
}

#[test]
fn two_bus_branch_flow_by_hand() {
    let net = two_bus();
    let sol = solve_three_sequence(&net, &[], &tight()).unwrap();
    let (v1, v2) = (sol.voltages[0].positive, sol.voltages[1].positive);
    let z = c(0.01, 0.1);
    let f = &sol.branch_flows[0];
    assert!((f.from_end.positive - v1 * ((v1 - v2) / z).conj()).norm() < 1e-12);
    assert!((f.to_end.positive - v2 * ((v2 - v1) / z).conj()).norm() < 1e-12);
    assert!((f.loss() - z * ((v1 - v2) / z).norm_sqr()).norm() < 1e-12);
    assert!((f.to_total() + c(1.0, 0.5)).norm() < 1e-10);
}

#[test]
fn branch_four_five_reverses_under_light_load() {
    let net = nine_bus();
    let p45 = |n: &TransmissionNetwork| {
        let sol = solve_three_sequence(n, &[], &SolverOptions::default()).unwrap();
        sol.branch_flows.iter().find(|f| f.from == 4 && f.to == 5).unwrap().from_total().re
    };
    let heavy = p45(&net);
    let light = p45(&net.with_bus_load(5, c(-1.0, 0.0)).unwrap());
    assert!(heavy > 0.0 && light < 0.0, "{heavy} {light}");
}

#[test]
fn power_balance_closes() {
    let net = nine_bus();
    let opts = SolverOptions::default();
    let sol = solve_three_sequence(&net, &[], &opts).unwrap();
    let gen: f64 = net.scheduled_generation().iter().sum::<f64>() + sol.slack_power.re;
    let load: f64 = net.buses.iter().map(|b| b.load_p).sum();
    let loss: f64 = sol.branch_flows.iter().map(|f| f.loss().re).sum();
    assert!((gen - load - loss).abs() < 10.0 * opts.tol_nr, "{}", gen - load - loss);
}

#[test]
fn mismatch_certificate() {
    let net = nine_bus();
    let opts = SolverOptions::default();
    let sol = solve_three_sequence(&net, &[], &opts).unwrap();
    let y = ybus(&net);
    let v = sol.positive_voltages();
    let gen = net.scheduled_generation();
    for (i, b) in net.buses.iter().enumerate() {
        let s = v[i] * (0..9).map(|j| y[i][j] * v[j]).sum::<C>().conj();
        match b.kind {
            BusKind::Pq => assert!((s - (c(gen[i], 0.0) - b.load())).norm() <= opts.tol_nr),
            BusKind::Pv => assert!((s.re - gen[i]).abs() <= opts.tol_nr),
            BusKind::Slack => {}
        }
    }
}

#[test]
fn newton_tail_is_quadratic() {
    for net in [two_bus(), nine_bus()] {
        let y1 = build_sequence_admittance(&net, 1);
        let nr = solve_positive_nr_from(&net, &y1, &vec![c(0.0, 0.0); net.len()], None, &SolverOptions::default())
            .unwrap();
        let h = &nr.mismatch_history;
        assert!(h.len() >= 3, "{h:?}");
        let (last, prev) = (h[h.len() - 1], h[h.len() - 2]);
        assert!(last <= prev / 10.0, "{h:?}");
    }
}

#[test]
fn slack_output_rises_with_load() {
    let base = nine_bus();
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=10 {
        let s = 0.2 + 0.1 * k as f64;
        let p = solve_three_sequence(&base.with_load_scale(s), &[], &SolverOptions::default())
            .unwrap()
            .slack_power
            .re;
        assert!(p > prev, "scale {s}: {p} <= {prev}");
        prev = p;
    }
}

#[test]
fn outer_loop_failure_reports_last_change() {
    let (net, pcc) = unbalanced_nine_bus(0.2);
    let opts = SolverOptions {
        max_outer: 1,
        tol_seq: 1e-15,
        ..SolverOptions::default()
    };
    match solve_three_sequence(&net, &pcc, &opts).unwrap_err() {
        Error::NonConvergence { residual, .. } => assert!(residual.is_finite() && residual > 0.0),
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn unknown_pcc_bus_is_rejected() {
    let err = solve_three_sequence(&two_bus(), &[PccLoad::balanced(7, c(0.1, 0.0))], &SolverOptions::default());
    assert!(matches!(err, Err(Error::UnknownBus(7))));
}
