//! Monolithic reference solve of the transmission network and all attached
//! feeders as one phase-frame network.
//!
//! The combined nodal admittance matrix is built in phase coordinates
//! (transmission branches via `A·Ys·A⁻¹`), the slack bus is a fixed balanced
//! source, loads are current injections re-evaluated each pass, and pv-bus
//! generators are positive-sequence current sources whose value is chosen
//! every pass so that the bus holds its |V1| setpoint and delivers its
//! scheduled active power. The fixed point is reached by Z-bus Gauss
//! iteration on the factorised free-node block.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coupler::{CoSimResult, CoSimSystem};
use crate::error::{Error, Result};
use crate::feeder::{FeederModel, FEEDER_MVA_BASE};
use crate::linalg::DenseMatrix;
use crate::netmodel::{a, analysis_matrix, balanced, bus_sequence_shunts, phases_to_sequence, sequence_branches, synthesis_matrix, BusKind};

type C = Complex64;
const C0: C = C::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleOptions {
    /// Largest nodal current mismatch at convergence, per-unit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OraclePcc {
    pub bus: i64,
    pub voltage: [C; 3],
    /// Per-phase power into the feeder(s), per-unit on the system base.
    pub power: [C; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnifiedSolution {
    pub bus_ids: Vec<i64>,
    /// Transmission bus phase voltages, per-unit.
    pub bus_voltages: Vec<[C; 3]>,
    /// Feeder node phase voltages per attachment, per-unit; absent phases zero.
    pub feeder_voltages: Vec<Vec<[C; 3]>>,
    pub pcc: Vec<OraclePcc>,
    pub slack_power: C,
    pub iterations: usize,
    pub converged: bool,
    pub mismatch: f64,
}

impl UnifiedSolution {
    pub fn pcc_positive(&self) -> Vec<C> {
        self.pcc.iter().map(|p| phases_to_sequence(p.voltage).positive).collect()
    }

    pub fn bus_voltage(&self, bus: i64) -> Option<[C; 3]> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.bus_voltages[i])
    }
}

/// Phase-frame image of a sequence-domain block: `A·M·A⁻¹`.
fn to_phase(m: &[[C; 3]; 3]) -> [[C; 3]; 3] {
    let s = synthesis_matrix();
    let t = analysis_matrix();
    let mut out = [[C0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = C0;
            for k in 0..3 {
                for l in 0..3 {
                    acc += s[(i, k)] * m[k][l] * t[(l, j)];
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

fn invert_present(z: &[[C; 3]; 3], present: &[usize]) -> Vec<Vec<C>> {
    let n = present.len();
    let mut m = DenseMatrix::zeros(n, n);
    for (r, &p) in present.iter().enumerate() {
        for (c, &q) in present.iter().enumerate() {
            m[(r, c)] = z[p][q];
        }
    }
    let lu = m.lu().expect("line impedance matrix is singular");
    let mut inv = vec![vec![C0; n]; n];
    for j in 0..n {
        let mut e = vec![C0; n];
        e[j] = C::new(1.0, 0.0);
        for (i, x) in lu.solve(&e).into_iter().enumerate() {
            inv[i][j] = x;
        }
    }
    inv
}

struct Layout {
    /// Global index of each transmission bus phase.
    bus: Vec<[usize; 3]>,
    /// Global index of each feeder node phase, per attachment.
    feeder: Vec<Vec<[Option<usize>; 3]>>,
    size: usize,
}

struct Loads {
    /// Positive-sequence constant-power loads at transmission buses.
    bus: Vec<(usize, C)>,
    /// Per attachment: node, phase, per-phase per-unit power on the feeder's
    /// per-phase base, and the scaling of currents to the system base.
    feeder: Vec<(usize, C, f64)>,
}

/// Solves the unified model of `system` with the given scenario-applied
/// feeders, one per attachment.
pub fn solve_unified(system: &CoSimSystem, feeders: &[FeederModel], opts: &OracleOptions) -> Result<UnifiedSolution> {
    let net = &system.net;
    let atts = &system.attachments;
    if feeders.len() != atts.len() {
        return Err(Error::Mismatch(format!("{} feeders for {} attachments", feeders.len(), atts.len())));
    }

    let mut next = 0;
    let bus: Vec<[usize; 3]> = (0..net.len())
        .map(|_| {
            next += 3;
            [next - 3, next - 2, next - 1]
        })
        .collect();
    let feeder_idx: Vec<Vec<[Option<usize>; 3]>> = feeders
        .iter()
        .map(|f| {
            f.nodes
                .iter()
                .map(|n| {
                    std::array::from_fn(|p| {
                        n.phases.contains(p).then(|| {
                            next += 1;
                            next - 1
                        })
                    })
                })
                .collect()
        })
        .collect();
    let lay = Layout {
        bus,
        feeder: feeder_idx,
        size: next,
    };
    let n = lay.size;
    let mut y = DenseMatrix::<C>::zeros(n, n);

    // Transmission branches and shunts.
    for br in sequence_branches(net) {
        let t = br.tap;
        let mut ff = [[C0; 3]; 3];
        let mut ft = [[C0; 3]; 3];
        let mut tt = [[C0; 3]; 3];
        for r in 0..3 {
            for c in 0..3 {
                let ys = br.ys[(r, c)];
                ff[r][c] = ys / (t * t);
                ft[r][c] = -ys / t;
                tt[r][c] = ys;
            }
            ff[r][r] += br.half_shunt[r];
            tt[r][r] += br.half_shunt[r];
        }
        ff[0][0] += br.ground_from;
        tt[0][0] += br.ground_to;
        let (ff, ft, tt) = (to_phase(&ff), to_phase(&ft), to_phase(&tt));
        let (fi, ti) = (lay.bus[br.from], lay.bus[br.to]);
        for r in 0..3 {
            for c in 0..3 {
                y[(fi[r], fi[c])] += ff[r][c];
                y[(fi[r], ti[c])] += ft[r][c];
                y[(ti[r], fi[c])] += ft[r][c];
                y[(ti[r], ti[c])] += tt[r][c];
            }
        }
    }
    for (i, sh) in bus_sequence_shunts(net).iter().enumerate() {
        let m = to_phase(&[[sh[0], C0, C0], [C0, sh[1], C0], [C0, C0, sh[2]]]);
        for r in 0..3 {
            for c in 0..3 {
                y[(lay.bus[i][r], lay.bus[i][c])] += m[r][c];
            }
        }
    }

    // Feeders, scaled to the system base and the number of copies.
    let mut loads = Loads {
        bus: Vec::new(),
        feeder: Vec::new(),
    };
    for (i, b) in net.buses.iter().enumerate() {
        if b.kind != BusKind::Slack && b.load() != C0 {
            loads.bus.push((i, b.load()));
        }
    }
    let mut head_branch = Vec::with_capacity(atts.len());
    for (k, (att, f)) in atts.iter().zip(feeders).enumerate() {
        let scale = att.copies * FEEDER_MVA_BASE / net.mva_base;
        let root = f.root();
        let ti = lay.bus[net.bus_index(att.bus).ok_or(Error::UnknownBus(att.bus))?];
        let ri = lay.feeder[k][root];
        let yt = scale / f.transformer_z_pu();
        let ratio = att.voltage_ratio / f.transformer.tap;
        // Feeder phase p hangs off system phase p + rotation.
        let ti: [usize; 3] = std::array::from_fn(|p| ti[att.system_phase(p)]);
        for p in 0..3 {
            let r = ri[p].expect("substation carries abc");
            y[(ti[p], ti[p])] += yt * ratio * ratio;
            y[(ti[p], r)] -= yt * ratio;
            y[(r, ti[p])] -= yt * ratio;
            y[(r, r)] += yt;
        }
        head_branch.push((ti, ri.map(|x| x.expect("abc")), yt, ratio));
        for node in 0..f.nodes.len() {
            if let Some((par, line)) = f.parent(node) {
                let present: Vec<usize> = f.nodes[node].phases.iter().collect();
                let yl = invert_present(&f.line_z_pu(line), &present);
                for (r, &p) in present.iter().enumerate() {
                    for (c, &q) in present.iter().enumerate() {
                        let v = yl[r][c] * scale;
                        let (ip, iq) = (lay.feeder[k][node][p].unwrap(), lay.feeder[k][node][q].unwrap());
                        let (pp, pq) = (lay.feeder[k][par][p].unwrap(), lay.feeder[k][par][q].unwrap());
                        y[(pp, pq)] += v;
                        y[(pp, iq)] -= v;
                        y[(ip, pq)] -= v;
                        y[(ip, iq)] += v;
                    }
                }
            }
            for p in f.nodes[node].phases.iter() {
                let g = lay.feeder[k][node][p].expect("present phase");
                y[(g, g)] += f.shunt_admittance_pu(node, p) * scale;
            }
            let per_phase_base = FEEDER_MVA_BASE * 1000.0 / 3.0;
            for (p, s) in f.nodes[node].net_load().iter().enumerate() {
                if *s != C0 {
                    let idx = lay.feeder[k][node][p].expect("validated load phase");
                    loads.feeder.push((idx, s / per_phase_base, scale));
                }
            }
        }
    }

    // Partition: slack phases are fixed.
    let slack = net.slack_index();
    let vs = balanced(C::new(net.setpoint(slack).expect("slack setpoint"), 0.0));
    let fixed = lay.bus[slack];
    let mut pos = vec![usize::MAX; n];
    let free: Vec<usize> = (0..n).filter(|i| !fixed.contains(i)).collect();
    for (k, &i) in free.iter().enumerate() {
        pos[i] = k;
    }
    let nf = free.len();
    let mut yff = DenseMatrix::zeros(nf, nf);
    for (r, &i) in free.iter().enumerate() {
        for (c, &j) in free.iter().enumerate() {
            yff[(r, c)] = y[(i, j)];
        }
    }
    let lu = yff.lu().map_err(|k| {
        let g = free[k];
        let bus = lay.bus.iter().position(|b| b.contains(&g));
        Error::SingularSystem {
            buses: bus.map(|b| vec![net.buses[b].id]).unwrap_or_default(),
        }
    })?;
    let from_slack: Vec<C> = free
        .iter()
        .map(|&i| (0..3).map(|p| y[(i, fixed[p])] * vs[p]).sum())
        .collect();

    // Generator current patterns and their voltage response.
    let pattern = [C::new(1.0, 0.0), a() * a(), a()];
    let gens: Vec<(usize, f64, f64)> = net
        .generators
        .iter()
        .filter_map(|g| {
            let i = net.bus_index(g.bus).expect("validated");
            (net.buses[i].kind == BusKind::Pv).then(|| (i, g.p_set, net.setpoint(i).expect("pv setpoint")))
        })
        .collect();
    let response: Vec<Vec<C>> = gens
        .iter()
        .map(|&(i, _, _)| {
            let mut e = vec![C0; nf];
            for p in 0..3 {
                e[pos[lay.bus[i][p]]] = pattern[p];
            }
            lu.solve(&e)
        })
        .collect();
    let v1_at = |v: &[C], bus: usize| -> C {
        let ph = lay.bus[bus].map(|g| v[pos[g]]);
        phases_to_sequence(ph).positive
    };
    let m: Vec<Vec<C>> = gens
        .iter()
        .map(|&(gi, _, _)| response.iter().map(|r| v1_at(r, gi)).collect())
        .collect();

    let injections = |v: &[C]| -> Vec<C> {
        let mut inj: Vec<C> = from_slack.iter().map(|x| -x).collect();
        for &(bi, s) in &loads.bus {
            let v1 = v1_at(v, bi);
            let i1 = (s / v1).conj();
            for p in 0..3 {
                inj[pos[lay.bus[bi][p]]] -= pattern[p] * i1;
            }
        }
        for &(g, s, scale) in &loads.feeder {
            let k = pos[g];
            inj[k] -= (s / v[k]).conj() * scale;
        }
        inj
    };

    let mut v: Vec<C> = vec![C0; nf];
    for (b, idx) in lay.bus.iter().enumerate() {
        let mag = match net.buses[b].kind {
            BusKind::Pq => 1.0,
            _ => net.setpoint(b).expect("setpoint"),
        };
        for p in 0..3 {
            if pos[idx[p]] != usize::MAX {
                v[pos[idx[p]]] = balanced(C::new(mag, 0.0))[p];
            }
        }
    }
    for (k, (att, f)) in atts.iter().zip(feeders).enumerate() {
        let sys = balanced(C::new(att.voltage_ratio / f.transformer.tap, 0.0));
        let src: [C; 3] = std::array::from_fn(|p| sys[att.system_phase(p)]);
        for node in &lay.feeder[k] {
            for p in 0..3 {
                if let Some(g) = node[p] {
                    v[pos[g]] = src[p];
                }
            }
        }
    }
    let mut ig: Vec<C> = gens.iter().map(|&(_, p, vset)| C::new(p / vset, 0.0)).collect();

    let dense_free_mul = |v: &[C]| -> Vec<C> {
        (0..nf)
            .map(|r| (0..nf).map(|c| yff[(r, c)] * v[c]).sum())
            .collect()
    };

    let mut iterations = 0;
    let mut mismatch;
    loop {
        let inj = injections(&v);
        let mut gen_inj = inj.clone();
        for (h, &(gi, _, _)) in gens.iter().enumerate() {
            for p in 0..3 {
                gen_inj[pos[lay.bus[gi][p]]] += pattern[p] * ig[h];
            }
        }
        let r: Vec<C> = dense_free_mul(&v).iter().zip(&gen_inj).map(|(a, b)| a - b).collect();
        mismatch = r.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        let gen_ok = gens.iter().enumerate().all(|(h, &(gi, p, vset))| {
            let v1 = v1_at(&v, gi);
            (v1.norm() - vset).abs() <= opts.tol && ((v1 * ig[h].conj()).re - p).abs() <= opts.tol
        });
        if mismatch <= opts.tol && gen_ok {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                solver: "unified phase-frame current injection",
                iterations,
                residual: mismatch,
            });
        }
        iterations += 1;

        let base = lu.solve(&inj);
        let c: Vec<C> = gens.iter().map(|&(gi, _, _)| v1_at(&base, gi)).collect();
        solve_generator_currents(&c, &m, &gens, &mut ig)?;
        v = base;
        for (h, r) in response.iter().enumerate() {
            for (x, dr) in v.iter_mut().zip(r) {
                *x += dr * ig[h];
            }
        }
    }

    let full = |g: usize| -> C {
        if pos[g] == usize::MAX {
            vs[fixed.iter().position(|&f| f == g).expect("fixed")]
        } else {
            v[pos[g]]
        }
    };
    let bus_voltages: Vec<[C; 3]> = lay.bus.iter().map(|idx| idx.map(&full)).collect();
    let feeder_voltages: Vec<Vec<[C; 3]>> = lay
        .feeder
        .iter()
        .map(|nodes| nodes.iter().map(|idx| idx.map(|g| g.map(&full).unwrap_or(C0))).collect())
        .collect();
    let pcc = atts
        .iter()
        .zip(&head_branch)
        .map(|(att, &(ti, ri, yt, ratio))| {
            let mut voltage = [C0; 3];
            let mut power = [C0; 3];
            for p in 0..3 {
                let vt = full(ti[p]);
                let i = yt * ratio * (ratio * vt - full(ri[p]));
                voltage[att.system_phase(p)] = vt;
                power[att.system_phase(p)] = vt * i.conj() / 3.0;
            }
            OraclePcc {
                bus: att.bus,
                voltage,
                power,
            }
        })
        .collect();
    let slack_current: [C; 3] = std::array::from_fn(|p| (0..n).map(|j| y[(fixed[p], j)] * full(j)).sum());
    let slack_power: C = (0..3).map(|p| vs[p] * slack_current[p].conj() / 3.0).sum::<C>() + net.buses[slack].load();

    Ok(UnifiedSolution {
        bus_ids: net.buses.iter().map(|b| b.id).collect(),
        bus_voltages,
        feeder_voltages,
        pcc,
        slack_power,
        iterations,
        converged: true,
        mismatch,
    })
}

/// Newton solve for the generator positive-sequence currents given
/// `V1_g = c_g + Σ_h m_gh·I_h`, enforcing `|V1_g| = Vset` and
/// `Re(V1_g·conj(I_g)) = P`.
fn solve_generator_currents(c: &[C], m: &[Vec<C>], gens: &[(usize, f64, f64)], ig: &mut [C]) -> Result<()> {
    let k = gens.len();
    if k == 0 {
        return Ok(());
    }
    let v1 = |ig: &[C], g: usize| -> C { c[g] + (0..k).map(|h| m[g][h] * ig[h]).sum::<C>() };
    for _ in 0..50 {
        let mut f = vec![0.0; 2 * k];
        for (g, &(_, p, vset)) in gens.iter().enumerate() {
            let v = v1(ig, g);
            f[2 * g] = v.norm_sqr() - vset * vset;
            f[2 * g + 1] = (v * ig[g].conj()).re - p;
        }
        if f.iter().all(|x| x.abs() < 1e-14) {
            return Ok(());
        }
        let mut jac = DenseMatrix::<f64>::zeros(2 * k, 2 * k);
        for g in 0..k {
            let v = v1(ig, g);
            for h in 0..k {
                for (col, unit) in [(2 * h, C::new(1.0, 0.0)), (2 * h + 1, C::new(0.0, 1.0))] {
                    let dv = m[g][h] * unit;
                    jac[(2 * g, col)] = 2.0 * (v.conj() * dv).re;
                    let mut dp = (dv * ig[g].conj()).re;
                    if g == h {
                        dp += (v * unit.conj()).re;
                    }
                    jac[(2 * g + 1, col)] = dp;
                }
            }
        }
        let lu = jac.lu().map_err(|_| Error::SingularJacobian {
            bus: gens[0].0 as i64,
        })?;
        let dx = lu.solve(&f);
        for h in 0..k {
            ig[h] -= C::new(dx[2 * h], dx[2 * h + 1]);
        }
    }
    Ok(())
}

/// Solves the unified model for `system` with no PV and its nominal feeders.
pub fn solve_unified_nominal(system: &CoSimSystem, opts: &OracleOptions) -> Result<UnifiedSolution> {
    let feeders: Vec<FeederModel> = system.attachments.iter().map(|a| a.feeder.clone()).collect();
    solve_unified(system, &feeders, opts)
}

/// Per-PCC positive-sequence comparison between the two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub bus: i64,
    pub cosim_v1: f64,
    pub oracle_v1: f64,
    pub diff: f64,
    pub cosim_angle_deg: f64,
    pub oracle_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Largest complex positive-sequence voltage difference, per-unit.
    pub max_abs_diff: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Compares converged co-simulation and unified PCC voltages.
pub fn compare(cs: &CoSimResult, us: &UnifiedSolution, threshold: f64) -> Result<ComparisonReport> {
    let a = &cs.final_state().pcc;
    if a.len() != us.pcc.len() || a.iter().zip(&us.pcc).any(|(x, y)| x.bus != y.bus) {
        return Err(Error::Mismatch("co-simulation and unified solution cover different PCCs".into()));
    }
    let rows: Vec<ComparisonRow> = a
        .iter()
        .zip(&us.pcc)
        .map(|(x, y)| {
            let v1 = phases_to_sequence(x.voltage).positive;
            let u1 = phases_to_sequence(y.voltage).positive;
            ComparisonRow {
                bus: x.bus,
                cosim_v1: v1.norm(),
                oracle_v1: u1.norm(),
                diff: (v1 - u1).norm(),
                cosim_angle_deg: v1.arg().to_degrees(),
                oracle_angle_deg: u1.arg().to_degrees(),
            }
        })
        .collect();
    let max_abs_diff = rows.iter().fold(0.0f64, |m, r| m.max(r.diff));
    Ok(ComparisonReport {
        rows,
        max_abs_diff,
        threshold,
        pass: max_abs_diff < threshold,
    })
}
