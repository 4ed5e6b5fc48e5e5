use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::model::{FeederModel, FEEDER_MVA_BASE, PHASE_NAMES};

const C0: Complex64 = Complex64::new(0.0, 0.0);

/// Below this magnitude (per-unit) a node voltage is treated as collapsed.
pub const COLLAPSE_PU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    /// Largest node-voltage change between sweeps at convergence, per-unit.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self { tol: 1e-7, max_iter: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeederSolution {
    pub node_ids: Vec<String>,
    /// Node phase voltages, per-unit; absent phases are zero.
    pub voltages: Vec<[Complex64; 3]>,
    /// Current flowing into each node from its parent (per-phase per-unit);
    /// zero at the substation node.
    pub line_currents: Vec<[Complex64; 3]>,
    /// Current through the substation transformer, per-phase per-unit.
    pub transformer_current: [Complex64; 3],
    /// Complex power drawn at the PCC per phase, kW + j kvar, positive when
    /// the feeder consumes.
    pub pcc_power: [Complex64; 3],
    pub iterations: usize,
    pub converged: bool,
    pub max_change: f64,
}

impl FeederSolution {
    pub fn total_pcc_power(&self) -> Complex64 {
        self.pcc_power.iter().sum()
    }

    pub fn voltage(&self, node: &str) -> Option<[Complex64; 3]> {
        self.node_ids.iter().position(|n| n == node).map(|i| self.voltages[i])
    }

    /// Extreme node-phase voltage magnitudes over present phases.
    pub fn voltage_range(&self, feeder: &FeederModel) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (n, v) in feeder.nodes.iter().zip(&self.voltages) {
            for p in n.phases.iter() {
                lo = lo.min(v[p].norm());
                hi = hi.max(v[p].norm());
            }
        }
        (lo, hi)
    }
}

/// Power accounting of a solved feeder, kW + j kvar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyAudit {
    pub pcc: Complex64,
    pub load: Complex64,
    pub pv: f64,
    /// Power absorbed by shunt capacitors (negative reactive).
    pub shunts: Complex64,
    pub line_losses: Complex64,
    pub transformer_losses: Complex64,
}

impl EnergyAudit {
    /// `pcc − (load − pv + shunts + losses)`; zero for a consistent solution.
    pub fn residual(&self) -> Complex64 {
        self.pcc - (self.load - self.pv + self.shunts + self.line_losses + self.transformer_losses)
    }
}

fn kva_per_phase_pu() -> f64 {
    FEEDER_MVA_BASE * 1000.0 / 3.0
}

/// Solves the feeder by backward/forward sweep with constant-power loads.
/// `source` is the balanced or unbalanced phase voltage at the transformer
/// high side, per-unit.
pub fn solve_feeder(feeder: &FeederModel, source: [Complex64; 3], opts: &SweepOptions) -> Result<FeederSolution> {
    let n = feeder.nodes.len();
    let tap = feeder.transformer.tap;
    let zt = feeder.transformer_z_pu();
    let base = kva_per_phase_pu();
    let s_pu: Vec<[Complex64; 3]> = feeder
        .nodes
        .iter()
        .map(|nd| nd.net_load().map(|s| s / base))
        .collect();
    let z_lines: Vec<[[Complex64; 3]; 3]> = (0..feeder.lines.len()).map(|k| feeder.line_z_pu(k)).collect();
    let v_int: [Complex64; 3] = source.map(|v| v / tap);
    let y_sh: Vec<[Complex64; 3]> = (0..n)
        .map(|k| std::array::from_fn(|p| feeder.shunt_admittance_pu(k, p)))
        .collect();

    let mut v: Vec<[Complex64; 3]> = feeder
        .nodes
        .iter()
        .map(|nd| std::array::from_fn(|p| if nd.phases.contains(p) { v_int[p] } else { C0 }))
        .collect();
    let mut i_line = vec![[C0; 3]; n];
    let mut i_root = [C0; 3];
    let order = feeder.order();
    let root = feeder.root();

    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while change > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                solver: "feeder sweep",
                iterations,
                residual: change,
            });
        }
        iterations += 1;

        // Backward: node injections, then accumulate towards the root.
        let mut acc: Vec<[Complex64; 3]> = (0..n)
            .map(|k| {
                std::array::from_fn(|p| {
                    let load = if s_pu[k][p] == C0 { C0 } else { (s_pu[k][p] / v[k][p]).conj() };
                    load + y_sh[k][p] * v[k][p]
                })
            })
            .collect();
        for &k in order.iter().rev() {
            match feeder.parent(k) {
                Some((par, _)) => {
                    i_line[k] = acc[k];
                    for p in 0..3 {
                        acc[par][p] += i_line[k][p];
                    }
                }
                None => i_root = acc[k],
            }
        }

        // Forward: voltages from the source outwards.
        let mut next = vec![[C0; 3]; n];
        next[root] = std::array::from_fn(|p| v_int[p] - zt * i_root[p]);
        for &k in order.iter().skip(1) {
            let (par, line) = feeder.parent(k).expect("non-root");
            let z = &z_lines[line];
            for p in feeder.nodes[k].phases.iter() {
                let drop: Complex64 = (0..3).map(|q| z[p][q] * i_line[k][q]).sum();
                next[k][p] = next[par][p] - drop;
            }
        }
        for (k, nd) in feeder.nodes.iter().enumerate() {
            for p in nd.phases.iter() {
                let m = next[k][p].norm();
                if !(m >= COLLAPSE_PU) {
                    return Err(Error::VoltageCollapse {
                        node: nd.id.clone(),
                        phase: PHASE_NAMES[p],
                        magnitude: m,
                    });
                }
            }
        }
        change = v
            .iter()
            .zip(&next)
            .flat_map(|(a, b)| (0..3).map(move |p| (a[p] - b[p]).norm()))
            .fold(0.0, f64::max);
        v = next;
    }

    let pcc_power = std::array::from_fn(|p| v_int[p] * i_root[p].conj() * base);
    Ok(FeederSolution {
        node_ids: feeder.nodes.iter().map(|n| n.id.clone()).collect(),
        voltages: v,
        line_currents: i_line,
        transformer_current: i_root,
        pcc_power,
        iterations,
        converged: true,
        max_change: change,
    })
}

/// Complex power drawn at the PCC per phase, kW + j kvar.
pub fn pcc_power(solution: &FeederSolution) -> [Complex64; 3] {
    solution.pcc_power
}

/// Recomputes loads, PV output and losses from the solved voltages and
/// currents.
pub fn energy_audit(feeder: &FeederModel, sol: &FeederSolution) -> EnergyAudit {
    let base = kva_per_phase_pu();
    let mut line_losses = C0;
    for (k, _) in feeder.nodes.iter().enumerate() {
        if let Some((par, _)) = feeder.parent(k) {
            for p in feeder.nodes[k].phases.iter() {
                line_losses += (sol.voltages[par][p] - sol.voltages[k][p]) * sol.line_currents[k][p].conj();
            }
        }
    }
    let zt = feeder.transformer_z_pu();
    let transformer_losses: Complex64 = sol.transformer_current.iter().map(|i| zt * i.norm_sqr()).sum();
    let mut shunts = C0;
    for (k, nd) in feeder.nodes.iter().enumerate() {
        for p in nd.phases.iter() {
            shunts += sol.voltages[k][p].norm_sqr() * feeder.shunt_admittance_pu(k, p).conj();
        }
    }
    let load = feeder.total_load();
    EnergyAudit {
        pcc: sol.total_pcc_power(),
        load,
        pv: feeder.total_pv_kw(),
        shunts: shunts * base,
        line_losses: line_losses * base,
        transformer_losses: transformer_losses * base,
    }
}
