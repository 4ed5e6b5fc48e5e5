//! Three-sequence transmission power flow.
//!
//! The positive-sequence network is solved by Newton-Raphson, the negative
//! and zero sequences by direct linear solves, and the three are tied
//! together by compensation current injections. The outer loop repeats until
//! the bus voltages stop moving by more than `tol_seq`.

mod compensation;
mod linear;
mod nr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use compensation::{compensation_currents, load_sequence_currents, PccLoad};
pub use linear::{solve_sequence_linear, FactoredSequence};
pub use nr::{flat_start, solve_positive_nr, solve_positive_nr_from, NrOutcome};

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::netmodel::{build_sequence_admittance, sequence_branches, SequenceBranch, SequenceSet, TransmissionNetwork};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Newton-Raphson power mismatch tolerance, per-unit.
    pub tol_nr: f64,
    /// Outer-loop tolerance on bus voltage change between passes, per-unit.
    pub tol_seq: f64,
    pub max_outer: usize,
    pub max_nr: usize,
    /// Start every fresh time step from a flat profile instead of the
    /// previous step's solution.
    pub flat_start: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol_nr: 1e-8,
            tol_seq: 1e-6,
            max_outer: 30,
            max_nr: 20,
            flat_start: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_nr > 0.0 && self.tol_seq > 0.0) {
            return Err(Error::Validation("solver tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.max_nr == 0 {
            return Err(Error::Validation("solver iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// Complex power at both ends of a branch, per sequence, positive into the
/// branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub from: i64,
    pub to: i64,
    pub from_end: SequenceSet,
    pub to_end: SequenceSet,
}

impl BranchFlow {
    /// Three-phase total at the from end.
    pub fn from_total(&self) -> Complex64 {
        self.from_end.to_array().iter().sum()
    }

    pub fn to_total(&self) -> Complex64 {
        self.to_end.to_array().iter().sum()
    }

    /// Series and shunt losses of all sequences.
    pub fn loss(&self) -> Complex64 {
        self.from_total() + self.to_total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqSolution {
    pub bus_ids: Vec<i64>,
    pub voltages: Vec<SequenceSet>,
    /// Final compensation injections (per-bus sequence currents).
    pub compensation: Vec<SequenceSet>,
    /// Slack generation, positive when generating.
    pub slack_power: Complex64,
    pub branch_flows: Vec<BranchFlow>,
    pub iterations_outer: usize,
    /// Newton-Raphson iterations summed over outer passes.
    pub iterations_nr: usize,
    pub max_mismatch: f64,
    /// Mismatch trace of the last Newton-Raphson pass.
    pub nr_mismatch_history: Vec<f64>,
}

impl SeqSolution {
    pub fn voltage(&self, bus: i64) -> Option<SequenceSet> {
        self.bus_ids.iter().position(|&b| b == bus).map(|i| self.voltages[i])
    }

    pub fn positive_voltages(&self) -> Vec<Complex64> {
        self.voltages.iter().map(|s| s.positive).collect()
    }
}

/// A network prepared for repeated three-sequence solves: admittance
/// matrices assembled and the negative/zero systems factorised once.
#[derive(Debug, Clone)]
pub struct SequenceModel {
    net: TransmissionNetwork,
    branches: Vec<SequenceBranch>,
    y: [SparseMatrix; 3],
    negative: std::result::Result<FactoredSequence, Vec<i64>>,
    zero: std::result::Result<FactoredSequence, Vec<i64>>,
}

fn factor(y: &SparseMatrix, fixed: &[usize], ids: &[i64]) -> std::result::Result<FactoredSequence, Vec<i64>> {
    FactoredSequence::new(y, fixed, ids).map_err(|e| match e {
        Error::SingularSystem { buses } => buses,
        _ => Vec::new(),
    })
}

impl SequenceModel {
    pub fn new(net: &TransmissionNetwork) -> Self {
        let ids: Vec<i64> = net.buses.iter().map(|b| b.id).collect();
        let y = [
            build_sequence_admittance(net, 0),
            build_sequence_admittance(net, 1),
            build_sequence_admittance(net, 2),
        ];
        let fixed = [net.slack_index()];
        let negative = factor(&y[2], &fixed, &ids);
        let zero = factor(&y[0], &fixed, &ids);
        Self {
            net: net.clone(),
            branches: sequence_branches(net),
            y,
            negative,
            zero,
        }
    }

    pub fn network(&self) -> &TransmissionNetwork {
        &self.net
    }

    pub fn admittance(&self, seq: usize) -> &SparseMatrix {
        &self.y[seq]
    }

    fn linear(
        &self,
        which: &std::result::Result<FactoredSequence, Vec<i64>>,
        injections: &[Complex64],
    ) -> Result<Vec<Complex64>> {
        match which {
            Ok(f) => Ok(f.solve(injections)),
            Err(_) if injections.iter().all(|z| z.norm() == 0.0) => {
                Ok(vec![Complex64::new(0.0, 0.0); injections.len()])
            }
            Err(buses) => Err(Error::SingularSystem {
                buses: buses.clone(),
            }),
        }
    }

    /// Three-sequence solve with optional warm start.
    pub fn solve(
        &self,
        pcc_loads: &[PccLoad],
        initial: Option<&[SequenceSet]>,
        opts: &SolverOptions,
    ) -> Result<SeqSolution> {
        opts.validate()?;
        let net = &self.net;
        let n = net.len();
        for l in pcc_loads {
            if net.bus_index(l.bus).is_none() {
                return Err(Error::UnknownBus(l.bus));
            }
        }
        // Positive-sequence network carries each PCC's total as a balanced load.
        let mut pos_net = net.clone();
        for l in pcc_loads {
            let i = net.bus_index(l.bus).expect("checked");
            let s = l.total();
            pos_net.buses[i].load_p += s.re;
            pos_net.buses[i].load_q += s.im;
        }

        let mut v: Vec<SequenceSet> = match initial {
            Some(v0) => {
                assert_eq!(v0.len(), n);
                v0.to_vec()
            }
            None => flat_start(net).into_iter().map(SequenceSet::positive).collect(),
        };

        let mut iterations_nr = 0;
        let mut outer = 0;
        let mut last_delta = f64::INFINITY;
        loop {
            if outer >= opts.max_outer {
                return Err(Error::NonConvergence {
                    solver: "three-sequence outer loop",
                    iterations: outer,
                    residual: last_delta,
                });
            }
            outer += 1;
            let comp = compensation::compensation_with(&self.branches, net, &v, pcc_loads)?;
            let extra: Vec<Complex64> = (0..n)
                .map(|i| v[i].positive * comp[i].positive.conj())
                .collect();
            let v1_init: Vec<Complex64> = v.iter().map(|s| s.positive).collect();
            let nr = solve_positive_nr_from(&pos_net, &self.y[1], &extra, Some(&v1_init), opts)?;
            iterations_nr += nr.iterations;

            let mut next: Vec<SequenceSet> = v
                .iter()
                .zip(&nr.voltages)
                .map(|(s, &p)| SequenceSet::new(s.zero, p, s.negative))
                .collect();
            let comp = compensation::compensation_with(&self.branches, net, &next, pcc_loads)?;
            let neg_inj: Vec<Complex64> = comp.iter().map(|s| s.negative).collect();
            let zero_inj: Vec<Complex64> = comp.iter().map(|s| s.zero).collect();
            let v2 = self.linear(&self.negative, &neg_inj)?;
            let v0 = self.linear(&self.zero, &zero_inj)?;
            for i in 0..n {
                next[i].negative = v2[i];
                next[i].zero = v0[i];
            }

            let delta = v
                .iter()
                .zip(&next)
                .flat_map(|(a, b)| (0..3).map(move |k| (a.get(k) - b.get(k)).norm()))
                .fold(0.0, f64::max);
            v = next;
            last_delta = delta;
            if delta <= opts.tol_seq {
                let comp = compensation::compensation_with(&self.branches, net, &v, pcc_loads)?;
                let mut sol = SeqSolution {
                    bus_ids: net.buses.iter().map(|b| b.id).collect(),
                    voltages: v,
                    compensation: comp,
                    slack_power: Complex64::new(0.0, 0.0),
                    branch_flows: Vec::new(),
                    iterations_outer: outer,
                    iterations_nr,
                    max_mismatch: nr.final_mismatch(),
                    nr_mismatch_history: nr.mismatch_history,
                };
                sol.slack_power = slack_power_with(&sol, net, &self.y[1]);
                sol.branch_flows = flows_with(&sol, net, &self.branches);
                return Ok(sol);
            }
        }
    }
}

/// Solves the network in three-sequence detail with the given per-phase PCC
/// loads added to the static bus loads.
pub fn solve_three_sequence(
    net: &TransmissionNetwork,
    pcc_loads: &[PccLoad],
    opts: &SolverOptions,
) -> Result<SeqSolution> {
    SequenceModel::new(net).solve(pcc_loads, None, opts)
}

fn slack_power_with(sol: &SeqSolution, net: &TransmissionNetwork, y1: &SparseMatrix) -> Complex64 {
    let s = net.slack_index();
    let v1 = sol.positive_voltages();
    let i_net: Complex64 = y1.row(s).map(|(j, y)| y * v1[j]).sum::<Complex64>() - sol.compensation[s].positive;
    v1[s] * i_net.conj() + net.buses[s].load()
}

/// Slack-bus generation `V·conj(I)` from the positive-sequence solution,
/// positive when generating.
pub fn slack_power(sol: &SeqSolution, net: &TransmissionNetwork) -> Complex64 {
    slack_power_with(sol, net, &build_sequence_admittance(net, 1))
}

fn flows_with(sol: &SeqSolution, net: &TransmissionNetwork, branches: &[SequenceBranch]) -> Vec<BranchFlow> {
    branches
        .iter()
        .zip(&net.branches)
        .map(|(br, data)| {
            let vf = sol.voltages[br.from].to_array();
            let vt = sol.voltages[br.to].to_array();
            let mut from_end = SequenceSet::ZERO;
            let mut to_end = SequenceSet::ZERO;
            for seq in 0..3 {
                let (i_f, i_t) = br.end_currents(seq, &vf, &vt);
                from_end.set(seq, vf[seq] * i_f.conj());
                to_end.set(seq, vt[seq] * i_t.conj());
            }
            BranchFlow {
                from: data.from,
                to: data.to,
                from_end,
                to_end,
            }
        })
        .collect()
}

/// Per-branch, per-sequence complex power at both ends.
pub fn branch_flows(sol: &SeqSolution, net: &TransmissionNetwork) -> Vec<BranchFlow> {
    flows_with(sol, net, &sequence_branches(net))
}

#[cfg(test)]
mod tests;
