//! Compensation current injections that stand in for the inter-sequence
//! coupling terms, so each sequence network can be solved on its own.
//!
//! Two sources are covered:
//! * untransposed branches, whose sequence admittance matrix has
//!   off-diagonal entries;
//! * unbalanced PCC loads. The positive-sequence network carries each PCC's
//!   total power as a balanced PQ load; the compensation current is the
//!   difference between that balanced draw and the load's true sequence
//!   currents.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::{phases_to_sequence, sequence_branches, sequence_to_phase, SequenceBranch, SequenceSet, TransmissionNetwork};

/// Per-phase constant-power load at a transmission bus, in per-unit on the
/// system three-phase base (phase powers sum to the three-phase total).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PccLoad {
    pub bus: i64,
    pub phase_power: [Complex64; 3],
}

impl PccLoad {
    pub fn balanced(bus: i64, total: Complex64) -> Self {
        Self {
            bus,
            phase_power: [total / 3.0; 3],
        }
    }

    pub fn total(&self) -> Complex64 {
        self.phase_power.iter().sum()
    }
}

/// Sequence currents drawn by a per-phase constant-power load at the given
/// bus voltage. Phase currents are in per-unit of the per-phase base, so
/// `I_ph = conj(3·S_ph / V_ph)` and `S_total = Σ_k V_k·conj(I_k)`.
pub fn load_sequence_currents(load: &PccLoad, v: &SequenceSet) -> Result<SequenceSet> {
    let vp = sequence_to_phase(v);
    let mut ip = [Complex64::new(0.0, 0.0); 3];
    for (ph, (s, vph)) in load.phase_power.iter().zip(vp).enumerate() {
        if *s == Complex64::new(0.0, 0.0) {
            continue;
        }
        if vph.norm() == 0.0 {
            return Err(Error::ZeroPccVoltage {
                bus: load.bus,
                phase: ['a', 'b', 'c'][ph],
            });
        }
        ip[ph] = (s * 3.0 / vph).conj();
    }
    Ok(phases_to_sequence(ip))
}

pub(crate) fn compensation_with(
    branches: &[SequenceBranch],
    net: &TransmissionNetwork,
    v: &[SequenceSet],
    pcc_loads: &[PccLoad],
) -> Result<Vec<SequenceSet>> {
    let mut out = vec![SequenceSet::ZERO; v.len()];
    for br in branches {
        let vf = v[br.from].to_array();
        let vt = v[br.to].to_array();
        for seq in 0..3 {
            let ic = br.coupling_current(seq, &vf, &vt);
            if ic == Complex64::new(0.0, 0.0) {
                continue;
            }
            let f = out[br.from].get(seq) - ic / br.tap;
            out[br.from].set(seq, f);
            let t = out[br.to].get(seq) + ic;
            out[br.to].set(seq, t);
        }
    }
    for load in pcc_loads {
        let i = net.bus_index(load.bus).ok_or(Error::UnknownBus(load.bus))?;
        let drawn = load_sequence_currents(load, &v[i])?;
        let v1 = v[i].positive;
        if v1.norm() == 0.0 {
            return Err(Error::ZeroPccVoltage { bus: load.bus, phase: 'a' });
        }
        let balanced_draw = (load.total() / v1).conj();
        out[i].zero -= drawn.zero;
        out[i].negative -= drawn.negative;
        out[i].positive += balanced_draw - drawn.positive;
    }
    Ok(out)
}

/// Per-bus sequence current injections equivalent to the inter-sequence
/// coupling terms, evaluated at the voltage estimate `seq_voltages`.
pub fn compensation_currents(
    net: &TransmissionNetwork,
    seq_voltages: &[SequenceSet],
    pcc_loads: &[PccLoad],
) -> Result<Vec<SequenceSet>> {
    compensation_with(&sequence_branches(net), net, seq_voltages, pcc_loads)
}
