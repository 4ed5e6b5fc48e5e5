//! Unbalanced three-phase radial feeders and their backward/forward sweep
//! solver.
//!
//! Per-unit quantities use a 1 MVA three-phase base at the feeder's
//! `kv_base`; phase currents and powers are on the per-phase share of that
//! base. File quantities (loads in kW/kvar, impedances in ohms) are
//! converted on the fly.

mod model;
mod sweep;

pub use model::{
    load_feeder, Customer, CustomerClass, FeederLine, FeederModel, FeederNode, PhaseSet, PvUnit, Service,
    SubstationTransformer, FEEDER_MVA_BASE, PHASE_NAMES,
};
pub use sweep::{energy_audit, pcc_power, solve_feeder, EnergyAudit, FeederSolution, SweepOptions, COLLAPSE_PU};

use crate::error::{Error, Result};
use crate::scenarios::{profile_value, GenerationProfile, PvScenario};

/// Copy of `feeder` with the scenario's PV units installed and producing
/// `rating × profile(hour)` at unity power factor, split equally over each
/// unit's phases. Any previous PV is replaced.
pub fn apply_scenario(
    feeder: &FeederModel,
    scenario: &PvScenario,
    profile: &GenerationProfile,
    hour: usize,
) -> Result<FeederModel> {
    let factor = profile_value(profile, hour)?;
    let mut out = feeder.clone();
    for n in &mut out.nodes {
        n.pv_kw = [0.0; 3];
    }
    for u in &scenario.placements {
        let i = out.node_index(&u.node).ok_or_else(|| Error::UnknownNode(u.node.clone()))?;
        if u.phases.is_empty() || !u.phases.is_subset(&out.nodes[i].phases) {
            return Err(Error::Validation(format!("pv unit at {} injects on a phase the node does not carry", u.node)));
        }
        let per_phase = u.rating_kw * factor / u.phases.count() as f64;
        for p in u.phases.iter() {
            out.nodes[i].pv_kw[p] += per_phase;
        }
    }
    out.pv_units = scenario.placements.clone();
    Ok(out)
}
