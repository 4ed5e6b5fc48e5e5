//! Transmission and distribution co-simulation.
//!
//! A three-sequence transmission power flow ([`seq_solver`]) is coupled by
//! fixed-point iteration ([`coupler`]) to unbalanced radial feeders
//! ([`feeder`]) at their points of common coupling. Monte Carlo PV
//! deployments ([`scenarios`]) drive penetration sweeps and daily time
//! series ([`driver`]), and a monolithic phase-frame solve of the whole
//! system ([`oracle`]) serves as the reference.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod coupler;
pub mod driver;
pub mod error;
pub mod feeder;
pub mod linalg;
pub mod netmodel;
pub mod oracle;
pub mod scenarios;
pub mod seq_solver;

pub use error::{Error, Result};

/// Bundled data files and the desk-scale test system built from them.
pub mod fixtures {
    use crate::coupler::{Attachment, CoSimSystem};
    use crate::feeder::{load_feeder, FeederModel};
    use crate::netmodel::{load_network, TransmissionNetwork};
    use crate::scenarios::{load_profile, GenerationProfile};

    pub const IEEE9_JSON: &str = include_str!("../data/ieee9.json");
    pub const IEEE13_JSON: &str = include_str!("../data/ieee13.json");
    pub const PV_PROFILE_JSON: &str = include_str!("../data/pv_profile.json");

    /// Feeder copies per load bus of the desk system, sized so the copies'
    /// peak demand matches the bus's original load.
    pub const DESK_COPIES: [(i64, usize); 3] = [(5, 72), (6, 52), (8, 58)];

    /// Each bus's copies are split into this many groups, connected with
    /// rotating phase order and given independent PV scenarios.
    pub const DESK_GROUPS: usize = 6;

    pub fn ieee9() -> TransmissionNetwork {
        load_network(IEEE9_JSON).expect("bundled 9-bus case is valid")
    }

    pub fn ieee13() -> FeederModel {
        load_feeder(IEEE13_JSON).expect("bundled 13-node feeder is valid")
    }

    pub fn pv_profile() -> GenerationProfile {
        load_profile(PV_PROFILE_JSON).expect("bundled profile is valid")
    }

    /// Splits `copies` into `groups` near-equal counts.
    pub fn split_copies(copies: usize, groups: usize) -> Vec<f64> {
        (0..groups)
            .map(|g| (copies / groups + usize::from(g < copies % groups)) as f64)
            .collect()
    }

    /// The 9-bus network with copies of the 13-node feeder replacing the
    /// loads at buses 5, 6 and 8.
    pub fn desk_system() -> CoSimSystem {
        let feeder = ieee13();
        let mut atts = Vec::new();
        for (bus, copies) in DESK_COPIES {
            for (g, n) in split_copies(copies, DESK_GROUPS).into_iter().enumerate() {
                atts.push(Attachment::new(bus, feeder.clone(), n).rotated(g % 3));
            }
        }
        CoSimSystem::new(&ieee9(), atts).expect("desk system is valid")
    }
}
