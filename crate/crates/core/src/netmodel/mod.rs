//! Transmission network data, per-sequence admittance matrices and the
//! phase ↔ sequence transforms shared by every solver.

mod admittance;
mod case;
mod fortescue;

pub use admittance::{
    build_sequence_admittance, bus_sequence_shunts, sequence_branches, SequenceBranch,
};
pub use case::{
    load_network, Branch, BranchEnd, Bus, BusKind, Generator, SequenceCoupling,
    TransmissionNetwork,
};
pub use fortescue::{
    a, analysis_matrix, balanced, phase_to_sequence, phases_to_sequence, sequence_matrix_to_phase,
    sequence_to_phase, synthesis_matrix, SequenceSet,
};
