//! Per-sequence nodal admittance assembly.
//!
//! Each branch is described by its 3×3 series admittance in sequence
//! coordinates, `Ys = Zs⁻¹`. The diagonal of `Ys` goes into the decoupled
//! sequence matrices; any off-diagonal terms (untransposed coupling) are left
//! to compensation current injections.

use num_complex::Complex64;

use super::case::{BranchEnd, TransmissionNetwork};
use crate::linalg::{DenseMatrix, SparseMatrix};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Sequence-domain model of one branch, in bus indices.
#[derive(Debug, Clone)]
pub struct SequenceBranch {
    pub from: usize,
    pub to: usize,
    pub tap: f64,
    /// Series admittance matrix in sequence coordinates.
    pub ys: DenseMatrix<Complex64>,
    /// Half line-charging admittance per sequence, applied at each end.
    pub half_shunt: [Complex64; 3],
    /// Zero-sequence shunt to ground at the from / to end (grounded-wye
    /// winding of a zero-sequence-blocking transformer).
    pub ground_from: Complex64,
    pub ground_to: Complex64,
}

impl SequenceBranch {
    /// Branch-end currents `(I_from, I_to)` of sequence `seq`, positive into
    /// the branch, for the given end voltages in all three sequences.
    pub fn end_currents(
        &self,
        seq: usize,
        v_from: &[Complex64; 3],
        v_to: &[Complex64; 3],
    ) -> (Complex64, Complex64) {
        let t = self.tap;
        let series: Complex64 = (0..3)
            .map(|j| self.ys[(seq, j)] * (v_from[j] / t - v_to[j]))
            .sum();
        let mut i_from = series / t + self.half_shunt[seq] * v_from[seq];
        let mut i_to = -series + self.half_shunt[seq] * v_to[seq];
        if seq == 0 {
            i_from += self.ground_from * v_from[0];
            i_to += self.ground_to * v_to[0];
        }
        (i_from, i_to)
    }

    /// Coupling part of the series current of sequence `seq` (off-diagonal
    /// terms only), flowing from → to.
    pub fn coupling_current(
        &self,
        seq: usize,
        v_from: &[Complex64; 3],
        v_to: &[Complex64; 3],
    ) -> Complex64 {
        let t = self.tap;
        (0..3)
            .filter(|&j| j != seq)
            .map(|j| self.ys[(seq, j)] * (v_from[j] / t - v_to[j]))
            .sum()
    }
}

fn invert_small(z: &DenseMatrix<Complex64>) -> DenseMatrix<Complex64> {
    let n = z.rows();
    let lu = z.lu().expect("branch sequence impedance matrix is singular");
    let mut inv = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = vec![ZERO; n];
        e[j] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&e);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    inv
}

/// Builds the sequence-domain model of every branch of `net`.
pub fn sequence_branches(net: &TransmissionNetwork) -> Vec<SequenceBranch> {
    net.branches
        .iter()
        .map(|br| {
            let from = net.bus_index(br.from).expect("validated");
            let to = net.bus_index(br.to).expect("validated");
            // Active sequences: zero is dropped when blocked.
            let active: Vec<usize> = if br.zero_seq_open { vec![1, 2] } else { vec![0, 1, 2] };
            let mut zs = DenseMatrix::zeros(active.len(), active.len());
            for (r, &sr) in active.iter().enumerate() {
                zs[(r, r)] = br.z(sr);
            }
            for c in &br.coupling {
                let (Some(r), Some(k)) = (
                    active.iter().position(|&s| s == c.row),
                    active.iter().position(|&s| s == c.col),
                ) else {
                    continue;
                };
                zs[(r, k)] = c.z;
            }
            let ys_active = if br.is_transposed() {
                let mut d = DenseMatrix::zeros(active.len(), active.len());
                for r in 0..active.len() {
                    d[(r, r)] = Complex64::new(1.0, 0.0) / zs[(r, r)];
                }
                d
            } else {
                invert_small(&zs)
            };
            let mut ys = DenseMatrix::zeros(3, 3);
            for (r, &sr) in active.iter().enumerate() {
                for (k, &sk) in active.iter().enumerate() {
                    ys[(sr, sk)] = ys_active[(r, k)];
                }
            }
            let mut half_shunt = [ZERO; 3];
            for &s in &active {
                half_shunt[s] = Complex64::new(0.0, br.b(s) / 2.0);
            }
            let (mut ground_from, mut ground_to) = (ZERO, ZERO);
            if br.zero_seq_open {
                let y0 = Complex64::new(1.0, 0.0) / br.z(0);
                match br.zero_seq_grounded {
                    Some(BranchEnd::From) => ground_from = y0,
                    Some(BranchEnd::To) => ground_to = y0,
                    None => {}
                }
            }
            SequenceBranch {
                from,
                to,
                tap: br.tap,
                ys,
                half_shunt,
                ground_from,
                ground_to,
            }
        })
        .collect()
}

/// Per-bus shunt admittance in each sequence: bus shunts in all three,
/// generator negative- and zero-sequence source impedances in their own.
pub fn bus_sequence_shunts(net: &TransmissionNetwork) -> Vec<[Complex64; 3]> {
    let mut out: Vec<[Complex64; 3]> = net
        .buses
        .iter()
        .map(|b| [Complex64::new(b.shunt_g, b.shunt_b); 3])
        .collect();
    for g in &net.generators {
        let i = net.bus_index(g.bus).expect("validated");
        if let Some(z2) = g.z2 {
            out[i][2] += Complex64::new(1.0, 0.0) / z2;
        }
        if let Some(z0) = g.z0 {
            out[i][0] += Complex64::new(1.0, 0.0) / z0;
        }
    }
    out
}

/// Nodal admittance matrix of sequence `seq` (0 zero, 1 positive,
/// 2 negative), built from the diagonal of each branch's sequence
/// admittance. Symmetric for untapped or real-tap branches.
pub fn build_sequence_admittance(net: &TransmissionNetwork, seq: usize) -> SparseMatrix {
    assert!(seq < 3, "sequence index {seq} out of range");
    let n = net.len();
    let mut trip = Vec::with_capacity(4 * net.branches.len() + n);
    for br in sequence_branches(net) {
        let y = br.ys[(seq, seq)];
        let t = br.tap;
        let sh = br.half_shunt[seq];
        trip.push((br.from, br.from, y / (t * t) + sh));
        trip.push((br.to, br.to, y + sh));
        trip.push((br.from, br.to, -y / t));
        trip.push((br.to, br.from, -y / t));
        if seq == 0 {
            trip.push((br.from, br.from, br.ground_from));
            trip.push((br.to, br.to, br.ground_to));
        }
    }
    if seq == 1 {
        for (i, b) in net.buses.iter().enumerate() {
            trip.push((i, i, Complex64::new(b.shunt_g, b.shunt_b)));
        }
    } else {
        for (i, sh) in bus_sequence_shunts(net).iter().enumerate() {
            trip.push((i, i, sh[seq]));
        }
    }
    SparseMatrix::from_triplets(n, trip)
}
