//! Direct solves of the negative- and zero-sequence networks.

use std::collections::VecDeque;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{Lu, SparseMatrix};

/// A sequence network with its fixed buses (held at zero voltage) removed
/// and the remaining system factorised.
#[derive(Debug, Clone)]
pub struct FactoredSequence {
    n: usize,
    free: Vec<usize>,
    lu: Option<Lu<Complex64>>,
}

impl FactoredSequence {
    /// Factorises `y` with the buses in `fixed` pinned at zero. `bus_ids`
    /// maps indices to bus ids for error reporting.
    pub fn new(y: &SparseMatrix, fixed: &[usize], bus_ids: &[i64]) -> Result<Self> {
        let n = y.dim();
        let mut is_fixed = vec![false; n];
        for &f in fixed {
            is_fixed[f] = true;
        }
        let free: Vec<usize> = (0..n).filter(|&i| !is_fixed[i]).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &i) in free.iter().enumerate() {
            pos[i] = k;
        }
        if free.is_empty() {
            return Ok(Self { n, free, lu: None });
        }
        let mut reduced = crate::linalg::DenseMatrix::zeros(free.len(), free.len());
        for (r, &i) in free.iter().enumerate() {
            for (j, v) in y.row(i) {
                if pos[j] != usize::MAX {
                    reduced[(r, pos[j])] = v;
                }
            }
        }
        let lu = reduced.lu().map_err(|k| Error::SingularSystem {
            buses: island_of(y, &is_fixed, free[k])
                .into_iter()
                .map(|i| bus_ids[i])
                .collect(),
        })?;
        Ok(Self {
            n,
            free,
            lu: Some(lu),
        })
    }

    /// Voltages for the given per-bus current injections; fixed buses get 0.
    pub fn solve(&self, injections: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(injections.len(), self.n);
        let mut v = vec![Complex64::new(0.0, 0.0); self.n];
        if let Some(lu) = &self.lu {
            let b: Vec<Complex64> = self.free.iter().map(|&i| injections[i]).collect();
            for (k, x) in lu.solve(&b).into_iter().enumerate() {
                v[self.free[k]] = x;
            }
        }
        v
    }
}

/// Free buses connected to `start` through nonzero off-diagonal entries.
fn island_of(y: &SparseMatrix, is_fixed: &[bool], start: usize) -> Vec<usize> {
    let mut seen = vec![false; y.dim()];
    let mut out = Vec::new();
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        out.push(i);
        for (j, _) in y.row(i) {
            if j != i && !seen[j] && !is_fixed[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    out.sort_unstable();
    out
}

/// Solves `Y·V = I` for a negative- or zero-sequence network with the buses
/// in `fixed` held at zero voltage.
pub fn solve_sequence_linear(
    y: &SparseMatrix,
    injections: &[Complex64],
    fixed: &[usize],
    bus_ids: &[i64],
) -> Result<Vec<Complex64>> {
    Ok(FactoredSequence::new(y, fixed, bus_ids)?.solve(injections))
}
