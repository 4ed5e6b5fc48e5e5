//! Symmetrical-component (Fortescue) transforms.
//!
//! `a = exp(j 2π/3)`. The 1/3 factor sits on the analysis direction:
//!
//! ```text
//! [V0]         [1  1   1 ] [Va]
//! [V1] = 1/3 · [1  a   a²] [Vb]
//! [V2]         [1  a²  a ] [Vc]
//! ```
//!
//! so a balanced positive-sequence set `(1, a², a)` maps to `(0, 1, 0)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;

/// The rotation operator `a = 1∠120°`.
pub fn a() -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0)
}

/// Zero, positive and negative sequence components of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SequenceSet {
    pub zero: Complex64,
    pub positive: Complex64,
    pub negative: Complex64,
}

impl SequenceSet {
    pub const ZERO: SequenceSet = SequenceSet {
        zero: Complex64::new(0.0, 0.0),
        positive: Complex64::new(0.0, 0.0),
        negative: Complex64::new(0.0, 0.0),
    };

    pub fn new(zero: Complex64, positive: Complex64, negative: Complex64) -> Self {
        Self {
            zero,
            positive,
            negative,
        }
    }

    /// Pure positive-sequence set.
    pub fn positive(v: Complex64) -> Self {
        Self {
            positive: v,
            ..Self::ZERO
        }
    }

    /// Component by index: 0 zero, 1 positive, 2 negative.
    pub fn get(&self, seq: usize) -> Complex64 {
        match seq {
            0 => self.zero,
            1 => self.positive,
            2 => self.negative,
            _ => panic!("sequence index {seq} out of range"),
        }
    }

    pub fn set(&mut self, seq: usize, v: Complex64) {
        match seq {
            0 => self.zero = v,
            1 => self.positive = v,
            2 => self.negative = v,
            _ => panic!("sequence index {seq} out of range"),
        }
    }

    pub fn to_array(self) -> [Complex64; 3] {
        [self.zero, self.positive, self.negative]
    }

    pub fn from_array(v: [Complex64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

pub fn phase_to_sequence(va: Complex64, vb: Complex64, vc: Complex64) -> SequenceSet {
    let a = a();
    let a2 = a * a;
    let third = 1.0 / 3.0;
    SequenceSet {
        zero: (va + vb + vc) * third,
        positive: (va + a * vb + a2 * vc) * third,
        negative: (va + a2 * vb + a * vc) * third,
    }
}

pub fn sequence_to_phase(s: &SequenceSet) -> [Complex64; 3] {
    let a = a();
    let a2 = a * a;
    [
        s.zero + s.positive + s.negative,
        s.zero + a2 * s.positive + a * s.negative,
        s.zero + a * s.positive + a2 * s.negative,
    ]
}

pub fn phases_to_sequence(v: [Complex64; 3]) -> SequenceSet {
    phase_to_sequence(v[0], v[1], v[2])
}

/// Synthesis matrix `A` with `V_abc = A · V_012`.
pub fn synthesis_matrix() -> DenseMatrix<Complex64> {
    let one = Complex64::new(1.0, 0.0);
    let a = a();
    let a2 = a * a;
    DenseMatrix::from_rows(&[vec![one, one, one], vec![one, a2, a], vec![one, a, a2]])
}

/// Analysis matrix `A⁻¹` with `V_012 = A⁻¹ · V_abc`.
pub fn analysis_matrix() -> DenseMatrix<Complex64> {
    let t = Complex64::new(1.0 / 3.0, 0.0);
    let a = a();
    let a2 = a * a;
    DenseMatrix::from_rows(&[vec![t, t, t], vec![t, t * a, t * a2], vec![t, t * a2, t * a]])
}

/// Similarity transform of a 3×3 sequence-domain matrix into the phase
/// domain: `M_abc = A · M_012 · A⁻¹`.
pub fn sequence_matrix_to_phase(m: &DenseMatrix<Complex64>) -> DenseMatrix<Complex64> {
    synthesis_matrix().mul(m).mul(&analysis_matrix())
}

/// Balanced positive-sequence phase set with phase a equal to `v`.
pub fn balanced(v: Complex64) -> [Complex64; 3] {
    sequence_to_phase(&SequenceSet::positive(v))
}
