//! Dense complex matrices and the Pauli-rotation kernels that act on them.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::pauli::PauliString;

pub type CMatrix = DMatrix<Complex64>;
pub type StateVector = DVector<Complex64>;

/// Largest register materialized as a dense `2^n × 2^n` matrix.
pub const DENSE_QUBIT_LIMIT: usize = 12;

/// Returns `2^n` if `n` qubits fit under the dense limit.
pub fn check_dense(n_qubits: usize) -> Result<usize> {
    if n_qubits > DENSE_QUBIT_LIMIT {
        return Err(Error::DenseLimit {
            qubits: n_qubits,
            limit: DENSE_QUBIT_LIMIT,
        });
    }
    Ok(1 << n_qubits)
}

/// `P · M`, computed as a phased row permutation.
pub fn pauli_mul_left(p: &PauliString, m: &CMatrix) -> CMatrix {
    let dim = m.nrows();
    let x = p.x_mask() as usize;
    // (P M)[r, :] = ω(r ⊕ x) · M[r ⊕ x, :] where P|s⟩ = ω(s)|s ⊕ x⟩
    let factors: Vec<Complex64> = (0..dim).map(|r| p.apply_to_basis(r ^ x).1).collect();
    CMatrix::from_fn(dim, m.ncols(), |r, c| factors[r] * m[(r ^ x, c)])
}

/// `M · P`, computed as a phased column permutation.
pub fn pauli_mul_right(m: &CMatrix, p: &PauliString) -> CMatrix {
    let dim = m.ncols();
    let x = p.x_mask() as usize;
    let factors: Vec<Complex64> = (0..dim).map(|c| p.apply_to_basis(c).1).collect();
    CMatrix::from_fn(m.nrows(), dim, |r, c| factors[c] * m[(r, c ^ x)])
}

pub fn pauli_apply(p: &PauliString, v: &StateVector) -> StateVector {
    let mut out = StateVector::zeros(v.len());
    for (b, amp) in v.iter().enumerate() {
        let (t, w) = p.apply_to_basis(b);
        out[t] += w * amp;
    }
    out
}

/// `exp(iθG) · M = cos θ · M + i sin θ · G M` for a phase-free Pauli `G`.
pub fn rotate_left(g: &PauliString, theta: f64, m: &CMatrix) -> CMatrix {
    let (s, c) = theta.sin_cos();
    let gm = pauli_mul_left(g, m);
    m * Complex64::new(c, 0.0) + gm * Complex64::new(0.0, s)
}

/// `M · exp(iθG)`.
pub fn rotate_right(m: &CMatrix, g: &PauliString, theta: f64) -> CMatrix {
    let (s, c) = theta.sin_cos();
    let mg = pauli_mul_right(m, g);
    m * Complex64::new(c, 0.0) + mg * Complex64::new(0.0, s)
}

pub fn rotate_state(g: &PauliString, theta: f64, v: &StateVector) -> StateVector {
    let (s, c) = theta.sin_cos();
    v * Complex64::new(c, 0.0) + pauli_apply(g, v) * Complex64::new(0.0, s)
}

/// Frobenius inner product `⟨A, B⟩ = Tr(A† B)`.
pub fn frobenius_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Largest entry modulus of `U†U − I`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let dim = u.nrows();
    let mut worst = 0.0f64;
    for r in 0..dim {
        for c in 0..dim {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - target).norm());
        }
    }
    worst
}

/// Qubit count for a `2^n`-dimensional matrix.
pub fn qubits_for_dim(dim: usize) -> Option<usize> {
    dim.is_power_of_two().then(|| dim.trailing_zeros() as usize)
}
