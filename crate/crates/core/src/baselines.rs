//! Exact propagators, first-order product formulas and the process infidelity.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::dense::{qubits_for_dim, rotate_left, CMatrix};
use crate::error::{Error, Result};
use crate::pauli::PauliSum;

/// Spectral decomposition `H = V diag(λ) V†` of a Pauli-sum Hamiltonian.
#[derive(Clone, Debug)]
pub struct ExactPropagator {
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
    n_qubits: usize,
}

impl ExactPropagator {
    pub fn new(h: &PauliSum) -> Result<Self> {
        let dense = h.to_dense()?;
        let eig = SymmetricEigen::new(dense.clone());
        let v = eig.eigenvectors;
        let lambda = eig.eigenvalues;
        let rebuilt =
            &v * CMatrix::from_diagonal(&lambda.map(|x| Complex64::new(x, 0.0))) * v.adjoint();
        let err = (&rebuilt - &dense)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        let scale = dense.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if err.is_nan() || err > 1e-10 * scale {
            return Err(Error::NonFinite("eigendecomposition does not reproduce H"));
        }
        Ok(Self {
            eigenvalues: lambda,
            eigenvectors: v,
            n_qubits: h.n_qubits(),
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `e^{-iHt}`.
    pub fn exact_unitary(&self, t: f64) -> Result<CMatrix> {
        if !t.is_finite() {
            return Err(Error::NonFinite("time"));
        }
        let phases = self.eigenvalues.map(|l| Complex64::from_polar(1.0, -l * t));
        let v = &self.eigenvectors;
        Ok(v * CMatrix::from_diagonal(&phases) * v.adjoint())
    }
}

/// `(e^{-i H_1 τ} e^{-i H_2 τ} ⋯)^L` with `τ = t / L`; the product is written in
/// list order, so the last group acts first. Terms inside a group must commute.
pub fn trotter_unitary(groups: &[PauliSum], t: f64, layers: usize) -> Result<CMatrix> {
    if layers == 0 {
        return Err(Error::Config(
            "Trotter formula needs at least one layer".into(),
        ));
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("time"));
    }
    let n = match groups.first() {
        Some(g) => g.n_qubits(),
        None => return Err(Error::Config("no Hamiltonian groups".into())),
    };
    for (gi, g) in groups.iter().enumerate() {
        if g.n_qubits() != n {
            return Err(Error::QubitMismatch {
                left: n,
                right: g.n_qubits(),
            });
        }
        let terms = g.terms();
        for (a, (_, pa)) in terms.iter().enumerate() {
            for (_, pb) in &terms[a + 1..] {
                if !pa.commutes_with(pb) {
                    return Err(Error::NonCommutingGroup {
                        group: gi,
                        first: pa.letters(),
                        second: pb.letters(),
                    });
                }
            }
        }
    }
    let dim = crate::dense::check_dense(n)?;
    let tau = t / layers as f64;
    // e^{-i c P τ} = exp(iθP) with θ = -cτ; build the step right to left
    let mut step = CMatrix::identity(dim, dim);
    for g in groups.iter().rev() {
        for (c, p) in g.terms() {
            if p.is_identity() {
                step *= Complex64::from_polar(1.0, -c * tau);
            } else {
                step = rotate_left(&p.without_phase(), -c * tau, &step);
            }
        }
    }
    Ok(matrix_power(&step, layers))
}

fn matrix_power(m: &CMatrix, mut k: usize) -> CMatrix {
    let mut base = m.clone();
    let mut acc = CMatrix::identity(m.nrows(), m.ncols());
    while k > 0 {
        if k & 1 == 1 {
            acc = &acc * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    acc
}

/// `1 − |Tr(V† U)| / 2^n`, clamped to `[0, 1]`.
pub fn process_infidelity(u: &CMatrix, v: &CMatrix) -> Result<f64> {
    if u.shape() != v.shape() || u.nrows() != u.ncols() {
        return Err(Error::MatrixDimension(u.nrows(), v.nrows()));
    }
    if qubits_for_dim(u.nrows()).is_none() {
        return Err(Error::MatrixDimension(u.nrows(), u.ncols()));
    }
    let tr: Complex64 = v.iter().zip(u.iter()).map(|(a, b)| a.conj() * b).sum();
    Ok((1.0 - tr.norm() / u.nrows() as f64).clamp(0.0, 1.0))
}
