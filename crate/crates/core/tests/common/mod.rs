#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use vqos::{Ansatz, CMatrix, ParameterVector, PauliString, PauliSum};

pub fn p(s: &str) -> PauliString {
    s.parse().unwrap()
}

pub fn random_pauli<R: Rng>(n: usize, rng: &mut R, allow_identity: bool) -> PauliString {
    loop {
        let ops: Vec<(usize, char)> = (0..n)
            .map(|q| (q, ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]))
            .collect();
        let s = PauliString::from_letters(n, &ops).unwrap();
        if allow_identity || !s.is_identity() {
            return s;
        }
    }
}

/// Traceless random Hamiltonian with `terms` terms and coefficients in [-1, 1].
pub fn random_hamiltonian<R: Rng>(n: usize, terms: usize, rng: &mut R) -> PauliSum {
    let t: Vec<(f64, PauliString)> = (0..terms)
        .map(|_| (rng.random_range(-1.0..1.0), random_pauli(n, rng, false)))
        .collect();
    PauliSum::from_terms(n, t).unwrap()
}

/// Truncated Taylor series with scaling and squaring.
pub fn expm(a: &CMatrix) -> CMatrix {
    let s = 12;
    let scaled = a / Complex64::new(2f64.powi(s), 0.0);
    let dim = a.nrows();
    let mut term = CMatrix::identity(dim, dim);
    let mut acc = term.clone();
    for k in 1..30 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        acc += &term;
    }
    for _ in 0..s {
        acc = &acc * &acc;
    }
    acc
}

/// `e^{-iHt}` from the dense Hamiltonian.
pub fn expm_evolution(h: &PauliSum, t: f64) -> CMatrix {
    expm(&(h.to_dense().unwrap() * Complex64::new(0.0, -t)))
}

/// Circuit unitary as a plain product of dense exponentials.
pub fn product_unitary(a: &Ansatz, theta: &ParameterVector) -> CMatrix {
    let dim = 1 << a.n_qubits();
    let mut u = CMatrix::identity(dim, dim);
    for g in a.gates() {
        let x = theta.as_slice()[g.parameter_index];
        u = expm(&(g.generator.to_dense().unwrap() * Complex64::new(0.0, x))) * u;
    }
    u
}

/// Central-difference derivatives of `U(θ)`.
pub fn fd_derivatives(a: &Ansatz, theta: &ParameterVector, eps: f64) -> Vec<CMatrix> {
    (0..theta.len())
        .map(|j| {
            let mut plus = theta.values().clone();
            let mut minus = theta.values().clone();
            plus[j] += eps;
            minus[j] -= eps;
            let up = a.unitary(&ParameterVector::from_dvector(plus)).unwrap();
            let um = a.unitary(&ParameterVector::from_dvector(minus)).unwrap();
            (up - um) / Complex64::new(2.0 * eps, 0.0)
        })
        .collect()
}

pub fn tr_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    (a.adjoint() * b).trace()
}

/// `N` and `W` from finite-difference derivatives.
pub fn fd_system(
    a: &Ansatz,
    theta: &ParameterVector,
    h: &PauliSum,
    eps: f64,
) -> (DMatrix<f64>, Vec<f64>) {
    let d = (1usize << a.n_qubits()) as f64;
    let fd = fd_derivatives(a, theta, eps);
    let u = a.unitary(theta).unwrap();
    let hu = h.to_dense().unwrap() * &u;
    let n = DMatrix::from_fn(fd.len(), fd.len(), |j, k| tr_inner(&fd[j], &fd[k]).re / d);
    let w = fd.iter().map(|dj| tr_inner(dj, &hu).im / d).collect();
    (n, w)
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Haar-ish random unitary via QR of a complex Gaussian-like matrix.
pub fn random_unitary<R: Rng>(dim: usize, rng: &mut R) -> CMatrix {
    let m = CMatrix::from_fn(dim, dim, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    m.qr().q()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}
