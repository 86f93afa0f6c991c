//! Parameterized circuits of Pauli rotations.
//!
//! Gate `j` (1-based) is `R_j(θ) = exp(+i G_j θ)`. The circuit is
//! `U(θ) = R_L(θ_L) ⋯ R_1(θ_1)`, so gate 1 acts first. Partial products follow
//! `U_{k:j} = R_k ⋯ R_j`, with the empty product (`k < j`) equal to the identity.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;

use crate::dense::{
    check_dense, pauli_mul_left, rotate_left, rotate_right, rotate_state, CMatrix, StateVector,
};
use crate::error::{Error, Result};
use crate::pauli::PauliString;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RotationGate {
    pub generator: PauliString,
    /// Zero-based slot in the parameter vector.
    pub parameter_index: usize,
}

/// Rotation angles in radians, one per gate.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector(DVector<f64>);

impl ParameterVector {
    pub fn zeros(len: usize) -> Self {
        Self(DVector::zeros(len))
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(DVector::from_vec(values))
    }

    pub fn from_dvector(values: DVector<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Uniform draw from `[-π, π]^len`.
    pub fn random<R: Rng>(len: usize, rng: &mut R) -> Self {
        use std::f64::consts::PI;
        Self(DVector::from_fn(len, |_, _| rng.random_range(-PI..=PI)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ansatz {
    n_qubits: usize,
    gates: Vec<RotationGate>,
    layer_size: usize,
}

impl Ansatz {
    /// Validates that each parameter slot is used exactly once and that every
    /// generator is a phase-free, non-identity string on `n_qubits` qubits.
    ///
    /// Identity generators are rejected: they only rotate the global phase,
    /// which this crate does not track.
    pub fn new(n_qubits: usize, gates: Vec<RotationGate>, layer_size: usize) -> Result<Self> {
        if gates.is_empty() {
            return Err(Error::Config("ansatz needs at least one gate".into()));
        }
        if layer_size == 0 || !gates.len().is_multiple_of(layer_size) {
            return Err(Error::Config(format!(
                "layer size {layer_size} does not divide {} gates",
                gates.len()
            )));
        }
        let mut seen = vec![false; gates.len()];
        for (i, g) in gates.iter().enumerate() {
            if g.generator.n_qubits() != n_qubits {
                return Err(Error::QubitMismatch {
                    left: n_qubits,
                    right: g.generator.n_qubits(),
                });
            }
            if !g.generator.is_phase_free() || g.generator.is_identity() {
                return Err(Error::Config(format!(
                    "gate {} generator {} must be a phase-free non-identity Pauli string",
                    i + 1,
                    g.generator
                )));
            }
            match seen.get_mut(g.parameter_index) {
                Some(slot) if !*slot => *slot = true,
                _ => {
                    return Err(Error::Config(format!(
                        "parameter index {} reused or out of range",
                        g.parameter_index
                    )))
                }
            }
        }
        Ok(Self {
            n_qubits,
            gates,
            layer_size,
        })
    }

    /// One gate per generator, parameters assigned in order.
    pub fn from_generators(
        n_qubits: usize,
        generators: &[PauliString],
        layer_size: usize,
    ) -> Result<Self> {
        let gates = generators
            .iter()
            .enumerate()
            .map(|(i, g)| RotationGate {
                generator: *g,
                parameter_index: i,
            })
            .collect();
        Self::new(n_qubits, gates, layer_size)
    }

    /// Repeats `layer` `layers` times, each gate with its own parameter.
    pub fn layered(n_qubits: usize, layer: &[PauliString], layers: usize) -> Result<Self> {
        if layers == 0 {
            return Err(Error::Config("need at least one layer".into()));
        }
        let gens: Vec<PauliString> = layer
            .iter()
            .copied()
            .cycle()
            .take(layer.len() * layers)
            .collect();
        Self::from_generators(n_qubits, &gens, layer.len().max(1))
    }

    /// Random non-identity generators; handy for oracle tests and debugging.
    pub fn random<R: Rng>(n_qubits: usize, len: usize, rng: &mut R) -> Result<Self> {
        let mut gens = Vec::with_capacity(len);
        while gens.len() < len {
            let ops: Vec<(usize, char)> = (0..n_qubits)
                .map(|q| (q, ['I', 'X', 'Y', 'Z'][rng.random_range(0..4)]))
                .collect();
            let g = PauliString::from_letters(n_qubits, &ops)?;
            if !g.is_identity() {
                gens.push(g);
            }
        }
        Self::from_generators(n_qubits, &gens, len.max(1))
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[RotationGate] {
        &self.gates
    }

    /// Number of gates `L`.
    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn layer_size(&self) -> usize {
        self.layer_size
    }

    pub fn n_layers(&self) -> usize {
        self.gates.len() / self.layer_size
    }

    /// Generator of gate `j` (1-based).
    pub fn generator(&self, j: usize) -> &PauliString {
        &self.gates[j - 1].generator
    }

    fn check_params(&self, theta: &ParameterVector) -> Result<()> {
        if theta.len() != self.gates.len() {
            return Err(Error::ParameterLength {
                expected: self.gates.len(),
                got: theta.len(),
            });
        }
        Ok(())
    }

    fn angle(&self, theta: &ParameterVector, j: usize) -> f64 {
        theta.0[self.gates[j - 1].parameter_index]
    }

    fn check_range(&self, j: usize, k: usize) -> Result<()> {
        if j == 0 || j > self.len() + 1 || k > self.len() {
            return Err(Error::Index(format!(
                "U_{{{k}:{j}}} on an ansatz with {} gates",
                self.len()
            )));
        }
        Ok(())
    }

    /// The full circuit `U_{L:1}(θ)`.
    pub fn unitary(&self, theta: &ParameterVector) -> Result<CMatrix> {
        self.partial_unitary(theta, 1, self.len())
    }

    /// `U_{k:j} = R_k ⋯ R_j` for `1 ≤ j ≤ L+1`, `k ≤ L`; identity when `k < j`.
    pub fn partial_unitary(&self, theta: &ParameterVector, j: usize, k: usize) -> Result<CMatrix> {
        self.check_params(theta)?;
        self.check_range(j, k)?;
        let dim = check_dense(self.n_qubits)?;
        let mut u = CMatrix::identity(dim, dim);
        for idx in j..=k {
            u = rotate_left(self.generator(idx), self.angle(theta, idx), &u);
        }
        Ok(u)
    }

    /// Applies `U_{k:j}` to a state vector.
    pub fn apply_partial(
        &self,
        theta: &ParameterVector,
        j: usize,
        k: usize,
        state: &StateVector,
    ) -> Result<StateVector> {
        self.check_params(theta)?;
        self.check_range(j, k)?;
        if state.len() != 1 << self.n_qubits {
            return Err(Error::MatrixDimension(1 << self.n_qubits, state.len()));
        }
        let mut v = state.clone();
        for idx in j..=k {
            v = rotate_state(self.generator(idx), self.angle(theta, idx), &v);
        }
        Ok(v)
    }

    /// `D_j = ∂U/∂θ_j = U_{L:j+1} (i G_j) U_{j:1}` for every gate.
    ///
    /// One prefix sweep and one suffix sweep of rotation kernels, then a single
    /// dense product per gate.
    pub fn derivative_stack(&self, theta: &ParameterVector) -> Result<Vec<CMatrix>> {
        self.check_params(theta)?;
        let dim = check_dense(self.n_qubits)?;
        let l = self.len();
        let mut prefix = Vec::with_capacity(l + 1);
        prefix.push(CMatrix::identity(dim, dim));
        for j in 1..=l {
            let next = rotate_left(self.generator(j), self.angle(theta, j), &prefix[j - 1]);
            prefix.push(next);
        }
        let i_unit = Complex64::new(0.0, 1.0);
        let mut out = vec![CMatrix::zeros(0, 0); l];
        let mut suffix = CMatrix::identity(dim, dim);
        for j in (1..=l).rev() {
            let inner = pauli_mul_left(self.generator(j), &prefix[j]) * i_unit;
            out[j - 1] = &suffix * inner;
            suffix = rotate_right(&suffix, self.generator(j), self.angle(theta, j));
        }
        Ok(out)
    }
}

/// Gates of one Heisenberg-chain layer: `X_q` on every site, then periodic
/// `XX`, `YY` and `ZZ` bonds ordered by their first site.
pub fn heisenberg_layer_generators(n_sites: usize) -> Result<Vec<PauliString>> {
    if n_sites < 3 {
        return Err(Error::Config(format!(
            "periodic chain needs at least 3 sites, got {n_sites}"
        )));
    }
    let mut gens = Vec::with_capacity(4 * n_sites);
    for q in 0..n_sites {
        gens.push(PauliString::from_letters(n_sites, &[(q, 'X')])?);
    }
    for letter in ['X', 'Y', 'Z'] {
        for q in 0..n_sites {
            gens.push(PauliString::from_letters(
                n_sites,
                &[(q, letter), ((q + 1) % n_sites, letter)],
            )?);
        }
    }
    Ok(gens)
}

/// `n_layers` Heisenberg layers on `n_sites` qubits: `L = 4 · n_sites · n_layers`.
pub fn build_heisenberg_ansatz(n_sites: usize, n_layers: usize) -> Result<Ansatz> {
    let layer = heisenberg_layer_generators(n_sites)?;
    Ansatz::layered(n_sites, &layer, n_layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::unitarity_defect;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    /// exp(iθG) via truncated Taylor series with scaling and squaring; shares no code with the kernels.
    fn expm_i_theta_g(g: &PauliString, theta: f64) -> CMatrix {
        let a = g.to_dense().unwrap() * Complex64::new(0.0, theta);
        let s = 8;
        let scaled = &a / Complex64::new(2f64.powi(s), 0.0);
        let dim = a.nrows();
        let mut term = CMatrix::identity(dim, dim);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled / Complex64::new(k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_parameters_give_identity() {
        let a = build_heisenberg_ansatz(3, 2).unwrap();
        let u = a.unitary(&ParameterVector::zeros(a.len())).unwrap();
        assert_eq!(u, CMatrix::identity(8, 8));
    }

    #[test]
    fn quarter_turn_of_x_is_ix() {
        let a = Ansatz::from_generators(1, &[p("X")], 1).unwrap();
        let u = a
            .unitary(&ParameterVector::from_vec(vec![
                std::f64::consts::FRAC_PI_2,
            ]))
            .unwrap();
        let ix = p("X").to_dense().unwrap() * Complex64::new(0.0, 1.0);
        assert!(max_diff(&u, &ix) < 1e-15);
    }

    #[test]
    fn unitary_matches_exponential_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Ansatz::random(2, 3, &mut rng).unwrap();
        let theta = ParameterVector::random(3, &mut rng);
        let mut expected = CMatrix::identity(4, 4);
        for j in 1..=3 {
            expected = expm_i_theta_g(a.generator(j), theta.as_slice()[j - 1]) * expected;
        }
        assert!(max_diff(&a.unitary(&theta).unwrap(), &expected) < 1e-12);
        // U_{3:2} = R_3 R_2
        let r32 = expm_i_theta_g(a.generator(3), theta.as_slice()[2])
            * expm_i_theta_g(a.generator(2), theta.as_slice()[1]);
        assert!(max_diff(&a.partial_unitary(&theta, 2, 3).unwrap(), &r32) < 1e-12);
    }

    #[test]
    fn partial_unitary_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = Ansatz::random(2, 4, &mut rng).unwrap();
        let theta = ParameterVector::random(4, &mut rng);
        assert_eq!(
            a.partial_unitary(&theta, 3, 2).unwrap(),
            CMatrix::identity(4, 4)
        );
        assert_eq!(
            a.partial_unitary(&theta, 5, 4).unwrap(),
            CMatrix::identity(4, 4)
        );
        assert_eq!(
            a.partial_unitary(&theta, 1, 4).unwrap(),
            a.unitary(&theta).unwrap()
        );
        assert!(matches!(
            a.partial_unitary(&theta, 0, 2),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            a.partial_unitary(&theta, 1, 5),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            a.unitary(&ParameterVector::zeros(3)),
            Err(Error::ParameterLength {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn derivative_at_zero_is_i_generator() {
        let a = build_heisenberg_ansatz(3, 1).unwrap();
        let stack = a
            .derivative_stack(&ParameterVector::zeros(a.len()))
            .unwrap();
        for (j, d) in stack.iter().enumerate() {
            let expected = a.generator(j + 1).to_dense().unwrap() * Complex64::new(0.0, 1.0);
            assert_eq!(d, &expected);
        }
        let single = Ansatz::from_generators(1, &[p("Z")], 1).unwrap();
        let d = single.derivative_stack(&ParameterVector::zeros(1)).unwrap();
        assert_eq!(d[0], p("Z").to_dense().unwrap() * Complex64::new(0.0, 1.0));
    }

    #[test]
    fn derivative_matches_central_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-5;
        for &(n, len) in &[(2usize, 4usize), (3, 20), (1, 6)] {
            let a = Ansatz::random(n, len, &mut rng).unwrap();
            let theta = ParameterVector::random(len, &mut rng);
            let stack = a.derivative_stack(&theta).unwrap();
            for j in 0..len {
                let mut plus = theta.values().clone();
                let mut minus = theta.values().clone();
                plus[j] += eps;
                minus[j] -= eps;
                let up = a.unitary(&ParameterVector::from_dvector(plus)).unwrap();
                let um = a.unitary(&ParameterVector::from_dvector(minus)).unwrap();
                let fd = (up - um) / Complex64::new(2.0 * eps, 0.0);
                assert!(max_diff(&fd, &stack[j]) < 1e-8, "n={n} L={len} j={j}");
            }
        }
    }

    #[test]
    fn random_circuits_are_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let a = build_heisenberg_ansatz(3, 1).unwrap();
        for _ in 0..100 {
            let theta = ParameterVector::random(a.len(), &mut rng);
            assert!(unitarity_defect(&a.unitary(&theta).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn heisenberg_layout() {
        let a = build_heisenberg_ansatz(4, 1).unwrap();
        assert_eq!(a.len(), 16);
        assert_eq!(build_heisenberg_ansatz(3, 2).unwrap().len(), 24);
        let gens: Vec<String> = heisenberg_layer_generators(3)
            .unwrap()
            .iter()
            .map(|g| g.letters())
            .collect();
        assert_eq!(
            gens,
            ["XII", "IXI", "IIX", "XXI", "IXX", "XIX", "YYI", "IYY", "YIY", "ZZI", "IZZ", "ZIZ"]
        );
        assert!(build_heisenberg_ansatz(2, 1).is_err());
        assert!(build_heisenberg_ansatz(3, 0).is_err());
    }

    #[test]
    fn rejects_bad_gates() {
        assert!(Ansatz::from_generators(2, &[p("II")], 1).is_err());
        assert!(Ansatz::from_generators(2, &[p("iXX")], 1).is_err());
        assert!(Ansatz::from_generators(2, &[p("XXX")], 1).is_err());
        let dup = vec![
            RotationGate {
                generator: p("X"),
                parameter_index: 0,
            },
            RotationGate {
                generator: p("Z"),
                parameter_index: 0,
            },
        ];
        assert!(Ansatz::new(1, dup, 1).is_err());
    }
}
