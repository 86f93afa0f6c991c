//! Shot-level emulation of the circuits that estimate `g_jkl`.
//!
//! Each estimator first computes, by state-vector simulation, the exact outcome
//! distribution of the circuit for every classical input the protocol can
//! draw (a computational basis state, or a `P_j` eigenstate), then samples shot
//! counts from those distributions. Sampling the counts multinomially is
//! distributionally identical to running the circuit shot by shot.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::ansatz::{Ansatz, ParameterVector};
use crate::dense::{check_dense, pauli_apply, StateVector};
use crate::engine::{assemble_vqos_by_g, g_exact, Assembler, UpdateSystem};
use crate::error::{Error, Result};
use crate::pauli::{PauliString, PauliSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Hadamard test with one ancilla and a maximally mixed register.
    Indirect,
    /// Random `P_j` eigenstate input, terminal `P_k` measurement.
    Direct,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "indirect" => Ok(Self::Indirect),
            "direct" => Ok(Self::Direct),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShotPlan {
    pub shots: u64,
    pub seed: u64,
    pub method: Method,
}

impl ShotPlan {
    fn validate(&self, expected: Option<Method>) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::Config("shot plan needs at least one shot".into()));
        }
        if let Some(m) = expected {
            if m != self.method {
                return Err(Error::Config(format!(
                    "plan method {:?}, expected {m:?}",
                    self.method
                )));
            }
        }
        Ok(())
    }
}

/// One `g_jkl = Re Tr(P_j V† P_k V) / 2^n` with `V = U_{l:j+1}`.
#[derive(Clone, Copy, Debug)]
pub struct GSpec<'a> {
    pub p_j: PauliString,
    pub p_k: PauliString,
    pub l: usize,
    pub j: usize,
    pub ansatz: &'a Ansatz,
    pub theta: &'a ParameterVector,
}

impl GSpec<'_> {
    fn validate(&self) -> Result<()> {
        if self.j > self.l || self.l > self.ansatz.len() {
            return Err(Error::Index(format!(
                "g needs 0 <= j <= l <= L, got j={}, l={}, L={}",
                self.j,
                self.l,
                self.ansatz.len()
            )));
        }
        check_observables(self.ansatz, &self.p_j, &self.p_k)
    }

    /// Dense reference value.
    pub fn exact(&self) -> Result<f64> {
        g_exact(
            self.ansatz,
            self.theta,
            &self.p_j,
            &self.p_k,
            self.l,
            self.j,
        )
    }

    fn circuit(&self, state: &StateVector) -> Result<StateVector> {
        self.ansatz
            .apply_partial(self.theta, self.j + 1, self.l, state)
    }
}

fn check_observables(a: &Ansatz, p_j: &PauliString, p_k: &PauliString) -> Result<()> {
    for p in [p_j, p_k] {
        if p.n_qubits() != a.n_qubits() {
            return Err(Error::QubitMismatch {
                left: a.n_qubits(),
                right: p.n_qubits(),
            });
        }
        if !p.is_phase_free() {
            return Err(Error::Config(format!("observable {p} must be phase-free")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    /// Empirical standard error of `value`.
    pub std_error: f64,
    pub shots: u64,
}

fn basis_state(dim: usize, b: usize) -> StateVector {
    let mut v = StateVector::zeros(dim);
    v[b] = Complex64::new(1.0, 0.0);
    v
}

fn expectation(p: &PauliString, v: &StateVector) -> f64 {
    v.dotc(&pauli_apply(p, v)).re
}

fn binomial<R: rand::Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    if n == 0 {
        return 0;
    }
    Binomial::new(n, p.clamp(0.0, 1.0))
        .expect("probability clamped to [0, 1]")
        .sample(rng)
}

/// Splits `shots` uniformly at random over `bins` inputs.
fn uniform_counts<R: rand::Rng>(rng: &mut R, shots: u64, bins: usize) -> Vec<u64> {
    let mut left = shots;
    (0..bins)
        .map(|i| {
            let c = binomial(rng, left, 1.0 / (bins - i) as f64);
            left -= c;
            c
        })
        .collect()
}

/// Mean and standard error of `±1` outcomes with `plus` of `n` positive.
fn pm_one_stats(plus: u64, n: u64) -> (f64, f64) {
    let mean = (2.0 * plus as f64 - n as f64) / n as f64;
    let var = (1.0 - mean * mean).max(0.0);
    let var = if n > 1 {
        var * n as f64 / (n - 1) as f64
    } else {
        var
    };
    (mean, (var / n as f64).sqrt())
}

/// Ancilla `⟨Z⟩` for each computational basis input of the Hadamard-test circuit.
///
/// Circuit: ancilla `H`, controlled-`P_j`, `V` on the register, controlled-`P_k`,
/// ancilla `H`, measure `Z`. With register input `|b⟩` the ancilla reads `+1` with
/// probability `‖V|b⟩ + P_k V P_j|b⟩‖² / 4`.
pub fn indirect_outcome_means(spec: &GSpec<'_>) -> Result<Vec<f64>> {
    spec.validate()?;
    let dim = check_dense(spec.ansatz.n_qubits())?;
    (0..dim)
        .map(|b| {
            let input = basis_state(dim, b);
            let idle = spec.circuit(&input)?;
            let kicked = pauli_apply(&spec.p_k, &spec.circuit(&pauli_apply(&spec.p_j, &input))?);
            let p_plus = (&idle + &kicked).norm_squared() / 4.0;
            Ok(2.0 * p_plus - 1.0)
        })
        .collect()
}

/// Hadamard-test estimate on `n + 1` qubits with a maximally mixed register,
/// realized by drawing a uniform basis state per shot.
pub fn estimate_g_indirect(spec: &GSpec<'_>, plan: &ShotPlan) -> Result<Estimate> {
    plan.validate(Some(Method::Indirect))?;
    let means = indirect_outcome_means(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let counts = uniform_counts(&mut rng, plan.shots, means.len());
    let plus: u64 = counts
        .iter()
        .zip(&means)
        .map(|(&c, &m)| binomial(&mut rng, c, (1.0 + m) / 2.0))
        .sum();
    let (value, std_error) = pm_one_stats(plus, plan.shots);
    Ok(Estimate {
        value,
        std_error,
        shots: plan.shots,
    })
}

/// Single-qubit column `C|bit⟩` of the Clifford mapping `Z` onto `letter`.
fn eigen_column(letter: char, bit: usize) -> [Complex64; 2] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if bit == 0 { 1.0 } else { -1.0 };
    match letter {
        // H|b⟩
        'X' => [Complex64::new(h, 0.0), Complex64::new(sign * h, 0.0)],
        // S H|b⟩
        'Y' => [Complex64::new(h, 0.0), Complex64::new(0.0, sign * h)],
        _ => {
            if bit == 0 {
                [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]
            } else {
                [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)]
            }
        }
    }
}

/// Eigenstate of `p` obtained by rotating basis state `|b⟩`, with its eigenvalue.
pub fn pauli_eigenstate(p: &PauliString, b: usize) -> Result<(StateVector, i8)> {
    let n = p.n_qubits();
    let dim = check_dense(n)?;
    let mut state = vec![Complex64::new(1.0, 0.0)];
    let mut eigenvalue = 1i8;
    for q in 0..n {
        let bit = (b >> (n - 1 - q)) & 1;
        let letter = p.letter(q);
        if letter != 'I' && bit == 1 {
            eigenvalue = -eigenvalue;
        }
        let col = eigen_column(letter, bit);
        state = state
            .iter()
            .flat_map(|a| [a * col[0], a * col[1]])
            .collect();
    }
    debug_assert_eq!(state.len(), dim);
    Ok((StateVector::from_vec(state), eigenvalue))
}

/// `⟨P_k⟩` after `V` for every eigenstate input, with the input's `P_j` eigenvalue.
pub fn direct_outcome_means(spec: &GSpec<'_>) -> Result<Vec<(i8, f64)>> {
    spec.validate()?;
    let dim = check_dense(spec.ansatz.n_qubits())?;
    (0..dim)
        .map(|b| {
            let (input, s) = pauli_eigenstate(&spec.p_j, b)?;
            let out = spec.circuit(&input)?;
            Ok((s, expectation(&spec.p_k, &out)))
        })
        .collect()
}

/// `(⟨P_k⟩₊ − ⟨P_k⟩₋) / 2` from uniformly drawn `P_j` eigenstate inputs.
pub fn estimate_g_direct(spec: &GSpec<'_>, plan: &ShotPlan) -> Result<Estimate> {
    plan.validate(Some(Method::Direct))?;
    let means = direct_outcome_means(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let counts = uniform_counts(&mut rng, plan.shots, means.len());
    let (mut n_plus, mut n_minus, mut up_plus, mut up_minus) = (0u64, 0u64, 0u64, 0u64);
    for (&c, &(s, m)) in counts.iter().zip(&means) {
        let up = binomial(&mut rng, c, (1.0 + m) / 2.0);
        if s > 0 {
            n_plus += c;
            up_plus += up;
        } else {
            n_minus += c;
            up_minus += up;
        }
    }
    if n_plus == 0 {
        return Err(Error::EmptyBranch("+1"));
    }
    if n_minus == 0 {
        return Err(Error::EmptyBranch("-1"));
    }
    let (m_plus, se_plus) = pm_one_stats(up_plus, n_plus);
    let (m_minus, se_minus) = pm_one_stats(up_minus, n_minus);
    Ok(Estimate {
        value: (m_plus - m_minus) / 2.0,
        std_error: 0.5 * (se_plus * se_plus + se_minus * se_minus).sqrt(),
        shots: plan.shots,
    })
}

/// Dispatches on `plan.method`.
pub fn estimate_g(spec: &GSpec<'_>, plan: &ShotPlan) -> Result<Estimate> {
    match plan.method {
        Method::Indirect => estimate_g_indirect(spec, plan),
        Method::Direct => estimate_g_direct(spec, plan),
    }
}

/// State-mode coefficient `Re⟨φ_in| U_{j-1:1}† P_j U_{l:j}† P_k U_{l:1} |φ_in⟩`.
#[derive(Clone, Copy, Debug)]
pub struct VqssGSpec<'a> {
    pub p_j: PauliString,
    pub p_k: PauliString,
    /// `1 ≤ j ≤ l + 1`.
    pub j: usize,
    pub l: usize,
    pub ansatz: &'a Ansatz,
    pub theta: &'a ParameterVector,
    pub input: &'a StateVector,
}

impl VqssGSpec<'_> {
    fn validate(&self) -> Result<()> {
        if self.j == 0 || self.j > self.l + 1 || self.l > self.ansatz.len() {
            return Err(Error::Index(format!(
                "state-mode g needs 1 <= j <= l+1, l <= L, got j={}, l={}, L={}",
                self.j,
                self.l,
                self.ansatz.len()
            )));
        }
        let norm = self.input.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::NotNormalized(norm));
        }
        check_observables(self.ansatz, &self.p_j, &self.p_k)
    }

    fn midpoint(&self) -> Result<StateVector> {
        self.ansatz
            .apply_partial(self.theta, 1, self.j - 1, self.input)
    }

    fn tail(&self, v: &StateVector) -> Result<StateVector> {
        self.ansatz.apply_partial(self.theta, self.j, self.l, v)
    }

    /// Dense reference value.
    pub fn exact(&self) -> Result<f64> {
        self.validate()?;
        let psi = self.midpoint()?;
        let left = self.tail(&pauli_apply(&self.p_j, &psi))?;
        let right = pauli_apply(&self.p_k, &self.tail(&psi)?);
        Ok(left.dotc(&right).re)
    }
}

/// Mid-circuit `P_j` measurement followed by `U_{l:j}` and a terminal `P_k` measurement;
/// returns `p₊⟨P_k⟩₊ − p₋⟨P_k⟩₋`.
pub fn vqss_estimate_g(spec: &VqssGSpec<'_>, plan: &ShotPlan) -> Result<Estimate> {
    if plan.shots == 0 {
        return Err(Error::Config("shot plan needs at least one shot".into()));
    }
    spec.validate()?;
    let psi = spec.midpoint()?;
    let pj_psi = pauli_apply(&spec.p_j, &psi);
    let mut branches = [(1.0f64, 0.0f64, 0.0f64); 2];
    for (slot, sign) in branches.iter_mut().zip([1.0, -1.0]) {
        let projected = (&psi + &pj_psi * Complex64::new(sign, 0.0)) * Complex64::new(0.5, 0.0);
        let prob = projected.norm_squared();
        let mean = if prob > 1e-300 {
            let collapsed = projected / Complex64::new(prob.sqrt(), 0.0);
            expectation(&spec.p_k, &spec.tail(&collapsed)?)
        } else {
            0.0
        };
        *slot = (sign, prob, mean);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let p_plus = branches[0].1 / (branches[0].1 + branches[1].1);
    let n_plus = binomial(&mut rng, plan.shots, p_plus);
    let n_minus = plan.shots - n_plus;
    let up_plus = binomial(&mut rng, n_plus, (1.0 + branches[0].2) / 2.0);
    let up_minus = binomial(&mut rng, n_minus, (1.0 + branches[1].2) / 2.0);
    // per-shot value s·o is +1 for (+,up) and (−,down)
    let positive = up_plus + (n_minus - up_minus);
    let (value, std_error) = pm_one_stats(positive, plan.shots);
    Ok(Estimate {
        value,
        std_error,
        shots: plan.shots,
    })
}

/// Circuits needed per assembly: `L(L+1)/2` for `N` and `L·n_H` for `W`.
pub fn circuit_count(n_params: u64, n_terms: u64) -> (u64, u64) {
    (n_params * (n_params + 1) / 2, n_params * n_terms)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Assembles `N` and `W` from shot estimates, one fresh seed per circuit.
///
/// Seeds are derived from `plan.seed` and a running circuit counter, so a
/// whole integration is reproducible from the base seed alone.
#[derive(Clone, Debug)]
pub struct ShotAssembler {
    plan: ShotPlan,
    circuits_run: u64,
}

impl ShotAssembler {
    pub fn new(plan: ShotPlan) -> Self {
        Self {
            plan,
            circuits_run: 0,
        }
    }

    pub fn circuits_run(&self) -> u64 {
        self.circuits_run
    }
}

impl Assembler for ShotAssembler {
    fn assemble(
        &mut self,
        a: &Ansatz,
        theta: &ParameterVector,
        h: &PauliSum,
    ) -> Result<UpdateSystem> {
        let base = self.plan;
        let counter = &mut self.circuits_run;
        assemble_vqos_by_g(a, theta, h, |spec| {
            let plan = ShotPlan {
                seed: splitmix64(base.seed ^ splitmix64(*counter)),
                ..base
            };
            *counter += 1;
            Ok(estimate_g(spec, &plan)?.value)
        })
    }
}
