//! Assembly and integration of the operator update equation `N θ̇ = W`.
//!
//! With `D_j = ∂U/∂θ_j` and `d = 2^n`,
//!
//! ```text
//!   N_jk = Re Tr(D_j† D_k) / d
//!   W_j  = Im Tr(D_j† H U) / d  = −Re Tr(G_j U_{L:j+1}† H U_{L:j+1}) / d
//! ```
//!
//! Both are linear combinations of the trace quantity
//! `g(P_j, P_k, l, j) = Re Tr(P_j U_{l:j+1}† P_k U_{l:j+1}) / d`, which is what the
//! measurement circuits in [`crate::estimators`] estimate. [`assemble_vqos`] takes
//! the derivative-stack route (linear in `L`), [`assemble_vqos_by_g`] the
//! per-coefficient route (quadratic in `L`) used by the shot backend.
//!
//! The state-vector counterpart `M θ̇ = V` for a fixed input state is provided by
//! [`assemble_vqss`]; on the maximally entangled input with `H ⊗ I` it reproduces
//! `N` and `W` exactly.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::ansatz::{Ansatz, ParameterVector};
use crate::dense::{
    check_dense, pauli_apply, pauli_mul_left, qubits_for_dim, CMatrix, StateVector,
};
use crate::error::{Error, Result};
use crate::estimators::GSpec;
use crate::pauli::{PauliString, PauliSum};

/// Real symmetric `N` (or `M`) and real `W` (or `V`).
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateSystem {
    pub n_matrix: DMatrix<f64>,
    pub w_vector: DVector<f64>,
}

impl UpdateSystem {
    pub fn len(&self) -> usize {
        self.w_vector.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w_vector.is_empty()
    }
}

fn check_qubits(a: &Ansatz, h: &PauliSum) -> Result<()> {
    if a.n_qubits() != h.n_qubits() {
        return Err(Error::QubitMismatch {
            left: a.n_qubits(),
            right: h.n_qubits(),
        });
    }
    Ok(())
}

fn check_traceless(h: &PauliSum) -> Result<()> {
    let c = h.identity_coefficient();
    if c != 0.0 {
        return Err(Error::NotTraceless(c));
    }
    Ok(())
}

/// `Tr(P · M)` without materializing `P`.
fn pauli_trace_product(p: &PauliString, m: &CMatrix) -> Complex64 {
    (0..m.nrows())
        .map(|s| {
            let (r, amp) = p.apply_to_basis(s);
            amp * m[(s, r)]
        })
        .sum()
}

/// `Re Tr(P_j U_{l:j+1}† P_k U_{l:j+1}) / 2^n`, evaluated densely; `0 ≤ j ≤ l ≤ L`.
pub fn g_exact(
    a: &Ansatz,
    theta: &ParameterVector,
    p_j: &PauliString,
    p_k: &PauliString,
    l: usize,
    j: usize,
) -> Result<f64> {
    if j > l || l > a.len() {
        return Err(Error::Index(format!(
            "g needs 0 <= j <= l <= L, got j={j}, l={l}, L={}",
            a.len()
        )));
    }
    for p in [p_j, p_k] {
        if p.n_qubits() != a.n_qubits() {
            return Err(Error::QubitMismatch {
                left: a.n_qubits(),
                right: p.n_qubits(),
            });
        }
    }
    let v = a.partial_unitary(theta, j + 1, l)?;
    let conj = v.adjoint() * pauli_mul_left(p_k, &v);
    let dim = v.nrows() as f64;
    Ok(pauli_trace_product(p_j, &conj).re / dim)
}

/// Packs each complex matrix as a real column `[Re(vec); Im(vec)]`.
fn pack_real_columns(mats: &[CMatrix]) -> DMatrix<f64> {
    let len = mats.first().map_or(0, |m| m.len());
    let mut out = DMatrix::zeros(2 * len, mats.len());
    for (j, m) in mats.iter().enumerate() {
        let mut col = out.column_mut(j);
        for (i, z) in m.iter().enumerate() {
            col[i] = z.re;
            col[len + i] = z.im;
        }
    }
    out
}

fn apply_sum_left(h: &PauliSum, m: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), m.ncols());
    for (c, p) in h.terms() {
        out += pauli_mul_left(p, m) * Complex64::new(*c, 0.0);
    }
    out
}

/// Derivative-stack assembly of `N` and `W`.
///
/// `h` must be traceless; strip the identity term with [`PauliSum::without_identity`].
pub fn assemble_vqos(a: &Ansatz, theta: &ParameterVector, h: &PauliSum) -> Result<UpdateSystem> {
    check_qubits(a, h)?;
    check_traceless(h)?;
    let dim = check_dense(a.n_qubits())? as f64;
    let stack = a.derivative_stack(theta)?;
    let u = a.unitary(theta)?;
    let hu = apply_sum_left(h, &u);

    let packed = pack_real_columns(&stack);
    // Re⟨A,B⟩ = Σ(a.re b.re + a.im b.im); Im⟨A,B⟩ = Σ(a.re b.im − a.im b.re)
    let mut n_matrix = packed.tr_mul(&packed) / dim;
    let half = hu.len();
    let mut rotated = DVector::zeros(2 * half);
    for (i, z) in hu.iter().enumerate() {
        rotated[i] = z.im;
        rotated[half + i] = -z.re;
    }
    let w_vector = packed.tr_mul(&rotated) / dim;
    n_matrix = (&n_matrix + n_matrix.transpose()) * 0.5;
    Ok(UpdateSystem { n_matrix, w_vector })
}

/// Assembles `N` and `W` from trace coefficients supplied by `g`.
///
/// Issues `L(L+1)/2` requests for `N` (upper triangle, mirrored) and `L·n_H`
/// for `W`, in a fixed order: `N` row by row, then `W` gate by gate with the
/// Hamiltonian terms in canonical order.
pub fn assemble_vqos_by_g<F>(
    a: &Ansatz,
    theta: &ParameterVector,
    h: &PauliSum,
    mut g: F,
) -> Result<UpdateSystem>
where
    F: FnMut(&GSpec<'_>) -> Result<f64>,
{
    check_qubits(a, h)?;
    check_traceless(h)?;
    let l_total = a.len();
    let mut n_matrix = DMatrix::zeros(l_total, l_total);
    for j in 1..=l_total {
        for k in j..=l_total {
            let spec = GSpec {
                p_j: *a.generator(j),
                p_k: *a.generator(k),
                l: k,
                j,
                ansatz: a,
                theta,
            };
            let v = g(&spec)?;
            n_matrix[(j - 1, k - 1)] = v;
            n_matrix[(k - 1, j - 1)] = v;
        }
    }
    let mut w_vector = DVector::zeros(l_total);
    for j in 1..=l_total {
        let mut acc = 0.0;
        for (c, hk) in h.terms() {
            let spec = GSpec {
                p_j: *a.generator(j),
                p_k: *hk,
                l: l_total,
                j,
                ansatz: a,
                theta,
            };
            acc += c * g(&spec)?;
        }
        w_vector[j - 1] = -acc;
    }
    Ok(UpdateSystem { n_matrix, w_vector })
}

/// Discarded parts of the complex traces behind `N` and `W`; all vanish in exact arithmetic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AssemblyResidues {
    /// `max |N_jk − N_kj|` before symmetrization.
    pub max_asymmetry: f64,
    /// `max |Im Tr(D_j† D_k)| / d`.
    pub max_imag_n: f64,
    /// `max |Re Tr(D_j† H U)| / d`, the part dropped when taking `Im`.
    pub max_discarded_w: f64,
    /// `max |Tr(D_j† U)| / d`, the global-phase coupling.
    pub max_phase_overlap: f64,
}

/// Recomputes every trace behind `N` and `W` in full complex arithmetic.
pub fn assembly_residues(
    a: &Ansatz,
    theta: &ParameterVector,
    h: &PauliSum,
) -> Result<AssemblyResidues> {
    check_qubits(a, h)?;
    let dim = check_dense(a.n_qubits())? as f64;
    let stack = a.derivative_stack(theta)?;
    let u = a.unitary(theta)?;
    let hu = apply_sum_left(h, &u);
    let inner = |x: &CMatrix, y: &CMatrix| -> Complex64 {
        x.iter()
            .zip(y.iter())
            .map(|(p, q)| p.conj() * q)
            .sum::<Complex64>()
            / dim
    };
    let mut r = AssemblyResidues::default();
    for dj in &stack {
        for dk in &stack {
            let jk = inner(dj, dk);
            let kj = inner(dk, dj);
            r.max_asymmetry = r.max_asymmetry.max((jk.re - kj.re).abs());
            r.max_imag_n = r.max_imag_n.max(jk.im.abs());
        }
        r.max_discarded_w = r.max_discarded_w.max(inner(dj, &hu).re.abs());
        r.max_phase_overlap = r.max_phase_overlap.max(inner(dj, &u).norm());
    }
    Ok(r)
}

/// `M` and `V` for the state ansatz `U(θ)|φ_in⟩`, including the global-phase terms.
pub fn assemble_vqss(
    a: &Ansatz,
    theta: &ParameterVector,
    h: &PauliSum,
    input: &StateVector,
) -> Result<UpdateSystem> {
    check_qubits(a, h)?;
    let norm = input.norm();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm));
    }
    let l_total = a.len();
    let i_unit = Complex64::new(0.0, 1.0);
    let phi = a.apply_partial(theta, 1, l_total, input)?;

    // ∂_j|φ⟩ = U_{L:j+1} (i G_j) U_{j:1} |φ_in⟩
    let mut derivs = Vec::with_capacity(l_total);
    let mut prefix = input.clone();
    for j in 1..=l_total {
        prefix = a.apply_partial(theta, j, j, &prefix)?;
        let kicked = pauli_apply(a.generator(j), &prefix) * i_unit;
        derivs.push(a.apply_partial(theta, j + 1, l_total, &kicked)?);
    }

    let mut h_phi = StateVector::zeros(phi.len());
    for (c, p) in h.terms() {
        h_phi += pauli_apply(p, &phi) * Complex64::new(*c, 0.0);
    }
    let energy = phi.dotc(&h_phi).re;
    let overlaps: Vec<Complex64> = derivs.iter().map(|d| d.dotc(&phi)).collect();

    let mut m = DMatrix::zeros(l_total, l_total);
    for j in 0..l_total {
        for k in j..l_total {
            let v = derivs[j].dotc(&derivs[k]).re + (overlaps[j] * overlaps[k]).re;
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    let v = DVector::from_fn(l_total, |j, _| {
        derivs[j].dotc(&h_phi).im + (i_unit * overlaps[j] * energy).re
    });
    Ok(UpdateSystem {
        n_matrix: m,
        w_vector: v,
    })
}

/// Solution of one regularized update solve.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateSolution {
    pub theta_dot: DVector<f64>,
    /// `‖(N + reg·I) θ̇ − W‖₂`.
    pub residual: f64,
    /// The Cholesky factorization failed and an SVD least-squares solve was used.
    pub fallback_used: bool,
    pub condition_estimate: f64,
}

/// Solves `(N + reg·I) θ̇ = W`.
pub fn solve_update(sys: &UpdateSystem, reg: f64) -> Result<UpdateSolution> {
    if !reg.is_finite() || reg < 0.0 {
        return Err(Error::Config(format!(
            "regularization must be finite and >= 0, got {reg}"
        )));
    }
    if sys
        .n_matrix
        .iter()
        .chain(sys.w_vector.iter())
        .any(|v| !v.is_finite())
    {
        return Err(Error::NonFinite("update system"));
    }
    let l = sys.len();
    let shifted = &sys.n_matrix + DMatrix::<f64>::identity(l, l) * reg;
    let (theta_dot, fallback_used, condition_estimate) = match shifted.clone().cholesky() {
        Some(chol) => {
            let diag = chol.l_dirty().diagonal();
            let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| {
                (lo.min(*v), hi.max(*v))
            });
            (chol.solve(&sys.w_vector), false, (hi / lo).powi(2))
        }
        None => {
            let svd = shifted.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let smin = svd.singular_values.min();
            let x = svd
                .solve(&sys.w_vector, smax * f64::EPSILON * l as f64)
                .map_err(|_| Error::NonFinite("least-squares solve"))?;
            (x, true, smax / smin)
        }
    };
    if theta_dot.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("update solution"));
    }
    let residual = (&shifted * &theta_dot - &sys.w_vector).norm();
    Ok(UpdateSolution {
        theta_dot,
        residual,
        fallback_used,
        condition_estimate,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Added to the diagonal of `N` before every solve.
    pub regularization: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            t_final: 1.0,
            regularization: 1e-8,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::Config(format!(
                "t_final must be >= 0, got {}",
                self.t_final
            )));
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return Err(Error::Config(format!(
                "regularization must be >= 0, got {}",
                self.regularization
            )));
        }
        Ok(())
    }

    /// `0, dt, 2dt, …, t_final`; the last step is shortened when `dt` does not divide `t_final`.
    pub fn time_grid(&self) -> Vec<f64> {
        let tol = 1e-9 * self.dt;
        let full = ((self.t_final + tol) / self.dt).floor() as usize;
        let mut grid: Vec<f64> = (0..=full).map(|k| k as f64 * self.dt).collect();
        let last = *grid.last().expect("grid starts at zero");
        if (self.t_final - last).abs() <= tol {
            *grid.last_mut().expect("non-empty") = self.t_final;
        } else if self.t_final > last {
            grid.push(self.t_final);
        } else {
            grid.pop();
            grid.push(self.t_final);
        }
        grid
    }
}

/// Per-step solver diagnostics, aggregated over the four RK4 stages.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    /// End time of the step.
    pub t: f64,
    pub solve_residual: f64,
    pub fallback_used: bool,
    pub condition_estimate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterTrajectory {
    pub times: Vec<f64>,
    pub thetas: Vec<ParameterVector>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl ParameterTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_theta(&self) -> &ParameterVector {
        self.thetas
            .last()
            .expect("trajectory holds the initial point")
    }

    /// Index of the grid point equal to `t` (to `1e-9` relative), if any.
    pub fn index_of_time(&self, t: f64) -> Option<usize> {
        let tol = 1e-9 * t.abs().max(1.0);
        self.times.iter().position(|s| (s - t).abs() <= tol)
    }

    /// Writes `t,theta_1,…,theta_L` rows with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let l = self.thetas.first().map_or(0, |t| t.len());
        let mut header = vec!["t".to_string()];
        header.extend((1..=l).map(|j| format!("theta_{j}")));
        w.write_record(&header)?;
        for (t, theta) in self.times.iter().zip(&self.thetas) {
            let mut row = vec![format_float(*t)];
            row.extend(theta.as_slice().iter().map(|v| format_float(*v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `t,solve_residual,fallback_used` rows, one per step.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "solve_residual", "fallback_used"])?;
        for d in &self.diagnostics {
            w.write_record([
                format_float(d.t),
                format_float(d.solve_residual),
                d.fallback_used.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the output of [`ParameterTrajectory::write_csv`]; diagnostics are not restored.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let mut times = Vec::new();
        let mut thetas = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        msg: format!("bad number {f:?}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let Some((t, rest)) = vals.split_first() else {
                return Err(Error::Parse {
                    line: i + 2,
                    msg: "empty row".into(),
                });
            };
            times.push(*t);
            thetas.push(ParameterVector::from_vec(rest.to_vec()));
        }
        Ok(Self {
            times,
            thetas,
            diagnostics: Vec::new(),
        })
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Source of update systems for the integrator.
pub trait Assembler {
    fn assemble(
        &mut self,
        a: &Ansatz,
        theta: &ParameterVector,
        h: &PauliSum,
    ) -> Result<UpdateSystem>;
}

/// Exact dense assembly through the derivative stack.
#[derive(Clone, Copy, Debug, Default)]
pub struct DenseAssembler;

impl Assembler for DenseAssembler {
    fn assemble(
        &mut self,
        a: &Ansatz,
        theta: &ParameterVector,
        h: &PauliSum,
    ) -> Result<UpdateSystem> {
        assemble_vqos(a, theta, h)
    }
}

/// Integrates from `θ(0) = 0` with the dense assembler.
pub fn integrate(a: &Ansatz, h: &PauliSum, cfg: &IntegratorConfig) -> Result<ParameterTrajectory> {
    integrate_with(a, h, cfg, &mut DenseAssembler)
}

/// Classic fixed-step RK4 on `θ̇ = (N + reg·I)⁻¹ W`, re-assembling at every stage.
pub fn integrate_with<A: Assembler>(
    a: &Ansatz,
    h: &PauliSum,
    cfg: &IntegratorConfig,
    assembler: &mut A,
) -> Result<ParameterTrajectory> {
    cfg.validate()?;
    check_qubits(a, h)?;
    check_traceless(h)?;
    let grid = cfg.time_grid();
    let mut traj = ParameterTrajectory {
        times: vec![0.0],
        thetas: vec![ParameterVector::zeros(a.len())],
        diagnostics: Vec::with_capacity(grid.len().saturating_sub(1)),
    };
    for window in grid.windows(2) {
        let (t0, t1) = (window[0], window[1]);
        let step = t1 - t0;
        let theta = traj.final_theta().values().clone();
        let mut diag = StepDiagnostics {
            t: t1,
            solve_residual: 0.0,
            fallback_used: false,
            condition_estimate: 0.0,
        };
        let mut rhs = |x: &DVector<f64>| -> Result<DVector<f64>> {
            let p = ParameterVector::from_dvector(x.clone());
            let sys = assembler.assemble(a, &p, h)?;
            let sol = solve_update(&sys, cfg.regularization)?;
            diag.solve_residual = diag.solve_residual.max(sol.residual);
            diag.fallback_used |= sol.fallback_used;
            diag.condition_estimate = diag.condition_estimate.max(sol.condition_estimate);
            Ok(sol.theta_dot)
        };
        let stages = (|| -> Result<DVector<f64>> {
            let k1 = rhs(&theta)?;
            let k2 = rhs(&(&theta + &k1 * (step / 2.0)))?;
            let k3 = rhs(&(&theta + &k2 * (step / 2.0)))?;
            let k4 = rhs(&(&theta + &k3 * step))?;
            Ok(&theta + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (step / 6.0))
        })();
        let next = match stages {
            Ok(next) if next.iter().all(|v| v.is_finite()) => next,
            Ok(_) => return Err(abort(traj, t0, "non-finite parameters".into())),
            Err(Error::NonFinite(what)) => {
                return Err(abort(traj, t0, format!("non-finite {what}")))
            }
            Err(other) => return Err(other),
        };
        traj.diagnostics.push(diag);
        traj.times.push(t1);
        traj.thetas.push(ParameterVector::from_dvector(next));
    }
    Ok(traj)
}

fn abort(partial: ParameterTrajectory, t: f64, reason: String) -> Error {
    Error::IntegrationAborted {
        t,
        reason,
        partial: Box::new(partial),
    }
}

/// Both sides of `⟨Φ|(A ⊗ I)|Φ⟩ = Tr(A)/d` for the maximally entangled `|Φ⟩`.
pub fn choi_trace_identity(m: &CMatrix) -> Result<(Complex64, Complex64)> {
    let d = m.nrows();
    if m.ncols() != d {
        return Err(Error::MatrixDimension(d, m.ncols()));
    }
    if let Some(n) = qubits_for_dim(d) {
        check_dense(2 * n)?;
    } else if d * d > 1 << crate::dense::DENSE_QUBIT_LIMIT {
        return Err(Error::DenseLimit {
            qubits: 2 * (usize::BITS - d.leading_zeros()) as usize,
            limit: crate::dense::DENSE_QUBIT_LIMIT,
        });
    }
    let phi = maximally_entangled(d);
    let extended = m.kronecker(&CMatrix::identity(d, d));
    let lhs = phi.dotc(&(extended * &phi));
    let rhs = m.trace() / d as f64;
    Ok((lhs, rhs))
}

/// `|Φ⟩ = Σ_j |j⟩|j⟩ / √d`, first factor on the leading qubits.
pub fn maximally_entangled(d: usize) -> StateVector {
    let mut phi = StateVector::zeros(d * d);
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    for j in 0..d {
        phi[j * d + j] = amp;
    }
    phi
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn p(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    #[test]
    fn g_empty_circuit_cases() {
        let a = Ansatz::from_generators(1, &[p("X")], 1).unwrap();
        let th = ParameterVector::from_vec(vec![0.4]);
        assert_eq!(g_exact(&a, &th, &p("Z"), &p("Z"), 1, 1).unwrap(), 1.0);
        assert_eq!(g_exact(&a, &th, &p("X"), &p("Z"), 0, 0).unwrap(), 0.0);
        assert!(matches!(
            g_exact(&a, &th, &p("X"), &p("Z"), 0, 1),
            Err(Error::Index(_))
        ));
        assert!(matches!(
            g_exact(&a, &th, &p("X"), &p("Z"), 2, 1),
            Err(Error::Index(_))
        ));
    }

    #[test]
    fn g_matches_independent_dense_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = Ansatz::random(2, 5, &mut rng).unwrap();
        let th = ParameterVector::random(5, &mut rng);
        let (pj, pk) = (p("XY"), p("ZX"));
        // V = R_4 R_3 R_2 built from cos/sin closed forms
        let mut v = CMatrix::identity(4, 4);
        for idx in 2..=4 {
            let g = a.generator(idx).to_dense().unwrap();
            let t = th.as_slice()[idx - 1];
            let r = CMatrix::identity(4, 4) * Complex64::new(t.cos(), 0.0)
                + g * Complex64::new(0.0, t.sin());
            v = r * v;
        }
        let prod = pj.to_dense().unwrap() * v.adjoint() * pk.to_dense().unwrap() * &v;
        let expected = prod.trace().re / 4.0;
        let got = g_exact(&a, &th, &pj, &pk, 4, 1).unwrap();
        assert!((got - expected).abs() < 1e-13);
    }

    #[test]
    fn single_xx_gate_system_is_constant() {
        let a = Ansatz::from_generators(2, &[p("XX")], 1).unwrap();
        let h = PauliSum::from_terms(2, [(0.7, p("XX"))]).unwrap();
        for t in [0.0, 0.3, -2.0] {
            let sys = assemble_vqos(&a, &ParameterVector::from_vec(vec![t]), &h).unwrap();
            assert!((sys.n_matrix[(0, 0)] - 1.0).abs() < 1e-14);
            assert!((sys.w_vector[0] + 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_identity_component() {
        let a = Ansatz::from_generators(1, &[p("X")], 1).unwrap();
        let h: PauliSum = "1.0 I\n0.5 Z".parse().unwrap();
        let th = ParameterVector::zeros(1);
        assert!(matches!(
            assemble_vqos(&a, &th, &h),
            Err(Error::NotTraceless(_))
        ));
        assert!(assemble_vqos(&a, &th, &h.without_identity()).is_ok());
    }

    #[test]
    fn derivative_route_matches_g_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &(n, len) in &[(2usize, 6usize), (3, 12)] {
            let a = Ansatz::random(n, len, &mut rng).unwrap();
            let th = ParameterVector::random(len, &mut rng);
            let h = PauliSum::from_terms(
                n,
                (0..5).map(|_| {
                    let g = Ansatz::random(n, 1, &mut rng).unwrap();
                    (
                        rand::Rng::random_range(&mut rng, -1.0..1.0),
                        *g.generator(1),
                    )
                }),
            )
            .unwrap();
            let fast = assemble_vqos(&a, &th, &h).unwrap();
            let slow = assemble_vqos_by_g(&a, &th, &h, |s| {
                g_exact(s.ansatz, s.theta, &s.p_j, &s.p_k, s.l, s.j)
            })
            .unwrap();
            assert!((&fast.n_matrix - &slow.n_matrix).amax() < 1e-9);
            assert!((&fast.w_vector - &slow.w_vector).amax() < 1e-9);
        }
    }

    #[test]
    fn vqss_zero_hamiltonian_has_zero_v() {
        let a = Ansatz::from_generators(1, &[p("X"), p("Z")], 2).unwrap();
        let h = PauliSum::zero(1).unwrap();
        let mut input = StateVector::zeros(2);
        input[0] = Complex64::new(1.0, 0.0);
        let sys =
            assemble_vqss(&a, &ParameterVector::from_vec(vec![0.3, 0.2]), &h, &input).unwrap();
        assert!(sys.w_vector.iter().all(|v| *v == 0.0));
        let bad = StateVector::from_element(2, Complex64::new(1.0, 0.0));
        assert!(matches!(
            assemble_vqss(&a, &ParameterVector::zeros(2), &h, &bad),
            Err(Error::NotNormalized(_))
        ));
    }

    #[test]
    fn solve_scalar_and_zero() {
        let sys = UpdateSystem {
            n_matrix: DMatrix::from_element(1, 1, 1.0),
            w_vector: DVector::from_element(1, -0.7),
        };
        let sol = solve_update(&sys, 1e-8).unwrap();
        assert!((sol.theta_dot[0] - (-0.7 / (1.0 + 1e-8))).abs() < 1e-16);
        assert!(!sol.fallback_used);
        let zero = UpdateSystem {
            n_matrix: DMatrix::identity(3, 3),
            w_vector: DVector::zeros(3),
        };
        assert!(solve_update(&zero, 1e-8)
            .unwrap()
            .theta_dot
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn solve_random_spd_residual() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let b = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let sys = UpdateSystem {
            n_matrix: b.transpose() * &b + DMatrix::identity(5, 5) * 0.1,
            w_vector: DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0)),
        };
        let sol = solve_update(&sys, 1e-8).unwrap();
        assert!(sol.residual < 1e-10);
    }

    #[test]
    fn solve_falls_back_on_indefinite_matrix() {
        let sys = UpdateSystem {
            n_matrix: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]),
            w_vector: DVector::from_vec(vec![1.0, 1.0]),
        };
        let sol = solve_update(&sys, 0.0).unwrap();
        assert!(sol.fallback_used);
        assert!(sol.residual < 1e-12);
        let bad = UpdateSystem {
            n_matrix: DMatrix::from_element(1, 1, f64::NAN),
            w_vector: DVector::zeros(1),
        };
        assert!(matches!(solve_update(&bad, 1e-8), Err(Error::NonFinite(_))));
    }

    #[test]
    fn time_grid_shapes() {
        let cfg = IntegratorConfig {
            t_final: 1.0,
            ..Default::default()
        };
        let g = cfg.time_grid();
        assert_eq!(g.len(), 21);
        assert_eq!(*g.last().unwrap(), 1.0);
        let cfg = IntegratorConfig {
            t_final: 0.12,
            ..Default::default()
        };
        let g = cfg.time_grid();
        assert_eq!(g.len(), 4);
        assert!((g[2] - 0.1).abs() < 1e-15 && g[3] == 0.12);
        let cfg = IntegratorConfig {
            t_final: 0.0,
            ..Default::default()
        };
        assert_eq!(cfg.time_grid(), vec![0.0]);
    }

    #[test]
    fn zero_duration_trajectory() {
        let a = Ansatz::from_generators(2, &[p("XX")], 1).unwrap();
        let h = PauliSum::from_terms(2, [(0.7, p("XX"))]).unwrap();
        let cfg = IntegratorConfig {
            t_final: 0.0,
            ..Default::default()
        };
        let traj = integrate(&a, &h, &cfg).unwrap();
        assert_eq!(traj.times, vec![0.0]);
        assert_eq!(traj.thetas, vec![ParameterVector::zeros(1)]);
    }

    #[test]
    fn invalid_config_rejected() {
        for cfg in [
            IntegratorConfig {
                dt: 0.0,
                ..Default::default()
            },
            IntegratorConfig {
                t_final: -1.0,
                ..Default::default()
            },
            IntegratorConfig {
                regularization: -1e-3,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    struct Poisoned;

    impl Assembler for Poisoned {
        fn assemble(
            &mut self,
            a: &Ansatz,
            theta: &ParameterVector,
            h: &PauliSum,
        ) -> Result<UpdateSystem> {
            let mut sys = assemble_vqos(a, theta, h)?;
            if theta.values()[0].abs() > 0.1 {
                sys.w_vector[0] = f64::INFINITY;
            }
            Ok(sys)
        }
    }

    #[test]
    fn abort_keeps_partial_trajectory() {
        let a = Ansatz::from_generators(2, &[p("XX")], 1).unwrap();
        let h = PauliSum::from_terms(2, [(0.7, p("XX"))]).unwrap();
        let cfg = IntegratorConfig {
            t_final: 1.0,
            ..Default::default()
        };
        match integrate_with(&a, &h, &cfg, &mut Poisoned) {
            Err(Error::IntegrationAborted { partial, t, .. }) => {
                assert!(partial.len() >= 2);
                assert_eq!(*partial.times.last().unwrap(), t);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn choi_identity_small_cases() {
        let (l, r) = choi_trace_identity(&CMatrix::identity(2, 2)).unwrap();
        assert!(
            (l - Complex64::new(1.0, 0.0)).norm() < 1e-15
                && (r - Complex64::new(1.0, 0.0)).norm() < 1e-15
        );
        let (l, r) = choi_trace_identity(&p("X").to_dense().unwrap()).unwrap();
        assert!(l.norm() < 1e-15 && r.norm() < 1e-15);
    }

    #[test]
    fn trajectory_csv_roundtrip() {
        let a = Ansatz::from_generators(2, &[p("XX"), p("ZI")], 2).unwrap();
        let h: PauliSum = "0.7 XX\n0.3 ZI".parse().unwrap();
        let cfg = IntegratorConfig {
            t_final: 0.2,
            ..Default::default()
        };
        let traj = integrate(&a, &h, &cfg).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,theta_1,theta_2\n"));
        let back = ParameterTrajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.times, traj.times);
        assert_eq!(back.thetas, traj.thetas);
        let mut diag = Vec::new();
        traj.write_diagnostics_csv(&mut diag).unwrap();
        let diag = String::from_utf8(diag).unwrap();
        assert!(diag.starts_with("t,solve_residual,fallback_used\n"));
        assert_eq!(diag.lines().count(), traj.len());
    }
}
