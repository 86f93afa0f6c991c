//! Variational quantum operator simulation.
//!
//! Compiles `exp(-iHt)` into a fixed-depth circuit of Pauli rotations by
//! integrating McLachlan's variational principle for the operator itself,
//! then checks the result against exact diagonalization and first-order
//! Trotterization. Shot-level emulators of the measurement circuits that
//! estimate the update-equation coefficients live in [`estimators`].
//!
//! Module map:
//!
//! - [`pauli`]: symplectic Pauli strings and real-weighted Pauli sums
//! - [`ansatz`]: Pauli-rotation circuits, partial products and derivatives
//! - [`engine`]: assembly and RK4 integration of `N θ̇ = W`
//! - [`estimators`]: Hadamard-test and eigenstate-sampling estimators
//! - [`baselines`]: exact propagator, Trotter product, process infidelity
//! - [`experiment`]: Heisenberg model, sweeps and CSV output

pub mod ansatz;
pub mod baselines;
pub mod dense;
pub mod engine;
mod error;
pub mod estimators;
pub mod experiment;
pub mod pauli;

pub use ansatz::{build_heisenberg_ansatz, Ansatz, ParameterVector, RotationGate};
pub use baselines::{process_infidelity, trotter_unitary, ExactPropagator};
pub use dense::{CMatrix, StateVector, DENSE_QUBIT_LIMIT};
pub use engine::{
    assemble_vqos, assemble_vqos_by_g, assemble_vqss, g_exact, integrate, solve_update,
    IntegratorConfig, ParameterTrajectory, UpdateSystem,
};
pub use error::{Error, Result};
pub use pauli::{PauliString, PauliSum};
