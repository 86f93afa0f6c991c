use thiserror::Error;

use crate::engine::ParameterTrajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit count mismatch: {left} vs {right}")]
    QubitMismatch { left: usize, right: usize },

    #[error("{qubits} qubits exceeds the dense limit of {limit}")]
    DenseLimit { qubits: usize, limit: usize },

    #[error("{0} qubits is outside the supported range 1..=64")]
    QubitCount(usize),

    #[error("parameter vector has length {got}, ansatz expects {expected}")]
    ParameterLength { expected: usize, got: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("matrix dimension mismatch: {0}x{0} vs {1}x{1}")]
    MatrixDimension(usize, usize),

    #[error("hamiltonian has identity coefficient {0}; strip the identity term before assembling")]
    NotTraceless(f64),

    #[error("input state is not normalized (norm {0})")]
    NotNormalized(f64),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("terms {first} and {second} of trotter group {group} do not commute")]
    NonCommutingGroup {
        group: usize,
        first: String,
        second: String,
    },

    #[error("no shots landed in the {0} eigenvalue branch; increase the shot count")]
    EmptyBranch(&'static str),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("integration aborted at t = {t}: {reason}")]
    IntegrationAborted {
        t: f64,
        reason: String,
        partial: Box<ParameterTrajectory>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
