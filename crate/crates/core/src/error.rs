use thiserror::Error;

use crate::integrators::TrajectoryRecord;

pub type Result<T> = std::result::Result<T, QllgError>;

#[derive(Debug, Error)]
pub enum QllgError {
    #[error("eigensolver failed to converge")]
    NonConvergence,

    #[error("matrix dimension {dim} exceeds the dense storage cap of {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("matrix is not Hermitian (residual {residual:e})")]
    NotHermitian { residual: f64 },

    #[error("not a valid density matrix: {0}")]
    InvalidDensityMatrix(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("invalid Hamiltonian parameters: {0}")]
    InvalidHamiltonian(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilityVector(String),

    #[error("Sylvester denominator vanishes at ({row}, {col}): |1 + s_j - s_l| = {magnitude:e}")]
    SingularDenominator { row: usize, col: usize, magnitude: f64 },

    #[error("unknown Butcher tableau `{0}`")]
    UnknownTableau(String),

    #[error("invalid Butcher tableau: {0}")]
    InvalidTableau(String),

    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),

    #[error("numerical blow-up at t = {time} ps: {reason}")]
    NumericalBlowup { time: f64, reason: String, partial: Box<TrajectoryRecord> },

    #[error("expectation value has non-negligible imaginary part {imag:e} (real part {real:e})")]
    NonNegligibleImaginaryPart { real: f64, imag: f64 },

    #[error("initial state is not rank one (second-largest eigenvalue {0:e})")]
    NotRankOne(f64),

    #[error("vectorized linear system is singular")]
    SingularSystem,
}
