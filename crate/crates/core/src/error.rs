use alloc::vec::Vec;

use thiserror::Error;

/// Errors raised by graph construction, spectral kernels and walk evaluation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("graph must have at least one vertex")]
    EmptyGraph,
    #[error("edge ({0}, {1}) references a vertex outside the graph")]
    EdgeOutOfRange(usize, usize),
    #[error("vertex {0} is isolated (degree 0)")]
    IsolatedVertex(usize),
    #[error("transition matrix has a negative entry at ({row}, {col})")]
    NegativeTransition { row: usize, col: usize },
    #[error("transition matrix is not row-stochastic: row {row} sums to {sum}")]
    NotRowStochastic { row: usize, sum: f64 },
    #[error("transition ({row}, {col}) is positive but is not an edge")]
    TransitionOffGraph { row: usize, col: usize },
    #[error("measure is invalid: {0}")]
    InvalidMeasure(&'static str),
    #[error("missing transition matrix")]
    MissingTransition,
    #[error("missing reversible measure")]
    MissingMeasure,
    #[error("chain is not irreducible on its vertex set")]
    NotIrreducible,
    #[error("stationary solve produced a non-positive component at vertex {0}")]
    NoPositiveFixedVector(usize),
    #[error("chain is not reversible (detailed-balance defect {0:e})")]
    NotReversible(f64),
    #[error("local graph {index} is not reversible (detailed-balance defect {defect:e})")]
    LocalNotReversible { index: usize, defect: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is not Hermitian (defect {0:e})")]
    NotHermitian(f64),
    #[error("eigensolver did not converge")]
    ConvergenceFailure,
    #[error("block for tuple {0:?} is not diagonalizable")]
    DefectiveBlock(Vec<usize>),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("diagonal entry {index} is not positive ({value})")]
    NonpositiveDiagonal { index: usize, value: f64 },
    #[error("local Hamiltonian {graph} has negative eigenvalue {value}")]
    NegativeLocalEigenvalue { graph: usize, value: f64 },
    #[error("invalid probability vector: {0}")]
    InvalidProbabilityVector(&'static str),
    #[error("negative weight {value} in slot {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("mixture weight p = {0} is outside [0, 1]")]
    InvalidP(f64),
    #[error("overlaps are not constant across tuples (spread {spread:e}, asserted p {asserted})")]
    ConstantOverlapViolated { spread: f64, asserted: f64 },
    #[error("dense dimension {dim} exceeds cap {cap}")]
    DimensionCapExceeded { dim: usize, cap: usize },
    #[error("state is not unit norm (norm {0})")]
    NotNormalized(f64),
    #[error("result is not a probability distribution (min entry {min:e}, mass {mass})")]
    InvalidDistribution { min: f64, mass: f64 },
    #[error("model needs at least one local graph")]
    NoLocalGraphs,
}

pub type Result<T> = core::result::Result<T, Error>;
