use thiserror::Error;

/// A (level, phase) state of a block-structured chain.
pub type State = (usize, usize);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative entry {value} at block ({k}, {l}), phase ({i}, {j})")]
    NegativeEntry {
        k: usize,
        l: usize,
        i: usize,
        j: usize,
        value: f64,
    },

    #[error("row ({k}, {i}) sums to {sum}, not 1")]
    NotStochastic { k: usize, i: usize, sum: f64 },

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level {requested} is outside the representable range 0..={max}")]
    LevelOutOfRange { requested: usize, max: usize },

    #[error("matrix has {} closed classes; first states: {:?}", .0.len(), .0.iter().map(|c| c[0]).collect::<Vec<_>>())]
    MultipleClosedClasses(Vec<Vec<State>>),

    #[error("matrix is reducible")]
    Reducible,

    #[error("phase kernel depends on the level: row {k} differs by {deviation}")]
    PhaseKernelVaries { k: usize, deviation: f64 },

    #[error("matrix is not block-monotone")]
    NotBlockMonotone,

    #[error("block-wise dominance fails")]
    NotDominated,

    #[error("phase transition ({i} -> {j}) has zero probability")]
    ZeroPhaseProbability { i: usize, j: usize },

    #[error("drift certificate: {0}")]
    Certificate(String),

    #[error("non-negative mean drift {0}: no geometric drift vector exists")]
    NonNegativeDrift(f64),

    #[error("no z in the search range gives a Perron root below one (best {best} at z = {z})")]
    NoContraction { z: f64, best: f64 },

    #[error("no admissible boundary level: {0}")]
    NoAdmissibleLevel(String),

    #[error("model is not of M/G/1 type: {0:?}")]
    PatternMismatch(Vec<String>),

    #[error("reference distribution not converged: gap {gap:e} between levels {level} and {doubled}")]
    ReferenceNotConverged {
        gap: f64,
        level: usize,
        doubled: usize,
    },

    #[error("eigen-solve failed: {0}")]
    Eigen(String),

    #[error("pathwise ordering violated at step {step}: {low} > {high}")]
    OrderingViolated { step: usize, low: usize, high: usize },

    #[error("model file: {0}")]
    Schema(String),
}

pub type Result<T> = std::result::Result<T, Error>;
