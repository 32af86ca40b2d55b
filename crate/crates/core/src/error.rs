use thiserror::Error;

/// Errors produced anywhere in the testing pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid signature: p = {p}, q = {q} (need p + q >= 1)")]
    InvalidSignature { p: usize, q: usize },

    #[error("block matrix is not symmetric: B[{0}][{1}] != B[{1}][{0}]")]
    NonSymmetricBlockMatrix(usize, usize),

    #[error("block matrix entry B[{i}][{j}] = {value} outside [0, 1]")]
    BlockEntryOutOfRange { i: usize, j: usize, value: f64 },

    #[error("block matrix is rank deficient: rank {rank} < K = {k}")]
    RankDeficient { rank: usize, k: usize },

    #[error("invalid community probabilities: {0}")]
    InvalidProbabilities(String),

    #[error("edge probability {value} for pair ({i}, {j}) outside [0, 1]")]
    ProbabilityOutOfRange { i: usize, j: usize, value: f64 },

    #[error("invalid sparsity factor {0}: must lie in (0, 1]")]
    InvalidSparsity(f64),

    #[error("sparsity estimate is zero (graph has no edges); cannot rescale embedding")]
    ZeroSparsity,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("signature ({p}, {q}) not matched by the top {d} eigenvalues: found {found_pos} positive and {found_neg} negative")]
    SignatureMismatch {
        p: usize,
        q: usize,
        d: usize,
        found_pos: usize,
        found_neg: usize,
    },

    #[error("eigensolver failed to converge: {0}")]
    EigenNotConverged(String),

    #[error("sample too small: {0}")]
    TooFewSamples(String),

    #[error("degenerate bandwidth: all pooled points coincide; pass an explicit bandwidth")]
    DegenerateBandwidth,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("cost matrix has a non-finite entry at ({0}, {1})")]
    NonFiniteCost(usize, usize),

    #[error("exact transport limited to n*m <= {limit} (got {n} x {m}); use sinkhorn for larger inputs")]
    OracleScaleExceeded { n: usize, m: usize, limit: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
