use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("leaf {leaf} is shared by sibling nodes at level {level}")]
    Overlap { level: usize, leaf: usize },

    #[error("node {node:?} at level {level} is not nested under exactly one node of level {upper_level}")]
    Nesting {
        level: usize,
        upper_level: usize,
        node: Vec<usize>,
    },

    #[error("upper node at level {level} aggregates no bottom series")]
    EmptyNode { level: usize },

    #[error("leaf index {leaf} out of range for {n_bottom} bottom series")]
    LeafOutOfRange { leaf: usize, n_bottom: usize },

    #[error("aggregation factor {factor} does not divide {periods} base periods")]
    NonDivisor { factor: usize, periods: usize },

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("structure is not a tree: {0}")]
    NotATree(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid distribution parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("sample is not overdispersed (mean {mean}, variance {variance})")]
    Underdispersed { mean: f64, variance: f64 },

    #[error("matrix is numerically singular: {0}")]
    SingularMatrix(String),

    #[error("all importance weights are zero at node {node}")]
    AllZeroWeights { node: usize },

    #[error("initial state has zero target density")]
    ZeroDensityStart,

    #[error("brute-force support too large: {points} points (limit {limit})")]
    SupportTooLarge { points: u128, limit: u128 },

    #[error("reference value at position {index} is zero")]
    ZeroReference { index: usize },

    #[error("training series is flat; naive scale is zero")]
    FlatTrainSeries,

    #[error("invalid interval: lower {lower} > upper {upper}")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("skill score denominator is zero")]
    DegenerateDenominator,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Marker for "every particle carries zero weight" at the upper constraint
/// with this index (row of the aggregating matrix, or residual constraint).
pub(crate) fn all_zero(node: usize) -> Error {
    Error::AllZeroWeights { node }
}
