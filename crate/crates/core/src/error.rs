use thiserror::Error;

use crate::dyadic::DyadicInterval;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid depth {0} is outside the supported range 1..={max}", max = crate::dyadic::MAX_DEPTH)]
    InvalidDepth(u32),

    #[error("incompatible resolutions: depth {left} vs depth {right}")]
    GridMismatch { left: u32, right: u32 },

    #[error("expected {expected} leaf values, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("leaf {index} holds a non-finite value")]
    NonFinite { index: usize },

    #[error("weight must be strictly positive, leaf {index} holds {value}")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("interval {interval} does not belong to a grid of depth {depth}")]
    IntervalOutOfGrid { interval: DyadicInterval, depth: u32 },

    #[error("inadmissible input: Haar coefficient at level {level} would be shifted below the finest level")]
    Inadmissible { level: u32 },

    #[error("dense norm evaluation capped at depth {cap}, got depth {depth}; use the iterative mode")]
    DenseCapExceeded { depth: u32, cap: u32 },

    #[error("operator matrix contains a non-finite entry")]
    NonFiniteMatrix,

    #[error("quadratic form is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("Gram form is not positive definite")]
    GramNotPositiveDefinite,

    #[error("Carleson sequence holds negative value {value} at {interval}")]
    NegativeCarlesonTerm { interval: DyadicInterval, value: f64 },

    #[error("no weight with A2 characteristic in [{low}, {high}] after {attempts} attempts (last drawn {last})")]
    UnreachableA2Target { low: f64, high: f64, attempts: u32, last: f64 },

    #[error("no stopping constant in the search grid reaches packing ratio {target}; best ratio {best_ratio}")]
    PackingUnattainable { target: f64, best_ratio: f64 },

    #[error("{0}")]
    InvalidSpec(String),
}
