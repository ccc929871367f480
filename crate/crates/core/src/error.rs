use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid layer sizes {0:?}: need at least two layers, all sizes >= 1 and a single output")]
    InvalidLayerSpec(Vec<usize>),
    #[error("weight vector has length {actual}, architecture needs {expected}")]
    WeightCount { expected: usize, actual: usize },
    #[error("weight {0} is not finite")]
    NonFiniteWeight(usize),
    #[error("weight index {0:?} is out of range for this architecture")]
    WeightIndexOutOfRange(crate::network::WeightIndex),
    #[error("flat weight index {index} is out of range (weight count {count})")]
    FlatIndexOutOfRange { index: usize, count: usize },
    #[error("input has {actual} bits, network expects {expected}")]
    InputLength { expected: usize, actual: usize },
    #[error("input entries must be 0 or 1, got {0}")]
    InputNotBinary(u8),
    #[error("architecture mismatch between operands")]
    ArchitectureMismatch,
    #[error("graph has zero total edge weight")]
    DegenerateGraph,
    #[error("partition covers {actual} vertices, graph has {expected}")]
    PartitionSize { expected: usize, actual: usize },
    #[error("individual has no cached activation table")]
    MissingActivations,
    #[error("population needs at least {needed} individuals, got {actual}")]
    PopulationTooSmall { needed: usize, actual: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
