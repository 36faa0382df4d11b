use alloc::string::String;

use crate::episode::Phase;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("unknown class `{0}`")]
    UnknownClass(String),
    #[error("class index {0} is out of range for a vocabulary of {1} classes")]
    ClassOutOfRange(usize, usize),
    #[error("duplicate class name `{0}` in vocabulary")]
    DuplicateClass(String),
    #[error("duplicate example id `{0}`")]
    DuplicateId(String),
    #[error("label vector has length {got}, vocabulary has {expected} classes")]
    LabelWidth { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("example `{0}` has no feature vector")]
    MissingFeatures(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("infeasible partition: {0}")]
    InfeasiblePartition(String),
    #[error("invalid fractions: {0}")]
    InvalidFractions(String),
    #[error("invalid episode spec: {0}")]
    InvalidSpec(String),
    #[error(
        "episode infeasible: class `{class}` needs {needed} more examples, {available} available"
    )]
    EpisodeInfeasible {
        class: String,
        needed: usize,
        available: usize,
    },
    #[error("episode {index} ({phase}): {source}")]
    InEpisode {
        index: u64,
        phase: Phase,
        source: alloc::boxed::Box<Error>,
    },
    #[error("AUC is undefined: labels contain {positives} positives and {negatives} negatives")]
    UndefinedAuc { positives: usize, negatives: usize },
    #[error("cannot aggregate an empty score stream")]
    EmptyStream,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("class `{0}` has no positive training example")]
    EmptyClass(String),
    #[error("non-finite loss ({0})")]
    NonFiniteLoss(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
