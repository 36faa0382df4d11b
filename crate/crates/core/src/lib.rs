//! Generalized few-shot multi-label classification machinery.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece:
//! dataset statistics, the class/example meta-partition, the multi-label
//! episode generator, the prototype and linear-head classifiers with
//! hand-written gradients, and the Seen/Unseen/HM evaluation protocol.
//! File formats, the CLI and parallel fan-out live in the `gfsl` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod episode;
pub mod error;
pub mod head;
pub mod labels;
pub mod loss;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod partition;
pub mod protonet;
pub mod rng;
pub mod synth;
pub mod train;

pub use dataset::{
    class_frequency, compute_stats, AgeRange, CardinalityBasis, DatasetStats, ExampleRecord,
    FrequencyTable, MetaDataset, PathologyVocab,
};
pub use episode::{
    episode_stream, generate_episode, validate_episode, Diagnostic, Episode, EpisodeSampler,
    EpisodeSpec, Phase, Split,
};
pub use error::{Error, Result};
pub use head::{adapt_head, head_predict, AdaptConfig, HeadParams};
pub use labels::LabelSet;
pub use metrics::{
    aggregate, auc_roc, score_episode, AggregateReport, EpisodeScores, MetricSummary,
};
pub use nn::{Activation, EncoderParams};
pub use optim::{AdamWConfig, OptimizerState};
pub use partition::{
    build_class_partition, build_example_pools, ClassPartition, ExamplePools, PoolFractions,
};
pub use protonet::{compute_prototypes, protonet_scores, protonet_train_step, PrototypeSet};
pub use train::{Method, Model, TrainConfig};
