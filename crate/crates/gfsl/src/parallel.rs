//! Episode-parallel evaluation. Results come back in index order, so every
//! aggregate equals its sequential counterpart bit for bit.

use gfsl_core::metrics::{EpisodeScores, ScoreAccumulator};
use gfsl_core::train::{evaluate_episode, validation_seed};
use gfsl_core::{AdaptConfig, EpisodeSampler, EpisodeSpec, Model, TrainConfig};
use rayon::prelude::*;

pub fn evaluate_stream(
    model: &Model,
    sampler: &EpisodeSampler<'_>,
    spec: &EpisodeSpec,
    master: u64,
    count: u64,
    adapt: &AdaptConfig,
) -> gfsl_core::Result<Vec<EpisodeScores>> {
    let results: Vec<gfsl_core::Result<EpisodeScores>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let ep = sampler.generate_indexed(spec, master, i)?;
            evaluate_episode(model, sampler.dataset(), &ep, adapt)
        })
        .collect();
    // first failure by episode index, independent of scheduling
    results.into_iter().collect()
}

/// Parallel drop-in for `gfsl_core::train::validate_model`.
pub fn validate_model(
    model: &Model,
    sampler: &EpisodeSampler<'_>,
    cfg: &TrainConfig,
    seed: u64,
) -> gfsl_core::Result<f64> {
    let scores = evaluate_stream(
        model,
        sampler,
        &cfg.val_spec,
        validation_seed(seed),
        cfg.val_episodes,
        &cfg.adapt,
    )?;
    let mut acc = ScoreAccumulator::default();
    scores.iter().for_each(|s| acc.push(s));
    Ok(acc.report()?.hm.mean)
}
