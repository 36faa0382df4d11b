//! Pretraining loops, per-episode prediction, and early stopping on
//! validation HM.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::MetaDataset;
use crate::episode::{Episode, EpisodeSampler, EpisodeSpec, Phase};
use crate::error::{Error, Result};
use crate::head::{adapt_head, AdaptConfig, HeadParams};
use crate::loss::bce_with_logits;
use crate::metrics::{score_episode, EpisodeScores, ScoreAccumulator};
use crate::nn::{EncoderParams, Trace};
use crate::optim::{AdamWConfig, OptimizerState};
use crate::protonet;
use crate::rng::{derive_seed, stream_rng, Rng};

const ADAPT: u64 = 0x6164_6170;
const VALIDATE: u64 = 0x7661_6c00;
const EPISODES: u64 = 0x6570_6973;
const SHUFFLE: u64 = 0x7368_7566;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    BatchBased,
    ProtonetMl,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::BatchBased => "batchbased",
            Method::ProtonetMl => "protonet-ml",
        }
    }
}

impl core::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batchbased" | "batch-based" => Ok(Method::BatchBased),
            "protonet-ml" | "protonet" => Ok(Method::ProtonetMl),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopMetric {
    #[default]
    Hm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adamw: AdamWConfig,
    pub max_epochs: usize,
    pub stop_metric: StopMetric,
    pub patience: usize,
    /// Meta-train episodes per epoch (prototype method).
    pub train_episodes: u64,
    /// Meta-val episodes scored after each epoch.
    pub val_episodes: u64,
    pub test_episodes: u64,
    pub adapt: AdaptConfig,
    pub train_spec: EpisodeSpec,
    pub val_spec: EpisodeSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            learning_rate: 1e-4,
            adamw: AdamWConfig::default(),
            max_epochs: 150,
            stop_metric: StopMetric::Hm,
            patience: 10,
            train_episodes: 1_000,
            val_episodes: 100,
            test_episodes: 10_000,
            adapt: AdaptConfig::default(),
            train_spec: EpisodeSpec::new(3, 0, 30, 30, Phase::MetaTrain),
            val_spec: EpisodeSpec::new(2, 1, 30, 30, Phase::MetaVal),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.val_episodes == 0 {
            return Err(Error::InvalidConfig(
                "batch size, patience and validation episodes must be positive".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        self.adapt.validate()?;
        self.train_spec.validate()?;
        self.val_spec.validate()
    }
}

/// Encoder plus, for the batch method, the pretraining head over all
/// meta-train classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub method: Method,
    pub encoder: EncoderParams,
    pub head: Option<HeadParams>,
}

impl Model {
    pub fn new(method: Method, encoder: EncoderParams, n_trn_classes: usize) -> Self {
        let head = (method == Method::BatchBased)
            .then(|| HeadParams::zeros(n_trn_classes, encoder.output_dim()));
        Self {
            method,
            encoder,
            head,
        }
    }
}

/// Batch sizes of one pass over `n` items.
pub fn batch_sizes(n: usize, batch_size: usize) -> Vec<usize> {
    (0..n)
        .step_by(batch_size.max(1))
        .map(|start| batch_size.min(n - start))
        .collect()
}

/// One shuffled pass over `pool` in mini-batches; BCE over `classes`; both
/// encoder and head stepped by their optimizers. Returns the example-weighted
/// mean batch loss.
#[allow(clippy::too_many_arguments)]
pub fn batch_train_epoch(
    enc: &mut EncoderParams,
    head: &mut HeadParams,
    ds: &MetaDataset,
    pool: &[usize],
    classes: &[usize],
    batch_size: usize,
    enc_opt: &mut OptimizerState,
    head_opt: &mut OptimizerState,
    rng: &mut Rng,
) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if head.n_way() != classes.len() || head.dim() != enc.output_dim() {
        return Err(Error::Shape(alloc::format!(
            "head {}x{} for {} classes and {}-d embeddings",
            head.n_way(),
            head.dim(),
            classes.len(),
            enc.output_dim()
        )));
    }
    let mut order = pool.to_vec();
    order.shuffle(rng);
    let n_way = classes.len();
    let mut total = 0.0;
    let mut enc_grads = vec![0.0; enc.params().len()];
    let mut head_grads = vec![0.0; head.params().len()];
    for batch in order.chunks(batch_size.max(1)) {
        let traces = batch
            .iter()
            .map(|&i| enc.forward_trace(ds.features(i)?))
            .collect::<Result<Vec<Trace>>>()?;
        let mut logits = Vec::with_capacity(batch.len() * n_way);
        let mut targets = Vec::with_capacity(batch.len() * n_way);
        for (t, &i) in traces.iter().zip(batch) {
            logits.extend(head.logits(t.output())?);
            targets.extend(ds.example(i).labels.restrict(classes));
        }
        let (loss, g) = bce_with_logits(&logits, &targets)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss(alloc::format!("batch loss {loss}")));
        }
        enc_grads.iter_mut().for_each(|v| *v = 0.0);
        head_grads.iter_mut().for_each(|v| *v = 0.0);
        for (row, t) in traces.iter().enumerate() {
            let g_emb = head.backward(
                t.output(),
                &g[row * n_way..(row + 1) * n_way],
                &mut head_grads,
            );
            enc.backward(t, &g_emb, &mut enc_grads);
        }
        enc_opt.step(enc.params_mut(), &enc_grads)?;
        head_opt.step(head.params_mut(), &head_grads)?;
        total += loss * batch.len() as f64;
    }
    Ok(total / pool.len() as f64)
}

/// Generator used to adapt a head for a given episode.
pub fn adaptation_rng(ep: &Episode) -> Rng {
    stream_rng(derive_seed(ep.seed, ADAPT ^ ep.phase as u64), ep.index)
}

/// Probability matrix (test example x episode class).
pub fn predict_episode(
    model: &Model,
    ds: &MetaDataset,
    ep: &Episode,
    adapt: &AdaptConfig,
) -> Result<Vec<Vec<f64>>> {
    match model.method {
        Method::ProtonetMl => protonet::predict_episode(&model.encoder, ds, ep),
        Method::BatchBased => {
            let head = adapt_head(&model.encoder, ds, ep, adapt, &mut adaptation_rng(ep))?;
            ep.tst
                .iter()
                .map(|&i| head.predict(&model.encoder.encode(ds.features(i)?)?))
                .collect()
        }
    }
}

pub fn evaluate_episode(
    model: &Model,
    ds: &MetaDataset,
    ep: &Episode,
    adapt: &AdaptConfig,
) -> Result<EpisodeScores> {
    score_episode(&predict_episode(model, ds, ep, adapt)?, ep)
}

/// Scores episodes `0..count` of the stream rooted at `master` in order.
pub fn evaluate_stream(
    model: &Model,
    sampler: &EpisodeSampler<'_>,
    spec: &EpisodeSpec,
    master: u64,
    count: u64,
    adapt: &AdaptConfig,
) -> Result<Vec<EpisodeScores>> {
    (0..count)
        .map(|i| {
            let ep = sampler.generate_indexed(spec, master, i)?;
            evaluate_episode(model, sampler.dataset(), &ep, adapt)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_hm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation HM (the initial
    /// model when no epoch ran).
    pub model: Model,
    /// Optimizer states captured alongside `model`.
    pub encoder_optimizer: OptimizerState,
    pub head_optimizer: Option<OptimizerState>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Master seed of the validation episode stream; fixed across epochs.
pub fn validation_seed(seed: u64) -> u64 {
    derive_seed(seed, VALIDATE)
}

/// Sequential validation: mean HM over `cfg.val_episodes` meta-val episodes.
pub fn validate_model(
    model: &Model,
    sampler: &EpisodeSampler<'_>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<f64> {
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

/// Pretrains with early stopping on validation HM.
///
/// `validate` scores a candidate model; [`validate_model`] is the sequential
/// default, callers may substitute a parallel one with identical results.
pub fn pretrain<V>(
    init: Model,
    sampler: &EpisodeSampler<'_>,
    cfg: &TrainConfig,
    seed: u64,
    mut validate: V,
) -> Result<TrainOutcome>
where
    V: FnMut(&Model) -> Result<f64>,
{
    cfg.validate()?;
    let ds = sampler.dataset();
    let classes = sampler.partition().meta_trn.clone();
    let mut model = init.clone();
    let mut enc_opt =
        OptimizerState::adamw(cfg.learning_rate, cfg.adamw, model.encoder.params().len());
    let mut head_opt = model
        .head
        .as_ref()
        .map(|h| OptimizerState::adamw(cfg.learning_rate, cfg.adamw, h.params().len()));
    let mut best = (init, enc_opt.clone(), head_opt.clone());
    let mut best_hm = f64::NEG_INFINITY;
    let mut best_epoch = None;
    let mut history = Vec::new();
    let mut since_best = 0;
    let mut stopped_early = false;
    let pool = sampler.pool(Phase::MetaTrain).to_vec();

    for epoch in 0..cfg.max_epochs {
        let loss = match model.method {
            Method::BatchBased => {
                let head = model.head.as_mut().ok_or_else(|| {
                    Error::InvalidConfig("batch method needs a pretraining head".into())
                })?;
                let mut rng = stream_rng(derive_seed(seed, SHUFFLE), epoch as u64);
                batch_train_epoch(
                    &mut model.encoder,
                    head,
                    ds,
                    &pool,
                    &classes,
                    cfg.batch_size,
                    &mut enc_opt,
                    head_opt.as_mut().expect("created with the head"),
                    &mut rng,
                )?
            }
            Method::ProtonetMl => {
                let master = derive_seed(seed, EPISODES);
                let mut total = 0.0;
                for i in 0..cfg.train_episodes {
                    let index = epoch as u64 * cfg.train_episodes + i;
                    let ep = sampler.generate_indexed(&cfg.train_spec, master, index)?;
                    total +=
                        protonet::protonet_train_step(&mut model.encoder, ds, &ep, &mut enc_opt)?;
                }
                total / cfg.train_episodes.max(1) as f64
            }
        };
        let val_hm = validate(&model)?;
        history.push(EpochRecord {
            epoch,
            loss,
            val_hm,
        });
        if val_hm > best_hm {
            best_hm = val_hm;
            best = (model.clone(), enc_opt.clone(), head_opt.clone());
            best_epoch = Some(epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    let (model, encoder_optimizer, head_optimizer) = best;
    Ok(TrainOutcome {
        model,
        encoder_optimizer,
        head_optimizer,
        history,
        best_epoch,
        stopped_early,
    })
}
