//! Multi-label prototype classifier.
//!
//! Class `c` gets a prototype `z_c` (mean embedding of its training
//! positives) and an offset `mu_c` (mean distance from `z_c` to every
//! training embedding, negatives included). The logit of a query `q` is
//! `mu_c - |q - z_c|`, so prototypes act as overlapping balls rather than
//! a Voronoi partition.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::MetaDataset;
use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::loss::bce_with_logits;
use crate::math::{axpy, distance, sigmoid};
use crate::nn::{EncoderParams, Trace};
use crate::optim::OptimizerState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet {
    pub prototypes: Vec<Vec<f64>>,
    pub mean_distances: Vec<f64>,
}

impl PrototypeSet {
    /// `labels[i][c]` marks training embedding `i` positive for episode class `c`.
    pub fn from_embeddings(
        embeddings: &[Vec<f64>],
        labels: &[Vec<u8>],
        n_way: usize,
    ) -> Result<Self> {
        if embeddings.is_empty() || embeddings.len() != labels.len() {
            return Err(Error::Shape(alloc::format!(
                "{} embeddings for {} label rows",
                embeddings.len(),
                labels.len()
            )));
        }
        let dim = embeddings[0].len();
        let mut prototypes = Vec::with_capacity(n_way);
        let mut mean_distances = Vec::with_capacity(n_way);
        for c in 0..n_way {
            let mut z = vec![0.0; dim];
            let mut n = 0usize;
            for (e, y) in embeddings.iter().zip(labels) {
                if y[c] == 1 {
                    axpy(1.0, e, &mut z);
                    n += 1;
                }
            }
            if n == 0 {
                return Err(Error::EmptyClass(alloc::format!("episode class {c}")));
            }
            z.iter_mut().for_each(|v| *v /= n as f64);
            let mu =
                embeddings.iter().map(|e| distance(e, &z)).sum::<f64>() / embeddings.len() as f64;
            prototypes.push(z);
            mean_distances.push(mu);
        }
        Ok(Self {
            prototypes,
            mean_distances,
        })
    }

    pub fn n_way(&self) -> usize {
        self.prototypes.len()
    }

    pub fn logits(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        let dim = self.prototypes.first().map_or(0, Vec::len);
        if embedding.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: embedding.len(),
            });
        }
        Ok(self
            .prototypes
            .iter()
            .zip(&self.mean_distances)
            .map(|(z, mu)| mu - distance(embedding, z))
            .collect())
    }

    pub fn probabilities(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(embedding)?.into_iter().map(sigmoid).collect())
    }
}

fn encode_all(enc: &EncoderParams, ds: &MetaDataset, ids: &[usize]) -> Result<Vec<Vec<f64>>> {
    ids.iter().map(|&i| enc.encode(ds.features(i)?)).collect()
}

pub fn compute_prototypes(
    enc: &EncoderParams,
    ds: &MetaDataset,
    ep: &Episode,
) -> Result<PrototypeSet> {
    PrototypeSet::from_embeddings(&encode_all(enc, ds, &ep.trn)?, &ep.trn_labels, ep.n_way())
}

/// Per-class probabilities for raw input `x`.
pub fn protonet_scores(enc: &EncoderParams, protos: &PrototypeSet, x: &[f64]) -> Result<Vec<f64>> {
    protos.probabilities(&enc.encode(x)?)
}

/// Probability matrix (test example x episode class) for an episode.
pub fn predict_episode(
    enc: &EncoderParams,
    ds: &MetaDataset,
    ep: &Episode,
) -> Result<Vec<Vec<f64>>> {
    let protos = compute_prototypes(enc, ds, ep)?;
    ep.tst
        .iter()
        .map(|&i| protonet_scores(enc, &protos, ds.features(i)?))
        .collect()
}

/// Episode loss and its gradients w.r.t. every training and test embedding.
#[derive(Debug, Clone)]
pub struct EmbeddingGrads {
    pub loss: f64,
    pub trn: Vec<Vec<f64>>,
    pub tst: Vec<Vec<f64>>,
}

/// Unit vector `(a - b) / |a - b|`, zero when the points coincide.
fn direction(a: &[f64], b: &[f64]) -> (f64, Vec<f64>) {
    let d = distance(a, b);
    let u = if d > 0.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) / d).collect()
    } else {
        vec![0.0; a.len()]
    };
    (d, u)
}

/// Mean BCE of the query predictions, differentiated through the query
/// distances, the prototypes and the `mu_c` offsets.
pub fn loss_wrt_embeddings(
    trn: &[Vec<f64>],
    trn_labels: &[Vec<u8>],
    tst: &[Vec<f64>],
    tst_labels: &[Vec<u8>],
    n_way: usize,
) -> Result<EmbeddingGrads> {
    let protos = PrototypeSet::from_embeddings(trn, trn_labels, n_way)?;
    let mut logits = Vec::with_capacity(tst.len() * n_way);
    let mut targets = Vec::with_capacity(tst.len() * n_way);
    for (q, y) in tst.iter().zip(tst_labels) {
        logits.extend(protos.logits(q)?);
        targets.extend_from_slice(&y[..n_way]);
    }
    let (loss, g) = bce_with_logits(&logits, &targets)?;
    let dim = protos.prototypes[0].len();
    let mut g_trn = vec![vec![0.0; dim]; trn.len()];
    let mut g_tst = vec![vec![0.0; dim]; tst.len()];
    let inv_n = 1.0 / trn.len() as f64;
    for c in 0..n_way {
        let z = &protos.prototypes[c];
        let mut g_z = vec![0.0; dim];
        // d logit / d mu_c = 1 for every query
        let g_mu: f64 = (0..tst.len()).map(|j| g[j * n_way + c]).sum();
        // logit = mu - |q - z|
        for (j, q) in tst.iter().enumerate() {
            let gs = g[j * n_way + c];
            let (_, u) = direction(q, z);
            axpy(-gs, &u, &mut g_tst[j]);
            axpy(gs, &u, &mut g_z);
        }
        // mu = mean_i |e_i - z|
        for (i, e) in trn.iter().enumerate() {
            let (_, v) = direction(e, z);
            axpy(g_mu * inv_n, &v, &mut g_trn[i]);
            axpy(-g_mu * inv_n, &v, &mut g_z);
        }
        // z = mean of positives
        let members: Vec<usize> = (0..trn.len()).filter(|&i| trn_labels[i][c] == 1).collect();
        let share = 1.0 / members.len() as f64;
        for i in members {
            axpy(share, &g_z, &mut g_trn[i]);
        }
    }
    Ok(EmbeddingGrads {
        loss,
        trn: g_trn,
        tst: g_tst,
    })
}

fn traces(enc: &EncoderParams, ds: &MetaDataset, ids: &[usize]) -> Result<Vec<Trace>> {
    ids.iter()
        .map(|&i| enc.forward_trace(ds.features(i)?))
        .collect()
}

/// Episode loss and its gradient w.r.t. the flat encoder parameters.
pub fn episode_loss_grad(
    enc: &EncoderParams,
    ds: &MetaDataset,
    ep: &Episode,
) -> Result<(f64, Vec<f64>)> {
    let trn_traces = traces(enc, ds, &ep.trn)?;
    let tst_traces = traces(enc, ds, &ep.tst)?;
    let out = |t: &Vec<Trace>| t.iter().map(|t| t.output().to_vec()).collect::<Vec<_>>();
    let eg = loss_wrt_embeddings(
        &out(&trn_traces),
        &ep.trn_labels,
        &out(&tst_traces),
        &ep.tst_labels,
        ep.n_way(),
    )?;
    let mut grads = vec![0.0; enc.params().len()];
    for (t, g) in trn_traces
        .iter()
        .zip(&eg.trn)
        .chain(tst_traces.iter().zip(&eg.tst))
    {
        enc.backward(t, g, &mut grads);
    }
    Ok((eg.loss, grads))
}

pub fn episode_loss(enc: &EncoderParams, ds: &MetaDataset, ep: &Episode) -> Result<f64> {
    let protos = compute_prototypes(enc, ds, ep)?;
    let mut logits = Vec::new();
    let mut targets = Vec::new();
    for (&i, y) in ep.tst.iter().zip(&ep.tst_labels) {
        logits.extend(protos.logits(&enc.encode(ds.features(i)?)?)?);
        targets.extend_from_slice(y);
    }
    Ok(bce_with_logits(&logits, &targets)?.0)
}

/// One optimizer step on the episode loss. Returns the loss before the step.
pub fn protonet_train_step(
    enc: &mut EncoderParams,
    ds: &MetaDataset,
    ep: &Episode,
    opt: &mut OptimizerState,
) -> Result<f64> {
    let (loss, grads) = episode_loss_grad(enc, ds, ep)?;
    if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss(alloc::format!(
            "prototype episode {} ({}) loss {loss}",
            ep.index,
            ep.phase
        )));
    }
    opt.step(enc.params_mut(), &grads)?;
    Ok(loss)
}
