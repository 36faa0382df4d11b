//! Linear classification head and its per-episode adaptation.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::MetaDataset;
use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::loss::bce_with_logits;
use crate::math::{axpy, dot, sigmoid};
use crate::nn::EncoderParams;
use crate::rng::Rng;

/// `n_way x dim` row-major weights followed by `n_way` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadParams {
    n_way: usize,
    dim: usize,
    params: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(n_way: usize, dim: usize) -> Self {
        Self {
            n_way,
            dim,
            params: vec![0.0; n_way * dim + n_way],
        }
    }

    pub fn from_parts(n_way: usize, dim: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != n_way * dim + n_way {
            return Err(Error::DimensionMismatch {
                expected: n_way * dim + n_way,
                got: params.len(),
            });
        }
        Ok(Self { n_way, dim, params })
    }

    pub fn n_way(&self) -> usize {
        self.n_way
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weights(&self, c: usize) -> &[f64] {
        &self.params[c * self.dim..(c + 1) * self.dim]
    }

    fn bias(&self, c: usize) -> f64 {
        self.params[self.n_way * self.dim + c]
    }

    pub fn logits(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        if embedding.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: embedding.len(),
            });
        }
        Ok((0..self.n_way)
            .map(|c| self.bias(c) + dot(self.weights(c), embedding))
            .collect())
    }

    pub fn predict(&self, embedding: &[f64]) -> Result<Vec<f64>> {
        Ok(self.logits(embedding)?.into_iter().map(sigmoid).collect())
    }

    /// Accumulates parameter gradients; returns the embedding gradient.
    pub fn backward(&self, embedding: &[f64], grad_logits: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.dim];
        let bias0 = self.n_way * self.dim;
        for (c, &g) in grad_logits.iter().enumerate() {
            axpy(g, embedding, &mut grads[c * self.dim..(c + 1) * self.dim]);
            grads[bias0 + c] += g;
            axpy(g, self.weights(c), &mut grad_in);
        }
        grad_in
    }
}

/// Probabilities of the head applied to the encoded input.
pub fn head_predict(enc: &EncoderParams, head: &HeadParams, x: &[f64]) -> Result<Vec<f64>> {
    head.predict(&enc.encode(x)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub t_steps: usize,
    pub ptc_trn: f64,
    pub lr_head: f64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            t_steps: 100,
            ptc_trn: 0.5,
            lr_head: 0.05,
        }
    }
}

impl AdaptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ptc_trn > 0.0 && self.ptc_trn <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "ptc_trn must lie in (0, 1], got {}",
                self.ptc_trn
            )));
        }
        if !self.lr_head.is_finite() || self.lr_head < 0.0 {
            return Err(Error::InvalidConfig(
                "lr_head must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// `|M| = round(ptc_trn * n)`, at least 1.
    pub fn subset_size(&self, n: usize) -> usize {
        (libm::round(self.ptc_trn * n as f64) as usize).clamp(1, n.max(1))
    }
}

/// Fits a zero-initialized head on fixed embeddings with plain gradient steps
/// over random subsets.
pub fn adapt_head_on(
    embeddings: &[Vec<f64>],
    labels: &[Vec<u8>],
    n_way: usize,
    cfg: &AdaptConfig,
    rng: &mut Rng,
) -> Result<HeadParams> {
    cfg.validate()?;
    if embeddings.is_empty() || embeddings.len() != labels.len() {
        return Err(Error::Shape(alloc::format!(
            "{} embeddings for {} label rows",
            embeddings.len(),
            labels.len()
        )));
    }
    let dim = embeddings[0].len();
    let mut head = HeadParams::zeros(n_way, dim);
    let m = cfg.subset_size(embeddings.len());
    let mut grads = vec![0.0; head.params.len()];
    let mut targets = Vec::with_capacity(m * n_way);
    let mut logits = Vec::with_capacity(m * n_way);
    for _ in 0..cfg.t_steps {
        let subset = index::sample(rng, embeddings.len(), m).into_vec();
        logits.clear();
        targets.clear();
        for &i in &subset {
            logits.extend(head.logits(&embeddings[i])?);
            targets.extend_from_slice(&labels[i]);
        }
        let (_, g) = bce_with_logits(&logits, &targets)?;
        grads.iter_mut().for_each(|v| *v = 0.0);
        for (row, &i) in subset.iter().enumerate() {
            head.backward(
                &embeddings[i],
                &g[row * n_way..(row + 1) * n_way],
                &mut grads,
            );
        }
        for (p, g) in head.params.iter_mut().zip(&grads) {
            *p -= cfg.lr_head * g;
        }
    }
    Ok(head)
}

/// Encodes the episode's training split with the frozen encoder and adapts a
/// fresh head to it.
pub fn adapt_head(
    enc: &EncoderParams,
    ds: &MetaDataset,
    ep: &Episode,
    cfg: &AdaptConfig,
    rng: &mut Rng,
) -> Result<HeadParams> {
    let embeddings = ep
        .trn
        .iter()
        .map(|&i| enc.encode(ds.features(i)?))
        .collect::<Result<Vec<_>>>()?;
    adapt_head_on(&embeddings, &ep.trn_labels, ep.n_way(), cfg, rng)
}
