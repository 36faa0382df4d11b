//! Pooled Seen/Unseen AUC-ROC, their harmonic mean, and stream aggregation.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::math::sqrt;

/// Normal quantile for a two-sided 95% interval.
pub const Z_95: f64 = 1.96;

/// Area under the ROC curve as the Mann-Whitney statistic: the fraction of
/// (positive, negative) pairs ranked correctly, ties counting one half.
pub fn auc_roc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(alloc::format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks (1-based) of tied groups, summed over positives
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_in_group = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count();
        rank_sum += midrank * pos_in_group as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// `2ab / (a + b)`, and 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScores {
    pub seen_auc: Option<f64>,
    pub unseen_auc: Option<f64>,
    pub hm: f64,
}

impl EpisodeScores {
    /// One-sided episodes take the defined side as their HM.
    pub fn new(seen_auc: Option<f64>, unseen_auc: Option<f64>) -> Result<Self> {
        let hm = match (seen_auc, unseen_auc) {
            (Some(s), Some(u)) => harmonic_mean(s, u),
            (Some(v), None) | (None, Some(v)) => v,
            (None, None) => return Err(Error::Shape("episode has no classes".into())),
        };
        Ok(Self {
            seen_auc,
            unseen_auc,
            hm,
        })
    }
}

/// Scores a (test example x episode class) probability matrix: all seen
/// entries form one binary task, all unseen entries another.
pub fn score_episode(probs: &[Vec<f64>], ep: &Episode) -> Result<EpisodeScores> {
    if probs.len() != ep.tst.len() || probs.iter().any(|r| r.len() != ep.n_way()) {
        return Err(Error::Shape(alloc::format!(
            "probability matrix does not match {} test examples x {} classes",
            ep.tst.len(),
            ep.n_way()
        )));
    }
    let pooled = |want_seen: bool| -> Result<Option<f64>> {
        let slots: Vec<usize> = (0..ep.n_way())
            .filter(|&c| ep.classes[c].seen == want_seen)
            .collect();
        if slots.is_empty() {
            return Ok(None);
        }
        let mut s = Vec::with_capacity(slots.len() * probs.len());
        let mut y = Vec::with_capacity(s.capacity());
        for (row, labels) in probs.iter().zip(&ep.tst_labels) {
            for &c in &slots {
                s.push(row[c]);
                y.push(labels[c]);
            }
        }
        auc_roc(&s, &y).map(Some)
    };
    EpisodeScores::new(pooled(true)?, pooled(false)?)
}

/// Running mean/variance (Welford), mergeable in any order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub n: u64,
    pub mean: f64,
    /// Sum of squared deviations from the mean.
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&self, other: &Accumulator) -> Accumulator {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Accumulator { n, mean, m2 }
    }

    pub fn sample_std(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            sqrt((self.m2 / (self.n - 1) as f64).max(0.0))
        }
    }

    pub fn summary(&self) -> Option<MetricSummary> {
        (self.n > 0).then(|| MetricSummary {
            mean: self.mean,
            ci95: Z_95 * self.sample_std() / sqrt(self.n as f64),
            n: self.n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval.
    pub ci95: f64,
    pub n: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreAccumulator {
    pub seen: Accumulator,
    pub unseen: Accumulator,
    pub hm: Accumulator,
}

impl ScoreAccumulator {
    pub fn push(&mut self, s: &EpisodeScores) {
        if let Some(v) = s.seen_auc {
            self.seen.push(v);
        }
        if let Some(v) = s.unseen_auc {
            self.unseen.push(v);
        }
        self.hm.push(s.hm);
    }

    pub fn merge(&self, o: &ScoreAccumulator) -> ScoreAccumulator {
        ScoreAccumulator {
            seen: self.seen.merge(&o.seen),
            unseen: self.unseen.merge(&o.unseen),
            hm: self.hm.merge(&o.hm),
        }
    }

    pub fn report(&self) -> Result<AggregateReport> {
        Ok(AggregateReport {
            seen: self.seen.summary(),
            unseen: self.unseen.summary(),
            hm: self.hm.summary().ok_or(Error::EmptyStream)?,
        })
    }
}

/// HM is the mean of per-episode HMs, not the HM of the mean AUCs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub seen: Option<MetricSummary>,
    pub unseen: Option<MetricSummary>,
    pub hm: MetricSummary,
}

pub fn aggregate<'a>(
    scores: impl IntoIterator<Item = &'a EpisodeScores>,
) -> Result<AggregateReport> {
    let mut acc = ScoreAccumulator::default();
    for s in scores {
        acc.push(s);
    }
    acc.report()
}
