//! Synthetic multi-label data with controllable class separation.
//!
//! Every class owns a random direction scaled by `separation`; an example's
//! features are the mean of its label set's centers plus isotropic Gaussian
//! noise. Not-finding examples sit at the origin. Class frequencies are
//! exact: co-labels are paired from the remaining per-class budgets.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ExampleRecord, MetaDataset, PathologyVocab};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::rng::{purpose, stream_rng, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_trn_classes: usize,
    pub n_val_classes: usize,
    pub n_tst_classes: usize,
    /// Positives per class, by intended meta-set.
    pub trn_per_class: usize,
    pub val_per_class: usize,
    pub tst_per_class: usize,
    pub n_not_finding: usize,
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    /// Probability that an example also carries a second class of its meta-set.
    pub co_label_prob: f64,
    pub n_sources: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_trn_classes: 7,
            n_val_classes: 3,
            n_tst_classes: 5,
            trn_per_class: 2000,
            val_per_class: 150,
            tst_per_class: 250,
            n_not_finding: 600,
            dim: 16,
            separation: 6.0,
            noise: 1.0,
            co_label_prob: 0.2,
            n_sources: 4,
        }
    }
}

impl SynthConfig {
    pub fn n_classes(&self) -> usize {
        self.n_trn_classes + self.n_val_classes + self.n_tst_classes
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(alloc::format!("synthetic data: {m}")));
        if self.n_trn_classes == 0 || self.n_tst_classes == 0 {
            return bad("need at least one training and one test class");
        }
        if self.dim == 0 {
            return bad("feature dimension must be positive");
        }
        if self.n_sources < 2 {
            return bad("at least two sources are needed to tell test classes apart");
        }
        if !(0.0..=1.0).contains(&self.co_label_prob) {
            return bad("co-label probability must lie in [0, 1]");
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0) {
            return bad("separation and noise must be non-negative");
        }
        if self.val_per_class > self.trn_per_class {
            return bad("validation classes must not outnumber training classes");
        }
        Ok(())
    }

    /// Vocabulary: test classes, then validation, then training classes.
    pub fn class_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (tag, n) in [
            ("tst", self.n_tst_classes),
            ("val", self.n_val_classes),
            ("trn", self.n_trn_classes),
        ] {
            names.extend((0..n).map(|i| alloc::format!("{tag}-{i}")));
        }
        names
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub dataset: MetaDataset,
    pub centers: Vec<Vec<f64>>,
}

struct Group {
    classes: Vec<usize>,
    per_class: usize,
    sources: Vec<usize>,
}

fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Builds the dataset; identical `(cfg, seed)` give identical output.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<SynthData> {
    cfg.validate()?;
    let mut rng = stream_rng(seed, purpose::SYNTH);
    let names = cfg.class_names();
    let k = names.len();
    let vocab = PathologyVocab::new(&names)?;

    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..cfg.dim).map(|_| gaussian(&mut rng)).collect();
            let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>()).max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| cfg.separation * x / norm).collect()
        })
        .collect();

    let (t, v) = (cfg.n_tst_classes, cfg.n_val_classes);
    let all: Vec<usize> = (0..cfg.n_sources).collect();
    let groups = [
        // present in every source
        Group {
            classes: (0..t).collect(),
            per_class: cfg.tst_per_class,
            sources: all.clone(),
        },
        Group {
            classes: (t..t + v).collect(),
            per_class: cfg.val_per_class,
            sources: alloc::vec![0],
        },
        // absent from the last source
        Group {
            classes: (t + v..k).collect(),
            per_class: cfg.trn_per_class,
            sources: all[..cfg.n_sources - 1].to_vec(),
        },
    ];

    let mut label_sets: Vec<(Vec<usize>, usize)> = Vec::new();
    for g in &groups {
        let mut remaining = vec![g.per_class; g.classes.len()];
        let mut primaries = vec![0usize; g.classes.len()];
        for a in 0..g.classes.len() {
            while remaining[a] > 0 {
                remaining[a] -= 1;
                let source = g.sources[primaries[a] % g.sources.len()];
                primaries[a] += 1;
                let mut set = alloc::vec![g.classes[a]];
                if rng.random_bool(cfg.co_label_prob) {
                    let partners: Vec<usize> = (0..g.classes.len())
                        .filter(|&b| b != a && remaining[b] > 0)
                        .collect();
                    if let Some(&b) = partners.choose(&mut rng) {
                        remaining[b] -= 1;
                        set.push(g.classes[b]);
                    }
                }
                label_sets.push((set, source));
            }
        }
    }
    for n in 0..cfg.n_not_finding {
        label_sets.push((Vec::new(), n % cfg.n_sources));
    }
    label_sets.shuffle(&mut rng);

    let mut records = Vec::with_capacity(label_sets.len());
    for (n, (set, source)) in label_sets.into_iter().enumerate() {
        let mut x = vec![0.0; cfg.dim];
        for &c in &set {
            for (xi, ci) in x.iter_mut().zip(&centers[c]) {
                *xi += ci / set.len() as f64;
            }
        }
        for xi in x.iter_mut() {
            *xi += cfg.noise * gaussian(&mut rng);
        }
        records.push(ExampleRecord {
            id: alloc::format!("syn-{n:06}"),
            source: alloc::format!("src-{source}"),
            age: rng.random_range(10..=80),
            labels: LabelSet::from_indices(k, set),
            embedding: Some(x),
        });
    }
    Ok(SynthData {
        dataset: MetaDataset::new(vocab, records, Some(cfg.dim))?,
        centers,
    })
}
