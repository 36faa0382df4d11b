//! Multi-label episode generation.
//!
//! Seen classes are drawn from the meta-train class set and unseen classes
//! from the phase's own class set; each block is sorted by increasing
//! dataset-wide frequency. The sample set is the phase pool minus every
//! example carrying a class outside the episode. Each split is then filled
//! class by class (rarest first), topping up only the positives still
//! missing, and finally receives a not-finding example. Sampled examples
//! leave the sample set, so the two splits never share an example.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::MetaDataset;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::partition::{by_frequency, ClassPartition, ExamplePools};
use crate::rng::{stream_rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "meta-train")]
    MetaTrain,
    #[serde(rename = "meta-val")]
    MetaVal,
    #[serde(rename = "meta-test")]
    MetaTest,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::MetaTrain, Phase::MetaVal, Phase::MetaTest];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::MetaTrain => "meta-train",
            Phase::MetaVal => "meta-val",
            Phase::MetaTest => "meta-test",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Phase::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidSpec(alloc::format!("unknown phase `{s}`")))
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub n_seen: usize,
    pub n_unseen: usize,
    pub k_trn: usize,
    pub k_tst: usize,
    pub phase: Phase,
    /// Not-finding examples appended to each split.
    #[serde(default = "one")]
    pub not_finding: usize,
}

impl EpisodeSpec {
    pub fn new(n_seen: usize, n_unseen: usize, k_trn: usize, k_tst: usize, phase: Phase) -> Self {
        Self {
            n_seen,
            n_unseen,
            k_trn,
            k_tst,
            phase,
            not_finding: 1,
        }
    }

    pub fn n_way(&self) -> usize {
        self.n_seen + self.n_unseen
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.n_way() == 0 {
            return bad("an episode needs at least one class");
        }
        if self.k_trn == 0 || self.k_tst == 0 {
            return bad("k_trn and k_tst must be at least 1");
        }
        if self.phase == Phase::MetaTrain && self.n_unseen > 0 {
            return bad("meta-train episodes have no unseen classes");
        }
        if self.not_finding == 0 {
            return bad("each split needs at least one not-finding example");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeClass {
    pub class: usize,
    pub seen: bool,
}

/// One generated task. `trn`/`tst` hold dataset indices; the label views are
/// 0/1 rows aligned with `classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub phase: Phase,
    pub seed: u64,
    pub index: u64,
    pub classes: Vec<EpisodeClass>,
    pub trn: Vec<usize>,
    pub tst: Vec<usize>,
    pub trn_labels: Vec<Vec<u8>>,
    pub tst_labels: Vec<Vec<u8>>,
}

impl Episode {
    pub fn class_indices(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.class).collect()
    }

    pub fn n_seen(&self) -> usize {
        self.classes.iter().filter(|c| c.seen).count()
    }

    pub fn n_way(&self) -> usize {
        self.classes.len()
    }
}

/// Per-phase lookup tables over a partitioned dataset.
#[derive(Debug, Clone)]
pub struct EpisodeSampler<'a> {
    ds: &'a MetaDataset,
    partition: &'a ClassPartition,
    phases: [PhaseIndex; 3],
    pools_flat: [Vec<usize>; 3],
}

#[derive(Debug, Clone, Default)]
struct PhaseIndex {
    /// `positives[c]`: pool examples labeled with `c`, ascending.
    positives: Vec<Vec<usize>>,
    normals: Vec<usize>,
}

impl<'a> EpisodeSampler<'a> {
    pub fn new(ds: &'a MetaDataset, partition: &'a ClassPartition, pools: &ExamplePools) -> Self {
        let k = ds.vocab().len();
        let phases = Phase::ALL.map(|phase| {
            let mut idx = PhaseIndex {
                positives: alloc::vec![Vec::new(); k],
                normals: Vec::new(),
            };
            for &i in pools.pool(phase) {
                let labels = &ds.example(i).labels;
                if labels.is_empty() {
                    idx.normals.push(i);
                }
                for c in labels.iter() {
                    idx.positives[c].push(i);
                }
            }
            idx
        });
        Self {
            ds,
            partition,
            phases,
            pools_flat: Phase::ALL.map(|p| pools.pool(p).to_vec()),
        }
    }

    pub fn dataset(&self) -> &'a MetaDataset {
        self.ds
    }

    pub fn partition(&self) -> &'a ClassPartition {
        self.partition
    }

    fn index(&self, phase: Phase) -> &PhaseIndex {
        &self.phases[phase as usize]
    }

    /// Every example of the phase's pool, ascending.
    pub fn pool(&self, phase: Phase) -> &[usize] {
        &self.pools_flat[phase as usize]
    }

    /// Generates one episode with an explicit generator.
    pub fn generate_with(&self, spec: &EpisodeSpec, rng: &mut Rng) -> Result<Episode> {
        spec.validate()?;
        let ds = self.ds;
        let freq = ds.freq();
        let width = ds.vocab().len();

        let mut seen = sample_classes(&self.partition.meta_trn, spec.n_seen, "seen", rng)?;
        by_frequency(&mut seen, freq);
        let mut unseen = if spec.n_unseen == 0 {
            Vec::new()
        } else {
            sample_classes(
                self.partition.classes(spec.phase),
                spec.n_unseen,
                "unseen",
                rng,
            )?
        };
        by_frequency(&mut unseen, freq);

        let order: Vec<usize> = seen.iter().chain(&unseen).copied().collect();
        let allowed = LabelSet::from_indices(width, order.iter().copied());
        let table = self.index(spec.phase);
        // sample set: phase pool minus examples with excluded labels
        let eligible: Vec<Vec<usize>> = order
            .iter()
            .map(|&c| {
                table.positives[c]
                    .iter()
                    .copied()
                    .filter(|&i| ds.example(i).labels.is_subset(&allowed))
                    .collect()
            })
            .collect();
        let mut taken = BTreeSet::new();

        let mut splits: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (split, k) in splits.iter_mut().zip([spec.k_trn, spec.k_tst]) {
            for (slot, &c) in order.iter().enumerate() {
                let present = split
                    .iter()
                    .filter(|&&i| ds.example(i).labels.contains(c))
                    .count();
                let missing = k.saturating_sub(present);
                if missing == 0 {
                    continue;
                }
                let fresh: Vec<usize> = eligible[slot]
                    .iter()
                    .copied()
                    .filter(|i| !taken.contains(i))
                    .collect();
                draw(&fresh, missing, rng, split, &mut taken).map_err(|available| {
                    Error::EpisodeInfeasible {
                        class: ds.vocab().name(c).into(),
                        needed: missing,
                        available,
                    }
                })?;
            }
            let fresh: Vec<usize> = table
                .normals
                .iter()
                .copied()
                .filter(|i| !taken.contains(i))
                .collect();
            draw(&fresh, spec.not_finding, rng, split, &mut taken).map_err(|available| {
                Error::EpisodeInfeasible {
                    class: String::from("not finding"),
                    needed: spec.not_finding,
                    available,
                }
            })?;
        }

        let [trn, tst] = splits;
        let view = |ids: &[usize]| -> Vec<Vec<u8>> {
            ids.iter()
                .map(|&i| ds.example(i).labels.restrict(&order))
                .collect()
        };
        let classes = order
            .iter()
            .enumerate()
            .map(|(slot, &class)| EpisodeClass {
                class,
                seen: slot < seen.len(),
            })
            .collect();
        Ok(Episode {
            phase: spec.phase,
            seed: 0,
            index: 0,
            classes,
            trn_labels: view(&trn),
            tst_labels: view(&tst),
            trn,
            tst,
        })
    }

    /// Episode `index` of the stream rooted at `master`.
    pub fn generate_indexed(&self, spec: &EpisodeSpec, master: u64, index: u64) -> Result<Episode> {
        let mut rng = stream_rng(master, index);
        let mut ep = self
            .generate_with(spec, &mut rng)
            .map_err(|e| Error::InEpisode {
                index,
                phase: spec.phase,
                source: alloc::boxed::Box::new(e),
            })?;
        ep.seed = master;
        ep.index = index;
        Ok(ep)
    }
}

fn sample_classes(from: &[usize], n: usize, what: &str, rng: &mut Rng) -> Result<Vec<usize>> {
    if from.len() < n {
        return Err(Error::InvalidSpec(alloc::format!(
            "{n} {what} classes requested, only {} available",
            from.len()
        )));
    }
    Ok(index::sample(rng, from.len(), n)
        .into_iter()
        .map(|i| from[i])
        .collect())
}

/// Uniform draw of `n` items without replacement; `Err(available)` if short.
fn draw(
    from: &[usize],
    n: usize,
    rng: &mut Rng,
    into: &mut Vec<usize>,
    taken: &mut BTreeSet<usize>,
) -> core::result::Result<(), usize> {
    if from.len() < n {
        return Err(from.len());
    }
    for j in index::sample(rng, from.len(), n) {
        into.push(from[j]);
        taken.insert(from[j]);
    }
    Ok(())
}

/// Generates the episode for `seed` (stream index 0).
pub fn generate_episode(
    ds: &MetaDataset,
    partition: &ClassPartition,
    pools: &ExamplePools,
    spec: &EpisodeSpec,
    seed: u64,
) -> Result<Episode> {
    EpisodeSampler::new(ds, partition, pools).generate_indexed(spec, seed, 0)
}

/// Lazily generates episodes `0..count`; episode `i` depends only on
/// `(master_seed, i)`.
pub fn episode_stream<'s>(
    sampler: &'s EpisodeSampler<'s>,
    spec: EpisodeSpec,
    master_seed: u64,
    count: u64,
) -> impl Iterator<Item = Result<Episode>> + 's {
    (0..count).map(move |i| sampler.generate_indexed(&spec, master_seed, i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Trn,
    Tst,
}

/// One violated episode invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    ClassCount {
        seen: usize,
        unseen: usize,
    },
    DuplicateClass(usize),
    /// An example appears in both splits.
    Overlap(usize),
    DuplicateExample {
        split: Split,
        example: usize,
    },
    /// An example carries a label outside the episode classes.
    ForeignLabel {
        split: Split,
        example: usize,
        class: usize,
    },
    TooFewPositives {
        split: Split,
        class: usize,
        needed: usize,
        got: usize,
    },
    NoNotFinding(Split),
    LabelView {
        split: Split,
        position: usize,
    },
    UnknownExample {
        split: Split,
        example: usize,
    },
}

/// Reports every invariant violation; empty iff the episode is valid.
pub fn validate_episode(ds: &MetaDataset, ep: &Episode, spec: &EpisodeSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let seen = ep.n_seen();
    let unseen = ep.classes.len() - seen;
    if seen != spec.n_seen || unseen != spec.n_unseen {
        out.push(Diagnostic::ClassCount { seen, unseen });
    }
    let order = ep.class_indices();
    let mut distinct = BTreeSet::new();
    for &c in &order {
        if !distinct.insert(c) {
            out.push(Diagnostic::DuplicateClass(c));
        }
    }
    let width = ds.vocab().len();
    if order.iter().any(|&c| c >= width) {
        return out;
    }
    let allowed = LabelSet::from_indices(width, order.iter().copied());
    let trn_set: BTreeSet<usize> = ep.trn.iter().copied().collect();
    for &i in &ep.tst {
        if trn_set.contains(&i) {
            out.push(Diagnostic::Overlap(i));
        }
    }
    for (split, ids, views, k) in [
        (Split::Trn, &ep.trn, &ep.trn_labels, spec.k_trn),
        (Split::Tst, &ep.tst, &ep.tst_labels, spec.k_tst),
    ] {
        let mut uniq = BTreeSet::new();
        let mut normals = 0;
        let mut counts = alloc::vec![0usize; order.len()];
        for (pos, &i) in ids.iter().enumerate() {
            if i >= ds.len() {
                out.push(Diagnostic::UnknownExample { split, example: i });
                continue;
            }
            if !uniq.insert(i) {
                out.push(Diagnostic::DuplicateExample { split, example: i });
            }
            let labels = &ds.example(i).labels;
            if labels.is_empty() {
                normals += 1;
            }
            for c in labels.iter().filter(|&c| !allowed.contains(c)) {
                out.push(Diagnostic::ForeignLabel {
                    split,
                    example: i,
                    class: c,
                });
            }
            for (slot, &c) in order.iter().enumerate() {
                if labels.contains(c) {
                    counts[slot] += 1;
                }
            }
            if views.get(pos) != Some(&labels.restrict(&order)) {
                out.push(Diagnostic::LabelView {
                    split,
                    position: pos,
                });
            }
        }
        if views.len() > ids.len() {
            out.push(Diagnostic::LabelView {
                split,
                position: ids.len(),
            });
        }
        for (slot, &c) in order.iter().enumerate() {
            if counts[slot] < k {
                out.push(Diagnostic::TooFewPositives {
                    split,
                    class: c,
                    needed: k,
                    got: counts[slot],
                });
            }
        }
        if normals == 0 {
            out.push(Diagnostic::NoNotFinding(split));
        }
    }
    out
}

/// Extra checks needing the partition: class origin and pool membership.
pub fn validate_membership(
    ep: &Episode,
    partition: &ClassPartition,
    pools: &ExamplePools,
) -> Vec<String> {
    let mut out = Vec::new();
    for c in &ep.classes {
        let home = if c.seen {
            &partition.meta_trn
        } else {
            partition.classes(ep.phase)
        };
        if !home.contains(&c.class) {
            out.push(alloc::format!(
                "class {} not in its {} set",
                c.class,
                ep.phase
            ));
        }
    }
    let pool = pools.pool(ep.phase);
    for &i in ep.trn.iter().chain(&ep.tst) {
        if pool.binary_search(&i).is_err() {
            out.push(alloc::format!("example {i} outside the {} pool", ep.phase));
        }
    }
    out
}
