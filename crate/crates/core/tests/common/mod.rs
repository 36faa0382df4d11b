#![allow(dead_code)]

use std::collections::BTreeSet;

use gfsl_core::dataset::{ExampleRecord, FrequencyTable, MetaDataset, PathologyVocab};
use gfsl_core::episode::{Episode, EpisodeSpec, Phase};
use gfsl_core::labels::LabelSet;
use gfsl_core::partition::{build_example_pools, ClassPartition, ExamplePools, PoolFractions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SOURCES: [&str; 4] = ["CheXpert", "MIMIC", "ChestX-ray14", "PadChest"];

/// Per-class, per-source label counts of the 15-pathology corpus.
pub const REFERENCE_COUNTS: [(&str, [u64; 4]); 15] = [
    ("Effusion", [66_484, 43_544, 13_086, 5_075]),
    ("Lung Opacity", [77_194, 42_779, 0, 0]),
    ("Atelectasis", [25_980, 38_297, 11_335, 4_808]),
    ("Infiltration", [0, 0, 19_362, 10_455]),
    ("Nodule", [0, 0, 6_238, 3_429]),
    ("Mass", [0, 0, 5_682, 738]),
    ("Pleural Thickening", [0, 0, 3_326, 2_691]),
    ("Emphysema", [0, 0, 2_484, 939]),
    ("Fibrosis", [0, 0, 1_650, 489]),
    ("Hernia", [0, 0, 197, 1_034]),
    ("Cardiomegaly", [20_391, 36_512, 2_701, 6_782]),
    ("Edema", [41_247, 21_894, 2_269, 865]),
    ("Pneumothorax", [14_977, 9_215, 5_220, 306]),
    ("Consolidation", [10_340, 9_183, 4_505, 1_197]),
    ("Pneumonia", [2_986, 13_679, 1_381, 3_548]),
];

pub fn reference_table() -> FrequencyTable {
    let vocab = PathologyVocab::new(REFERENCE_COUNTS.iter().map(|(n, _)| *n)).unwrap();
    FrequencyTable::from_per_source(
        vocab,
        SOURCES.iter().map(|s| s.to_string()).collect(),
        REFERENCE_COUNTS.iter().map(|(_, c)| c.to_vec()).collect(),
    )
    .unwrap()
}

pub fn names(table: &FrequencyTable, classes: &[usize]) -> Vec<String> {
    let mut v: Vec<String> = classes
        .iter()
        .map(|&c| table.vocab.name(c).to_string())
        .collect();
    v.sort();
    v
}

pub fn sorted(mut v: Vec<&str>) -> Vec<String> {
    v.sort();
    v.into_iter().map(String::from).collect()
}

/// Random multi-label dataset: `n` records over `k` classes and `s` sources;
/// roughly one in six records is not-finding.
pub fn random_dataset(seed: u64, n: usize, k: usize, s: usize, dim: Option<usize>) -> MetaDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = PathologyVocab::new((0..k).map(|i| format!("class{i}"))).unwrap();
    let records = (0..n)
        .map(|i| {
            let labels = if rng.random_bool(1.0 / 6.0) {
                LabelSet::empty(k)
            } else {
                let m = rng.random_range(1..=3.min(k));
                LabelSet::from_indices(k, (0..m).map(|_| rng.random_range(0..k)))
            };
            ExampleRecord {
                id: format!("r{i}"),
                source: format!("s{}", rng.random_range(0..s)),
                age: rng.random_range(10..=80),
                labels,
                embedding: dim.map(|d| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()),
            }
        })
        .collect();
    MetaDataset::new(vocab, records, dim).unwrap()
}

/// Like [`random_dataset`] over 12 classes, but second labels are drawn from
/// the same block (0..6, 6..9, 9..12) and only a quarter of records carry one.
pub fn grouped_dataset(seed: u64, n: usize) -> MetaDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 12;
    let blocks = [0..6, 6..9, 9..12];
    let vocab = PathologyVocab::new((0..k).map(|i| format!("class{i}"))).unwrap();
    let records = (0..n)
        .map(|i| {
            let labels = if rng.random_bool(1.0 / 6.0) {
                LabelSet::empty(k)
            } else {
                let b = blocks[rng.random_range(0..3)].clone();
                let mut set = vec![rng.random_range(b.clone())];
                if rng.random_bool(0.25) {
                    set.push(rng.random_range(b));
                }
                LabelSet::from_indices(k, set)
            };
            ExampleRecord {
                id: format!("g{i}"),
                source: format!("s{}", i % 3),
                age: 40,
                labels,
                embedding: None,
            }
        })
        .collect();
    MetaDataset::new(vocab, records, None).unwrap()
}

pub fn record(id: usize, width: usize, labels: &[usize]) -> ExampleRecord {
    ExampleRecord {
        id: format!("x{id}"),
        source: "s".into(),
        age: 50,
        labels: LabelSet::from_indices(width, labels.iter().copied()),
        embedding: None,
    }
}

/// A, B seen; C unseen (validation); D test-only and absent.
pub fn micro() -> (MetaDataset, ClassPartition, ExamplePools) {
    let sets: [&[usize]; 8] = [&[0, 2], &[0, 2], &[0], &[1, 2], &[1, 2], &[1], &[], &[]];
    let vocab = PathologyVocab::new(["A", "B", "C", "D"]).unwrap();
    let recs = sets
        .iter()
        .enumerate()
        .map(|(i, s)| record(i, 4, s))
        .collect();
    let ds = MetaDataset::new(vocab, recs, None).unwrap();
    let cp = ClassPartition {
        meta_trn: vec![0, 1],
        meta_val: vec![2],
        meta_tst: vec![3],
    };
    let pools = ExamplePools {
        d_meta_trn: vec![],
        d_meta_val: (0..8).collect(),
        d_meta_tst: vec![],
        fractions: PoolFractions::default(),
        seed: 0,
        warnings: vec![],
    };
    (ds, cp, pools)
}

pub type Outcome = (Vec<usize>, Vec<usize>, Vec<usize>);

pub fn subsets(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if items.len() < k {
        return vec![];
    }
    let mut out = subsets(&items[1..], k - 1);
    out.iter_mut().for_each(|s| s.insert(0, items[0]));
    out.extend(subsets(&items[1..], k));
    out
}

/// Enumerates every outcome reachable by some choice at each sampling step.
pub fn enumerate_valid(
    ds: &MetaDataset,
    cp: &ClassPartition,
    pool: &[usize],
    spec: &EpisodeSpec,
) -> BTreeSet<Outcome> {
    let freq = ds.freq();
    let key = |c: &usize| (freq[*c], *c);
    let mut out = BTreeSet::new();
    for seen in subsets(&cp.meta_trn, spec.n_seen) {
        for unseen in subsets(cp.classes(spec.phase), spec.n_unseen) {
            let (mut s, mut u) = (seen.clone(), unseen.clone());
            s.sort_by_key(key);
            u.sort_by_key(key);
            let order: Vec<usize> = s.iter().chain(&u).copied().collect();
            let ok = |i: usize| ds.example(i).labels.iter().all(|c| order.contains(&c));
            let start: Vec<usize> = pool.iter().copied().filter(|&i| ok(i)).collect();
            let mut states: Vec<(Vec<usize>, Vec<usize>, Vec<usize>)> =
                vec![(start, vec![], vec![])];
            for split in 0..2 {
                let k = if split == 0 { spec.k_trn } else { spec.k_tst };
                for &c in &order {
                    let mut next = Vec::new();
                    for (avail, trn, tst) in states {
                        let cur = if split == 0 { &trn } else { &tst };
                        let present = cur
                            .iter()
                            .filter(|&&i| ds.example(i).labels.contains(c))
                            .count();
                        let missing = k.saturating_sub(present);
                        let cand: Vec<usize> = avail
                            .iter()
                            .copied()
                            .filter(|&i| ds.example(i).labels.contains(c))
                            .collect();
                        for pick in subsets(&cand, missing) {
                            let rest: Vec<usize> = avail
                                .iter()
                                .copied()
                                .filter(|i| !pick.contains(i))
                                .collect();
                            let (mut t1, mut t2) = (trn.clone(), tst.clone());
                            if split == 0 {
                                t1.extend(&pick)
                            } else {
                                t2.extend(&pick)
                            }
                            next.push((rest, t1, t2));
                        }
                    }
                    states = next;
                }
                let mut next = Vec::new();
                for (avail, trn, tst) in states {
                    let normals: Vec<usize> = avail
                        .iter()
                        .copied()
                        .filter(|&i| ds.example(i).labels.is_empty())
                        .collect();
                    for pick in subsets(&normals, spec.not_finding) {
                        let rest: Vec<usize> = avail
                            .iter()
                            .copied()
                            .filter(|i| !pick.contains(i))
                            .collect();
                        let (mut t1, mut t2) = (trn.clone(), tst.clone());
                        if split == 0 {
                            t1.extend(&pick)
                        } else {
                            t2.extend(&pick)
                        }
                        next.push((rest, t1, t2));
                    }
                }
                states = next;
            }
            for (_, mut trn, mut tst) in states {
                trn.sort();
                tst.sort();
                out.insert((order.clone(), trn, tst));
            }
        }
    }
    out
}

pub fn outcome(ep: &Episode) -> Outcome {
    let mut trn = ep.trn.clone();
    let mut tst = ep.tst.clone();
    trn.sort();
    tst.sort();
    (ep.class_indices(), trn, tst)
}

pub fn wide_reserves() -> PoolFractions {
    PoolFractions {
        val_reserve: 0.25,
        tst_reserve: 0.25,
        notfinding_val: 0.25,
        notfinding_tst: 0.25,
    }
}

pub fn fuzz_setup(seed: u64) -> (MetaDataset, ClassPartition, ExamplePools) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ds = grouped_dataset(seed, rng.random_range(600..1500));
    let cp = ClassPartition {
        meta_trn: (0..6).collect(),
        meta_val: (6..9).collect(),
        meta_tst: (9..12).collect(),
    };
    let pools = build_example_pools(&ds, &cp, wide_reserves(), seed).unwrap();
    (ds, cp, pools)
}

pub fn random_spec(rng: &mut ChaCha8Rng) -> EpisodeSpec {
    let phase = Phase::ALL[rng.random_range(0..3)];
    let n_unseen = if phase == Phase::MetaTrain {
        0
    } else {
        rng.random_range(0..=2)
    };
    let n_seen = rng.random_range(if n_unseen == 0 { 1 } else { 0 }..=3);
    EpisodeSpec::new(
        n_seen,
        n_unseen,
        rng.random_range(1..=5),
        rng.random_range(1..=5),
        phase,
    )
}
