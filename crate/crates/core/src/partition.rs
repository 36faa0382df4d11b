//! Class-level meta-partition and disjoint per-phase example pools.

use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{FrequencyTable, MetaDataset};
use crate::episode::Phase;
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::rng::{purpose, stream_rng};

/// Disjoint class sets, each held as ascending class indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPartition {
    pub meta_trn: Vec<usize>,
    pub meta_val: Vec<usize>,
    pub meta_tst: Vec<usize>,
}

impl ClassPartition {
    pub fn classes(&self, phase: Phase) -> &[usize] {
        match phase {
            Phase::MetaTrain => &self.meta_trn,
            Phase::MetaVal => &self.meta_val,
            Phase::MetaTest => &self.meta_tst,
        }
    }

    /// Classes whose examples may appear in episodes of `phase`: the seen
    /// (meta-train) classes plus that phase's unseen classes.
    pub fn requestable(&self, phase: Phase) -> Vec<usize> {
        let mut out = self.meta_trn.clone();
        if phase != Phase::MetaTrain {
            out.extend_from_slice(self.classes(phase));
        }
        out.sort_unstable();
        out
    }

    fn mask(classes: &[usize], width: usize) -> LabelSet {
        LabelSet::from_indices(width, classes.iter().copied())
    }
}

/// Sorts classes by increasing frequency; ties keep vocabulary order.
pub(crate) fn by_frequency(classes: &mut [usize], freq: &[u64]) {
    classes.sort_by_key(|&c| (freq[c], c));
}

/// Assigns the `n_tst` rarest classes present in every source to the test
/// set, the `n_val` rarest of the rest to validation, and the remainder to
/// training.
pub fn build_class_partition(
    table: &FrequencyTable,
    n_tst: usize,
    n_val: usize,
) -> Result<ClassPartition> {
    let k = table.vocab.len();
    if n_tst + n_val >= k {
        return Err(Error::InfeasiblePartition(alloc::format!(
            "{n_tst} test + {n_val} validation classes leave no training class out of {k}"
        )));
    }
    let mut everywhere: Vec<usize> = (0..k).filter(|&c| table.in_all_sources(c)).collect();
    if everywhere.len() < n_tst {
        return Err(Error::InfeasiblePartition(alloc::format!(
            "only {} classes are present in all {} sources, {n_tst} needed",
            everywhere.len(),
            table.sources.len()
        )));
    }
    by_frequency(&mut everywhere, &table.freq);
    let mut meta_tst: Vec<usize> = everywhere[..n_tst].to_vec();
    let mut rest: Vec<usize> = (0..k).filter(|c| !meta_tst.contains(c)).collect();
    by_frequency(&mut rest, &table.freq);
    let mut meta_val = rest[..n_val].to_vec();
    let mut meta_trn = rest[n_val..].to_vec();
    meta_tst.sort_unstable();
    meta_val.sort_unstable();
    meta_trn.sort_unstable();
    Ok(ClassPartition {
        meta_trn,
        meta_val,
        meta_tst,
    })
}

/// Fractions routing label-free and training-only examples to the
/// validation and test pools.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolFractions {
    /// Share of examples labeled only with meta-train classes sent to the validation pool.
    pub val_reserve: f64,
    /// Same, for the test pool.
    pub tst_reserve: f64,
    /// Shares of not-finding examples sent to the validation and test pools.
    pub notfinding_val: f64,
    pub notfinding_tst: f64,
}

impl Default for PoolFractions {
    fn default() -> Self {
        Self {
            val_reserve: 0.1,
            tst_reserve: 0.2,
            notfinding_val: 0.1,
            notfinding_tst: 0.3,
        }
    }
}

impl PoolFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.val_reserve,
            self.tst_reserve,
            self.notfinding_val,
            self.notfinding_tst,
        ];
        if all.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidFractions(
                "fractions must lie in [0, 1]".into(),
            ));
        }
        if self.val_reserve + self.tst_reserve >= 1.0 {
            return Err(Error::InvalidFractions(
                "reserves must sum to less than 1".into(),
            ));
        }
        if self.notfinding_val + self.notfinding_tst >= 1.0 {
            return Err(Error::InvalidFractions(
                "not-finding shares must sum to less than 1".into(),
            ));
        }
        Ok(())
    }
}

/// Number of items (out of `n`) routed to the validation and test pools.
///
/// Each share is `round(f * n)`, raised to 1 when `f > 0` and `n >= 3`.
/// If the two shares would leave the training pool empty, the test share
/// (or, failing that, the validation share) gives one item back.
pub fn reserve_counts(n: usize, f_val: f64, f_tst: f64) -> (usize, usize) {
    let share = |f: f64| {
        let r = libm::round(f * n as f64) as usize;
        if f > 0.0 && n >= 3 {
            r.max(1)
        } else {
            r
        }
    };
    let mut val = share(f_val).min(n);
    let mut tst = share(f_tst).min(n - val);
    if n >= 1 && val + tst == n {
        if tst > 0 {
            tst -= 1;
        } else {
            val -= 1;
        }
    }
    (val, tst)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolWarning {
    pub phase: Phase,
    /// `None` means the pool holds no not-finding example.
    pub class: Option<usize>,
}

/// Disjoint example pools (ascending dataset indices) per phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamplePools {
    pub d_meta_trn: Vec<usize>,
    pub d_meta_val: Vec<usize>,
    pub d_meta_tst: Vec<usize>,
    pub fractions: PoolFractions,
    pub seed: u64,
    pub warnings: Vec<PoolWarning>,
}

impl ExamplePools {
    pub fn pool(&self, phase: Phase) -> &[usize] {
        match phase {
            Phase::MetaTrain => &self.d_meta_trn,
            Phase::MetaVal => &self.d_meta_val,
            Phase::MetaTest => &self.d_meta_tst,
        }
    }

    /// Sorted intersection sizes (trn∩val, trn∩tst, val∩tst).
    pub fn overlaps(&self) -> [usize; 3] {
        let inter =
            |a: &[usize], b: &[usize]| a.iter().filter(|x| b.binary_search(x).is_ok()).count();
        [
            inter(&self.d_meta_trn, &self.d_meta_val),
            inter(&self.d_meta_trn, &self.d_meta_tst),
            inter(&self.d_meta_val, &self.d_meta_tst),
        ]
    }
}

/// Routes examples to pools.
///
/// Label precedence is test > validation > training: an example bearing any
/// meta-test label goes to the test pool, otherwise any meta-validation label
/// sends it to the validation pool. Training-only and not-finding examples
/// are shuffled (seeded) and split by [`reserve_counts`].
pub fn build_example_pools(
    ds: &MetaDataset,
    cp: &ClassPartition,
    fractions: PoolFractions,
    seed: u64,
) -> Result<ExamplePools> {
    fractions.validate()?;
    let width = ds.vocab().len();
    let tst_mask = ClassPartition::mask(&cp.meta_tst, width);
    let val_mask = ClassPartition::mask(&cp.meta_val, width);
    let (mut trn, mut val, mut tst) = (Vec::new(), Vec::new(), Vec::new());
    let (mut trn_only, mut normal) = (Vec::new(), Vec::new());
    for (i, e) in ds.examples().iter().enumerate() {
        if e.labels.intersects(&tst_mask) {
            tst.push(i);
        } else if e.labels.intersects(&val_mask) {
            val.push(i);
        } else if e.labels.is_empty() {
            normal.push(i);
        } else {
            trn_only.push(i);
        }
    }
    let mut rng = stream_rng(seed, purpose::POOLS);
    for (items, f_val, f_tst) in [
        (&mut trn_only, fractions.val_reserve, fractions.tst_reserve),
        (
            &mut normal,
            fractions.notfinding_val,
            fractions.notfinding_tst,
        ),
    ] {
        items.shuffle(&mut rng);
        let (n_val, n_tst) = reserve_counts(items.len(), f_val, f_tst);
        val.extend_from_slice(&items[..n_val]);
        tst.extend_from_slice(&items[n_val..n_val + n_tst]);
        trn.extend_from_slice(&items[n_val + n_tst..]);
    }
    trn.sort_unstable();
    val.sort_unstable();
    tst.sort_unstable();
    let mut pools = ExamplePools {
        d_meta_trn: trn,
        d_meta_val: val,
        d_meta_tst: tst,
        fractions,
        seed,
        warnings: Vec::new(),
    };
    pools.warnings = pool_warnings(ds, cp, &pools);
    Ok(pools)
}

fn pool_warnings(ds: &MetaDataset, cp: &ClassPartition, pools: &ExamplePools) -> Vec<PoolWarning> {
    let mut out = Vec::new();
    for phase in Phase::ALL {
        let pool = pools.pool(phase);
        for c in cp.requestable(phase) {
            if !pool.iter().any(|&i| ds.example(i).labels.contains(c)) {
                out.push(PoolWarning {
                    phase,
                    class: Some(c),
                });
            }
        }
        if !pool.iter().any(|&i| ds.example(i).is_not_finding()) {
            out.push(PoolWarning { phase, class: None });
        }
    }
    out
}
