//! JSON artifacts exchanged between pipeline stages.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use gfsl_core::episode::{Episode, EpisodeClass};
use gfsl_core::metrics::{AggregateReport, EpisodeScores, MetricSummary};
use gfsl_core::partition::{ClassPartition, ExamplePools, PoolFractions, PoolWarning};
use gfsl_core::train::EpochRecord;
use gfsl_core::{
    EncoderParams, EpisodeSpec, HeadParams, MetaDataset, Method, Model, OptimizerState, Phase,
    TrainConfig,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
        }
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    create_parent(path)?;
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads an upstream artifact; a missing file names the stage producing it.
pub fn read_json<T: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<T> {
    if !path.exists() {
        return Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            stage,
        });
    }
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerPhase<T> {
    pub meta_trn: T,
    pub meta_val: T,
    pub meta_tst: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarningEntry {
    pub phase: Phase,
    /// Class lacking positives in the pool; absent when the pool has no
    /// not-finding example.
    pub class: Option<String>,
}

/// Class sets and example pools by name and id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionManifest {
    pub version: u32,
    pub vocab: Vec<String>,
    pub seed: u64,
    pub fractions: PoolFractions,
    pub classes: PerPhase<Vec<String>>,
    pub pools: PerPhase<Vec<String>>,
    pub warnings: Vec<WarningEntry>,
}

pub const PARTITION_VERSION: u32 = 1;

impl PartitionManifest {
    pub fn new(ds: &MetaDataset, cp: &ClassPartition, pools: &ExamplePools) -> Self {
        let names = |v: &[usize]| v.iter().map(|&c| ds.vocab().name(c).to_string()).collect();
        let ids = |v: &[usize]| v.iter().map(|&i| ds.example(i).id.clone()).collect();
        Self {
            version: PARTITION_VERSION,
            vocab: ds.vocab().names().to_vec(),
            seed: pools.seed,
            fractions: pools.fractions,
            classes: PerPhase {
                meta_trn: names(&cp.meta_trn),
                meta_val: names(&cp.meta_val),
                meta_tst: names(&cp.meta_tst),
            },
            pools: PerPhase {
                meta_trn: ids(&pools.d_meta_trn),
                meta_val: ids(&pools.d_meta_val),
                meta_tst: ids(&pools.d_meta_tst),
            },
            warnings: pools
                .warnings
                .iter()
                .map(|w| WarningEntry {
                    phase: w.phase,
                    class: w.class.map(|c| ds.vocab().name(c).to_string()),
                })
                .collect(),
        }
    }

    /// Maps names and ids back onto `ds`.
    pub fn resolve(&self, ds: &MetaDataset) -> Result<(ClassPartition, ExamplePools)> {
        if self.version != PARTITION_VERSION {
            return Err(CliError::Config(format!(
                "unsupported partition version {}",
                self.version
            )));
        }
        if self.vocab != ds.vocab().names() {
            return Err(CliError::Config(
                "partition vocabulary differs from the dataset's".into(),
            ));
        }
        let class = |n: &String| ds.vocab().index_of(n).map_err(CliError::from);
        let classes = |v: &[String]| -> Result<Vec<usize>> {
            let mut out = v.iter().map(class).collect::<Result<Vec<_>>>()?;
            out.sort_unstable();
            Ok(out)
        };
        let by_id: HashMap<&str, usize> = ds
            .examples()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let pool = |v: &[String]| -> Result<Vec<usize>> {
            let mut out = v
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).copied().ok_or_else(|| {
                        CliError::Config(format!("partition names unknown example `{id}`"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.sort_unstable();
            Ok(out)
        };
        let cp = ClassPartition {
            meta_trn: classes(&self.classes.meta_trn)?,
            meta_val: classes(&self.classes.meta_val)?,
            meta_tst: classes(&self.classes.meta_tst)?,
        };
        let warnings = self
            .warnings
            .iter()
            .map(|w| {
                Ok(PoolWarning {
                    phase: w.phase,
                    class: w.class.as_ref().map(class).transpose()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let pools = ExamplePools {
            d_meta_trn: pool(&self.pools.meta_trn)?,
            d_meta_val: pool(&self.pools.meta_val)?,
            d_meta_tst: pool(&self.pools.meta_tst)?,
            fractions: self.fractions,
            seed: self.seed,
            warnings,
        };
        Ok((cp, pools))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassEntry {
    pub name: String,
    pub seen: bool,
}

/// `labels[c]` refers to the episode's `classes[c]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleEntry {
    pub id: String,
    pub labels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFile {
    pub classes: Vec<ClassEntry>,
    pub trn: Vec<ExampleEntry>,
    pub tst: Vec<ExampleEntry>,
    pub seed: u64,
    pub index: u64,
    pub spec: EpisodeSpec,
}

impl EpisodeFile {
    pub fn new(ds: &MetaDataset, ep: &Episode, spec: &EpisodeSpec) -> Self {
        let entries = |ids: &[usize], labels: &[Vec<u8>]| {
            ids.iter()
                .zip(labels)
                .map(|(&i, l)| ExampleEntry {
                    id: ds.example(i).id.clone(),
                    labels: l.clone(),
                })
                .collect()
        };
        Self {
            classes: ep
                .classes
                .iter()
                .map(|c| ClassEntry {
                    name: ds.vocab().name(c.class).to_string(),
                    seen: c.seen,
                })
                .collect(),
            trn: entries(&ep.trn, &ep.trn_labels),
            tst: entries(&ep.tst, &ep.tst_labels),
            seed: ep.seed,
            index: ep.index,
            spec: *spec,
        }
    }

    pub fn to_episode(&self, ds: &MetaDataset) -> Result<Episode> {
        let by_id: HashMap<&str, usize> = ds
            .examples()
            .iter()
            .enumerate()
            .map(|(i, e)| (e.id.as_str(), i))
            .collect();
        let n_way = self.classes.len();
        let split = |v: &[ExampleEntry]| -> Result<(Vec<usize>, Vec<Vec<u8>>)> {
            let mut idx = Vec::with_capacity(v.len());
            let mut labels = Vec::with_capacity(v.len());
            for e in v {
                idx.push(*by_id.get(e.id.as_str()).ok_or_else(|| {
                    CliError::Config(format!("episode names unknown example `{}`", e.id))
                })?);
                if e.labels.len() != n_way || e.labels.iter().any(|&b| b > 1) {
                    return Err(CliError::Config(format!("bad label vector for `{}`", e.id)));
                }
                labels.push(e.labels.clone());
            }
            Ok((idx, labels))
        };
        let (trn, trn_labels) = split(&self.trn)?;
        let (tst, tst_labels) = split(&self.tst)?;
        Ok(Episode {
            phase: self.spec.phase,
            seed: self.seed,
            index: self.index,
            classes: self
                .classes
                .iter()
                .map(|c| {
                    Ok(EpisodeClass {
                        class: ds.vocab().index_of(&c.name)?,
                        seen: c.seen,
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            trn,
            tst,
            trn_labels,
            tst_labels,
        })
    }
}

pub const CHECKPOINT_FORMAT: &str = "gfsl-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shapes {
    pub encoder: Vec<usize>,
    /// `(n_way, dim)` of the pretraining head.
    pub head: Option<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub method: Method,
    pub shapes: Shapes,
    pub config_hash: String,
    pub seed: u64,
    pub train: TrainConfig,
    /// Names of the classes the pretraining head predicts.
    pub head_classes: Vec<String>,
    pub encoder: EncoderParams,
    pub head: Option<HeadParams>,
    pub encoder_optimizer: OptimizerState,
    pub head_optimizer: Option<OptimizerState>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

impl Checkpoint {
    pub fn shapes_of(model: &Model) -> Shapes {
        Shapes {
            encoder: model.encoder.dims().to_vec(),
            head: model.head.as_ref().map(|h| (h.n_way(), h.dim())),
        }
    }

    pub fn model(&self) -> Model {
        Model {
            method: self.method,
            encoder: self.encoder.clone(),
            head: self.head.clone(),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(CliError::Checkpoint(format!(
                "unsupported format {} v{}",
                self.format, self.version
            )));
        }
        if Self::shapes_of(&self.model()) != self.shapes {
            return Err(CliError::Checkpoint(
                "recorded shapes do not match parameters".into(),
            ));
        }
        if !self.encoder.is_finite() {
            return Err(CliError::Checkpoint("non-finite encoder parameters".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = read_json(path, "train")?;
        c.check()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seen: Option<MetricSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unseen: Option<MetricSummary>,
    pub hm: MetricSummary,
}

impl From<AggregateReport> for CellMetrics {
    fn from(r: AggregateReport) -> Self {
        Self {
            seen: r.seen,
            unseen: r.unseen,
            hm: r.hm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n_way: usize,
    pub n_unseen: usize,
    pub k_trn: usize,
    pub k_tst: usize,
    pub metrics: CellMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub seed: u64,
    pub episodes: u64,
    pub checkpoint_sha256: String,
    pub cells: Vec<Cell>,
}

fn pct(m: &Option<MetricSummary>) -> String {
    match m {
        Some(m) => format!("{:.2} ± {:.2}", 100.0 * m.mean, 100.0 * m.ci95),
        None => "-".to_string(),
    }
}

impl EvalReport {
    /// Percent with two decimals, `value ± half-width`.
    pub fn to_text(&self) -> String {
        let mut rows = vec![[
            "n-way".to_string(),
            "n-unseen".into(),
            "k-trn".into(),
            "Seen".into(),
            "Unseen".into(),
            "HM".into(),
        ]];
        for c in &self.cells {
            rows.push([
                c.n_way.to_string(),
                c.n_unseen.to_string(),
                c.k_trn.to_string(),
                pct(&c.metrics.seen),
                pct(&c.metrics.unseen),
                pct(&Some(c.metrics.hm)),
            ]);
        }
        let widths: Vec<usize> = (0..6)
            .map(|j| rows.iter().map(|r| r[j].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!(
            "{} ({} episodes per cell, seed {})\n",
            self.method.as_str(),
            self.episodes,
            self.seed
        );
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:>w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        out
    }
}

/// `n_way,n_unseen,k_trn,episode,seen,unseen,hm`; missing sides are empty.
pub fn episode_csv(rows: &[(EpisodeSpec, Vec<EpisodeScores>)]) -> String {
    let mut out = String::from("n_way,n_unseen,k_trn,episode,seen,unseen,hm\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (spec, scores) in rows {
        for (i, s) in scores.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{i},{},{},{}\n",
                spec.n_way(),
                spec.n_unseen,
                spec.k_trn,
                opt(s.seen_auc),
                opt(s.unseen_auc),
                s.hm
            ));
        }
    }
    out
}
