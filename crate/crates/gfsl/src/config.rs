//! Run configuration: a flat `key = value` file or a JSON object, with
//! dotted-key overrides layered on top.

use std::path::{Path, PathBuf};

use gfsl_core::dataset::{AgeRange, CardinalityBasis};
use gfsl_core::partition::PoolFractions;
use gfsl_core::synth::SynthConfig;
use gfsl_core::{Activation, EpisodeSpec, Phase, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Environment variable that overrides the report directory.
pub const REPORT_DIR_ENV: &str = "GFSL_REPORT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root for every stage artifact.
    pub work_dir: PathBuf,
    pub vocab: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub reports: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("gfsl-run"),
            vocab: None,
            metadata: None,
            embeddings: None,
            reports: None,
        }
    }
}

impl Paths {
    fn or_work(&self, p: &Option<PathBuf>, name: &str) -> PathBuf {
        p.clone().unwrap_or_else(|| self.work_dir.join(name))
    }

    pub fn vocab(&self) -> PathBuf {
        self.or_work(&self.vocab, "vocab.txt")
    }

    pub fn metadata(&self) -> PathBuf {
        self.or_work(&self.metadata, "metadata.csv")
    }

    pub fn embeddings(&self) -> PathBuf {
        self.or_work(&self.embeddings, "embeddings.csv")
    }

    pub fn dataset(&self) -> PathBuf {
        self.work_dir.join("dataset.json")
    }

    pub fn stats(&self) -> PathBuf {
        self.work_dir.join("stats.json")
    }

    pub fn partition(&self) -> PathBuf {
        self.work_dir.join("partition.json")
    }

    pub fn episodes(&self, phase: Phase) -> PathBuf {
        self.work_dir.join("episodes").join(format!("{phase}.json"))
    }

    pub fn checkpoint(&self, method: &str) -> PathBuf {
        self.work_dir
            .join("checkpoints")
            .join(format!("{method}.json"))
    }

    pub fn manifest(&self, command: &str) -> PathBuf {
        self.work_dir
            .join("manifests")
            .join(format!("{command}.json"))
    }

    /// The environment variable wins over the configured value.
    pub fn reports(&self) -> PathBuf {
        match std::env::var_os(REPORT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.or_work(&self.reports, "reports"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            output_dim: 128,
            activation: Activation::Tanh,
        }
    }
}

impl EncoderConfig {
    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut d = vec![input_dim];
        d.extend(&self.hidden);
        d.push(self.output_dim);
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodesConfig {
    pub spec: EpisodeSpec,
    pub count: u64,
}

impl Default for EpisodesConfig {
    fn default() -> Self {
        Self {
            spec: EpisodeSpec::new(2, 1, 30, 30, Phase::MetaTest),
            count: 10,
        }
    }
}

/// Cells are the cross product of `n_way`, `n_unseen` and `k_trn`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub episodes: u64,
    pub n_way: Vec<usize>,
    pub n_unseen: Vec<usize>,
    pub k_trn: Vec<usize>,
    pub k_tst: usize,
    pub per_episode_csv: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            episodes: 10_000,
            n_way: vec![3],
            n_unseen: vec![1],
            k_trn: vec![30],
            k_tst: 30,
            per_episode_csv: true,
        }
    }
}

impl EvalConfig {
    /// Meta-test specs in grid order; cells with more unseen classes than
    /// ways are skipped.
    pub fn specs(&self) -> Vec<EpisodeSpec> {
        let mut out = Vec::new();
        for &n in &self.n_way {
            for &u in &self.n_unseen {
                if u > n {
                    continue;
                }
                for &k in &self.k_trn {
                    out.push(EpisodeSpec::new(n - u, u, k, self.k_tst, Phase::MetaTest));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Required by every stage that samples.
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SynthConfig,
    /// Inclusive age window applied at ingestion; `None` keeps everything.
    pub ages: Option<AgeRange>,
    pub cardinality_basis: CardinalityBasis,
    pub n_tst_classes: usize,
    pub n_val_classes: usize,
    pub fractions: PoolFractions,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub episodes: EpisodesConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            paths: Paths::default(),
            synth: SynthConfig::default(),
            ages: None,
            cardinality_basis: CardinalityBasis::default(),
            n_tst_classes: 5,
            n_val_classes: 3,
            fractions: PoolFractions::default(),
            encoder: EncoderConfig::default(),
            train: TrainConfig::default(),
            episodes: EpisodesConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').map(str::trim).collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| {
            CliError::Config(format!(
                "`{key}`: `{}` is not a section",
                parts[..i].join(".")
            ))
        })?;
        let slot = obj
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("unknown key `{key}`")))?;
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    Err(CliError::Config("empty key".into()))
}

/// Values that parse as JSON are taken as JSON, anything else as a string.
fn parse_value(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(root: &mut Value, prefix: &str, value: Value) -> Result<()> {
    match value {
        // objects merge key by key, except into unset optional sections
        Value::Object(map)
            if prefix.is_empty() || !matches!(lookup(root, prefix), Some(Value::Null)) =>
        {
            for (k, v) in map {
                let key = if prefix.is_empty() {
                    k
                } else {
                    format!("{prefix}.{k}")
                };
                merge(root, &key, v)?;
            }
            Ok(())
        }
        other => set_path(root, prefix, other),
    }
}

fn lookup<'a>(root: &'a Value, key: &str) -> Option<&'a Value> {
    key.split('.').try_fold(root, |n, p| n.get(p.trim()))
}

impl RunConfig {
    /// Parses a config file body.
    pub fn parse(text: &str) -> Result<Self> {
        Self::default().with_text(text)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    fn with_text(self, text: &str) -> Result<Self> {
        let mut root = serde_json::to_value(&self).expect("config serializes");
        if text.trim_start().starts_with('{') {
            let v: Value =
                serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
            merge(&mut root, "", v)?;
        } else {
            for (n, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (k, v) = line.split_once('=').ok_or_else(|| {
                    CliError::Config(format!("line {}: expected key = value", n + 1))
                })?;
                merge(&mut root, k.trim(), parse_value(v))
                    .map_err(|e| CliError::Config(format!("line {}: {e}", n + 1)))?;
            }
        }
        Self::from_value(root)
    }

    fn from_value(v: Value) -> Result<Self> {
        serde_json::from_value(v).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Applies `key=value` overrides in order.
    pub fn with_overrides<S: AsRef<str>>(self, overrides: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(&self).expect("config serializes");
        for o in overrides {
            let (k, v) = o.as_ref().split_once('=').ok_or_else(|| {
                CliError::Config(format!("override `{}` is not key=value", o.as_ref()))
            })?;
            merge(&mut root, k.trim(), parse_value(v))?;
        }
        Self::from_value(root)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| CliError::Config("a seed is required: pass --seed or set `seed`".into()))
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form, minus `paths`.
    pub fn hash(&self) -> String {
        let mut v = self.to_json();
        if let Value::Object(m) = &mut v {
            m.remove("paths");
        }
        hex::encode(Sha256::digest(v.to_string()))
    }
}
