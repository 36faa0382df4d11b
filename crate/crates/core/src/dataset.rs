//! Multi-label example metadata, the class vocabulary, and dataset statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::LabelSet;

/// Ordered class names; position defines the class index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PathologyVocab {
    names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl PathologyVocab {
    pub fn new<S: AsRef<str>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut out = Vec::new();
        let mut index = BTreeMap::new();
        for name in names {
            let name = name.as_ref().trim().to_string();
            if index.insert(name.clone(), out.len()).is_some() {
                return Err(Error::DuplicateClass(name));
            }
            out.push(name);
        }
        Ok(Self { names: out, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownClass(name.to_string()))
    }

    /// Parses names into a label set; unknown names are errors.
    pub fn labels_from_names<S: AsRef<str>>(
        &self,
        names: impl IntoIterator<Item = S>,
    ) -> Result<LabelSet> {
        let mut set = LabelSet::empty(self.len());
        for name in names {
            set.insert(self.index_of(name.as_ref().trim())?);
        }
        Ok(set)
    }

    pub fn label_names<'a>(&'a self, labels: &'a LabelSet) -> impl Iterator<Item = &'a str> + 'a {
        labels.iter().map(|i| self.name(i))
    }
}

impl TryFrom<Vec<String>> for PathologyVocab {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        Self::new(names)
    }
}

impl From<PathologyVocab> for Vec<String> {
    fn from(v: PathologyVocab) -> Self {
        v.names
    }
}

/// One image's metadata and (optionally) its input feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub source: String,
    pub age: u32,
    pub labels: LabelSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl ExampleRecord {
    pub fn is_not_finding(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Inclusive age window applied at ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeRange {
    pub min: u32,
    pub max: u32,
}

impl Default for AgeRange {
    fn default() -> Self {
        Self { min: 10, max: 80 }
    }
}

impl AgeRange {
    pub fn contains(&self, age: u32) -> bool {
        (self.min..=self.max).contains(&age)
    }
}

/// Per-class positive counts, overall and broken down by source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub vocab: PathologyVocab,
    /// Source tags in sorted order; columns of `per_source`.
    pub sources: Vec<String>,
    pub freq: Vec<u64>,
    /// `per_source[class][source]`.
    pub per_source: Vec<Vec<u64>>,
}

impl FrequencyTable {
    /// Builds a table from per-source counts; `freq` is their row sum.
    pub fn from_per_source(
        vocab: PathologyVocab,
        sources: Vec<String>,
        per_source: Vec<Vec<u64>>,
    ) -> Result<Self> {
        if per_source.len() != vocab.len() {
            return Err(Error::Shape(alloc::format!(
                "{} count rows for {} classes",
                per_source.len(),
                vocab.len()
            )));
        }
        if let Some(row) = per_source.iter().find(|r| r.len() != sources.len()) {
            return Err(Error::Shape(alloc::format!(
                "count row of width {} for {} sources",
                row.len(),
                sources.len()
            )));
        }
        let freq = per_source.iter().map(|r| r.iter().sum()).collect();
        Ok(Self {
            vocab,
            sources,
            freq,
            per_source,
        })
    }

    /// Total positive label instances over all classes.
    pub fn total_instances(&self) -> u64 {
        self.freq.iter().sum()
    }

    /// Whether class `c` has a nonzero count in every source.
    pub fn in_all_sources(&self, c: usize) -> bool {
        !self.sources.is_empty() && self.per_source[c].iter().all(|&n| n > 0)
    }
}

/// An immutable, validated collection of examples over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr")]
pub struct MetaDataset {
    vocab: PathologyVocab,
    examples: Vec<ExampleRecord>,
    feature_dim: Option<usize>,
    #[serde(skip)]
    table: Option<FrequencyTable>,
}

impl MetaDataset {
    /// Validates label widths, id uniqueness and feature dimensions.
    ///
    /// `feature_dim` is inferred from the first example carrying features
    /// when `None` is passed.
    pub fn new(
        vocab: PathologyVocab,
        examples: Vec<ExampleRecord>,
        feature_dim: Option<usize>,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        let feature_dim = feature_dim.or_else(|| {
            examples
                .iter()
                .find_map(|e| e.embedding.as_ref().map(Vec::len))
        });
        for e in &examples {
            if e.labels.width() != vocab.len() {
                return Err(Error::LabelWidth {
                    expected: vocab.len(),
                    got: e.labels.width(),
                });
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::DuplicateId(e.id.clone()));
            }
            if let (Some(v), Some(d)) = (&e.embedding, feature_dim) {
                if v.len() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        got: v.len(),
                    });
                }
            }
        }
        let mut ds = Self {
            vocab,
            examples,
            feature_dim,
            table: None,
        };
        ds.table = Some(ds.build_table());
        Ok(ds)
    }

    /// Like [`MetaDataset::new`], after dropping records outside `ages`.
    pub fn with_age_filter(
        vocab: PathologyVocab,
        examples: Vec<ExampleRecord>,
        feature_dim: Option<usize>,
        ages: AgeRange,
    ) -> Result<Self> {
        let kept = examples
            .into_iter()
            .filter(|e| ages.contains(e.age))
            .collect();
        Self::new(vocab, kept, feature_dim)
    }

    fn build_table(&self) -> FrequencyTable {
        let sources: Vec<String> = self
            .examples
            .iter()
            .map(|e| e.source.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let col: BTreeMap<&str, usize> = sources
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let mut per_source = vec![vec![0u64; sources.len()]; self.vocab.len()];
        for e in &self.examples {
            let s = col[e.source.as_str()];
            for c in e.labels.iter() {
                per_source[c][s] += 1;
            }
        }
        FrequencyTable::from_per_source(self.vocab.clone(), sources, per_source)
            .expect("shapes are consistent by construction")
    }

    pub fn vocab(&self) -> &PathologyVocab {
        &self.vocab
    }

    pub fn examples(&self) -> &[ExampleRecord] {
        &self.examples
    }

    pub fn example(&self, index: usize) -> &ExampleRecord {
        &self.examples[index]
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.feature_dim
    }

    pub fn frequency_table(&self) -> &FrequencyTable {
        self.table.as_ref().expect("table built in constructor")
    }

    /// Per-class positive counts over the whole dataset.
    pub fn freq(&self) -> &[u64] {
        &self.frequency_table().freq
    }

    /// Input features of example `index`, or an error naming it.
    pub fn features(&self, index: usize) -> Result<&[f64]> {
        let e = &self.examples[index];
        e.embedding
            .as_deref()
            .ok_or_else(|| Error::MissingFeatures(e.id.clone()))
    }
}

#[derive(Deserialize)]
struct DatasetRepr {
    vocab: PathologyVocab,
    examples: Vec<ExampleRecord>,
    feature_dim: Option<usize>,
}

impl TryFrom<DatasetRepr> for MetaDataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        Self::new(r.vocab, r.examples, r.feature_dim)
    }
}

/// Which examples form the denominator of label cardinality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CardinalityBasis {
    /// Only examples with at least one label.
    #[default]
    Labeled,
    /// Every example, including not-finding ones.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_examples: u64,
    /// Examples carrying at least one label.
    pub n_multilabeled: u64,
    /// Examples with an all-zero label vector.
    pub n_normal: u64,
    pub n_instances: u64,
    pub label_cardinality: f64,
    pub label_density: f64,
    pub basis: CardinalityBasis,
    /// Symmetric pair counts; the diagonal holds per-class frequencies.
    pub cooccurrence: Vec<Vec<u64>>,
}

pub fn compute_stats(ds: &MetaDataset, basis: CardinalityBasis) -> Result<DatasetStats> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = ds.vocab.len();
    let mut co = vec![vec![0u64; k]; k];
    let (mut labeled, mut instances) = (0u64, 0u64);
    for e in &ds.examples {
        let present: Vec<usize> = e.labels.iter().collect();
        if !present.is_empty() {
            labeled += 1;
        }
        instances += present.len() as u64;
        for &i in &present {
            for &j in &present {
                co[i][j] += 1;
            }
        }
    }
    let n = ds.len() as u64;
    let denom = match basis {
        CardinalityBasis::Labeled => labeled,
        CardinalityBasis::All => n,
    };
    let cardinality = if denom == 0 {
        0.0
    } else {
        instances as f64 / denom as f64
    };
    Ok(DatasetStats {
        n_examples: n,
        n_multilabeled: labeled,
        n_normal: n - labeled,
        n_instances: instances,
        label_cardinality: cardinality,
        label_density: if k == 0 { 0.0 } else { cardinality / k as f64 },
        basis,
        cooccurrence: co,
    })
}

pub fn class_frequency(ds: &MetaDataset, class: &str) -> Result<u64> {
    let c = ds.vocab.index_of(class)?;
    Ok(ds.freq()[c])
}
