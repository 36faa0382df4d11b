//! Text file formats: vocabulary, metadata CSV, embedding CSV, count tables.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use gfsl_core::dataset::{AgeRange, ExampleRecord, FrequencyTable, MetaDataset, PathologyVocab};

use crate::error::{CliError, Result};

const METADATA_HEADER: [&str; 4] = ["id", "source", "age", "labels"];

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> CliError {
    CliError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    parse_err(path, line, e.to_string())
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(file))
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// One class name per line; blank lines are ignored.
pub fn read_vocab(path: &Path) -> Result<PathologyVocab> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let names: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect();
    Ok(PathologyVocab::new(names)?)
}

pub fn write_vocab(path: &Path, vocab: &PathologyVocab) -> Result<()> {
    let mut text = vocab.names().join("\n");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Reads `id,source,age,labels` rows; `labels` is `|`-separated, empty for
/// not finding. Records carry no features yet.
pub fn read_metadata(path: &Path, vocab: &PathologyVocab) -> Result<Vec<ExampleRecord>> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if header.iter().map(str::trim).ne(METADATA_HEADER) {
        return Err(parse_err(
            path,
            1,
            format!("expected header `{}`", METADATA_HEADER.join(",")),
        ));
    }
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(parse_err(path, line, "empty id"));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(parse_err(
                path,
                line,
                format!("duplicate id `{id}` (first on line {first})"),
            ));
        }
        let age = row[2]
            .trim()
            .parse::<u32>()
            .map_err(|e| parse_err(path, line, format!("age `{}`: {e}", &row[2])))?;
        let names: Vec<&str> = row[3]
            .split('|')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        let labels = vocab
            .labels_from_names(names)
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(ExampleRecord {
            id,
            source: row[1].trim().to_string(),
            age,
            labels,
            embedding: None,
        });
    }
    Ok(out)
}

pub fn write_metadata(path: &Path, ds: &MetaDataset) -> Result<()> {
    let mut w = writer(path)?;
    let io = |e: csv::Error| csv_err(path, e);
    w.write_record(METADATA_HEADER).map_err(io)?;
    for e in ds.examples() {
        let labels = ds
            .vocab()
            .label_names(&e.labels)
            .collect::<Vec<_>>()
            .join("|");
        w.write_record([e.id.as_str(), &e.source, &e.age.to_string(), &labels])
            .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads `id,v0,...,v{D-1}`; returns the dimension and vectors by id.
pub fn read_embeddings(path: &Path) -> Result<(usize, BTreeMap<String, Vec<f64>>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let dim = header.len().saturating_sub(1);
    if header.get(0).map(str::trim) != Some("id") || dim == 0 {
        return Err(parse_err(path, 1, "expected header `id,v0,...`"));
    }
    let mut out = BTreeMap::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        let v = row
            .iter()
            .skip(1)
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| parse_err(path, line, e.to_string()))?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(parse_err(path, line, "non-finite value"));
        }
        let id = row[0].trim().to_string();
        if out.insert(id.clone(), v).is_some() {
            return Err(parse_err(path, line, format!("duplicate id `{id}`")));
        }
    }
    Ok((dim, out))
}

pub fn write_embeddings(path: &Path, ds: &MetaDataset) -> Result<()> {
    let dim = ds
        .feature_dim()
        .ok_or(gfsl_core::Error::MissingFeatures(String::new()))?;
    let mut w = writer(path)?;
    let io = |e: csv::Error| csv_err(path, e);
    let mut header = vec!["id".to_string()];
    header.extend((0..dim).map(|j| format!("v{j}")));
    w.write_record(&header).map_err(io)?;
    for e in ds.examples() {
        let v = e
            .embedding
            .as_ref()
            .ok_or_else(|| gfsl_core::Error::MissingFeatures(e.id.clone()))?;
        let mut row = vec![e.id.clone()];
        row.extend(v.iter().map(f64::to_string));
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Attaches vectors to records; ids must match one-to-one.
pub fn join_embeddings(
    records: &mut [ExampleRecord],
    mut vectors: BTreeMap<String, Vec<f64>>,
    path: &Path,
) -> Result<()> {
    for r in records.iter_mut() {
        let v = vectors
            .remove(&r.id)
            .ok_or_else(|| parse_err(path, 0, format!("no embedding for id `{}`", r.id)))?;
        r.embedding = Some(v);
    }
    if let Some(extra) = vectors.keys().next() {
        return Err(parse_err(
            path,
            0,
            format!("embedding for unknown id `{extra}`"),
        ));
    }
    Ok(())
}

/// Metadata plus optional embeddings, filtered by age when a range is given.
pub fn load_dataset(
    vocab_path: &Path,
    metadata_path: &Path,
    embeddings_path: Option<&Path>,
    ages: Option<AgeRange>,
) -> Result<MetaDataset> {
    let vocab = read_vocab(vocab_path)?;
    let mut records = read_metadata(metadata_path, &vocab)?;
    let mut dim = None;
    if let Some(p) = embeddings_path {
        let (d, vectors) = read_embeddings(p)?;
        join_embeddings(&mut records, vectors, p)?;
        dim = Some(d);
    }
    Ok(match ages {
        Some(r) => MetaDataset::with_age_filter(vocab, records, dim, r)?,
        None => MetaDataset::new(vocab, records, dim)?,
    })
}

/// Reads `class,<source>,...` rows of per-source positive counts.
pub fn read_counts_table(path: &Path) -> Result<FrequencyTable> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let sources: Vec<String> = header
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let mut names = Vec::new();
    let mut counts = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let line = row.position().map_or(0, |p| p.line());
        names.push(row[0].trim().to_string());
        counts.push(
            row.iter()
                .skip(1)
                .map(|s| s.trim().parse::<u64>())
                .collect::<std::result::Result<Vec<u64>, _>>()
                .map_err(|e| parse_err(path, line, e.to_string()))?,
        );
    }
    Ok(FrequencyTable::from_per_source(
        PathologyVocab::new(names)?,
        sources,
        counts,
    )?)
}
