//! Pipeline stages. Each reads the previous stage's artifact from the work
//! directory, writes its own, and records a run manifest.

use std::path::{Path, PathBuf};

use gfsl_core::dataset::{compute_stats, DatasetStats};
use gfsl_core::metrics::aggregate;
use gfsl_core::partition::{
    build_class_partition, build_example_pools, ClassPartition, ExamplePools,
};
use gfsl_core::rng::{derive_seed, purpose, stream_rng};
use gfsl_core::train::{evaluate_episode, pretrain};
use gfsl_core::{synth, EncoderParams, EpisodeSampler, EpisodeSpec, MetaDataset, Method, Model};

use crate::artifacts::{
    episode_csv, read_json, write_json, write_text, Cell, CellMetrics, Checkpoint, EpisodeFile,
    EvalReport, PartitionManifest, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io;
use crate::manifest::{sha256_file, RunManifest};
use crate::parallel;

fn finish(
    cfg: &RunConfig,
    mut m: RunManifest,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<RunManifest> {
    for p in inputs {
        m.input(cfg, p)?;
    }
    for p in outputs {
        m.output(cfg, p)?;
    }
    write_json(&cfg.paths.manifest(&m.command), &m)?;
    Ok(m)
}

/// Writes vocabulary, metadata and feature files of a synthetic corpus.
pub fn synth(cfg: &RunConfig) -> Result<RunManifest> {
    let data = synth::generate(&cfg.synth, cfg.seed()?)?;
    let (v, m, e) = (
        cfg.paths.vocab(),
        cfg.paths.metadata(),
        cfg.paths.embeddings(),
    );
    for p in [&v, &m, &e] {
        crate::artifacts::create_parent(p)?;
    }
    io::write_vocab(&v, data.dataset.vocab())?;
    io::write_metadata(&m, &data.dataset)?;
    io::write_embeddings(&e, &data.dataset)?;
    finish(cfg, RunManifest::new("synth", cfg), &[], &[&v, &m, &e])
}

fn require(path: PathBuf, stage: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact { path, stage })
    }
}

/// Validates the text inputs and freezes them as `dataset.json`.
pub fn ingest(cfg: &RunConfig) -> Result<MetaDataset> {
    let vocab = require(cfg.paths.vocab(), "synth")?;
    let metadata = require(cfg.paths.metadata(), "synth")?;
    let embeddings = match &cfg.paths.embeddings {
        Some(p) => Some(require(p.clone(), "synth")?),
        None => Some(cfg.paths.embeddings()).filter(|p| p.exists()),
    };
    let ds = io::load_dataset(&vocab, &metadata, embeddings.as_deref(), cfg.ages)?;
    let out = cfg.paths.dataset();
    write_json(&out, &ds)?;
    let mut inputs = vec![vocab.as_path(), metadata.as_path()];
    inputs.extend(embeddings.as_deref());
    finish(cfg, RunManifest::new("ingest", cfg), &inputs, &[&out])?;
    Ok(ds)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<MetaDataset> {
    read_json(&cfg.paths.dataset(), "ingest")
}

pub fn stats(cfg: &RunConfig) -> Result<DatasetStats> {
    let ds = load_dataset(cfg)?;
    let stats = compute_stats(&ds, cfg.cardinality_basis)?;
    let out = cfg.paths.stats();
    write_json(&out, &stats)?;
    finish(
        cfg,
        RunManifest::new("stats", cfg),
        &[&cfg.paths.dataset()],
        &[&out],
    )?;
    Ok(stats)
}

pub fn partition(cfg: &RunConfig) -> Result<PartitionManifest> {
    let ds = load_dataset(cfg)?;
    let cp = build_class_partition(ds.frequency_table(), cfg.n_tst_classes, cfg.n_val_classes)?;
    let pools = build_example_pools(&ds, &cp, cfg.fractions, cfg.seed()?)?;
    let manifest = PartitionManifest::new(&ds, &cp, &pools);
    let out = cfg.paths.partition();
    write_json(&out, &manifest)?;
    finish(
        cfg,
        RunManifest::new("partition", cfg),
        &[&cfg.paths.dataset()],
        &[&out],
    )?;
    Ok(manifest)
}

pub fn load_partition(cfg: &RunConfig, ds: &MetaDataset) -> Result<(ClassPartition, ExamplePools)> {
    read_json::<PartitionManifest>(&cfg.paths.partition(), "partition")?.resolve(ds)
}

/// Master seed of the dumped episode stream.
pub fn dump_seed(seed: u64) -> u64 {
    derive_seed(seed, purpose::DUMP)
}

pub fn episodes(cfg: &RunConfig) -> Result<Vec<EpisodeFile>> {
    let ds = load_dataset(cfg)?;
    let (cp, pools) = load_partition(cfg, &ds)?;
    let sampler = EpisodeSampler::new(&ds, &cp, &pools);
    let spec = cfg.episodes.spec;
    let master = dump_seed(cfg.seed()?);
    let files = (0..cfg.episodes.count)
        .map(|i| {
            Ok(EpisodeFile::new(
                &ds,
                &sampler.generate_indexed(&spec, master, i)?,
                &spec,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let out = cfg.paths.episodes(spec.phase);
    write_json(&out, &files)?;
    finish(
        cfg,
        RunManifest::new("episodes", cfg),
        &[&cfg.paths.dataset(), &cfg.paths.partition()],
        &[&out],
    )?;
    Ok(files)
}

/// Initial model: encoder drawn from the seed, zero pretraining head.
pub fn init_model(
    cfg: &RunConfig,
    method: Method,
    ds: &MetaDataset,
    cp: &ClassPartition,
) -> Result<Model> {
    let input = ds.feature_dim().ok_or_else(|| {
        gfsl_core::Error::MissingFeatures(
            "dataset has no feature vectors; ingest embeddings".into(),
        )
    })?;
    let mut rng = stream_rng(derive_seed(cfg.seed()?, purpose::INIT), 0);
    let enc = EncoderParams::random(&cfg.encoder.dims(input), cfg.encoder.activation, &mut rng)?;
    Ok(Model::new(method, enc, cp.meta_trn.len()))
}

pub fn train(cfg: &RunConfig, method: Method) -> Result<Checkpoint> {
    let seed = cfg.seed()?;
    let ds = load_dataset(cfg)?;
    let (cp, pools) = load_partition(cfg, &ds)?;
    let sampler = EpisodeSampler::new(&ds, &cp, &pools);
    let init = init_model(cfg, method, &ds, &cp)?;
    let out = pretrain(
        init,
        &sampler,
        &cfg.train,
        derive_seed(seed, purpose::TRAIN),
        |m| parallel::validate_model(m, &sampler, &cfg.train, derive_seed(seed, purpose::TRAIN)),
    )?;
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        method,
        shapes: Checkpoint::shapes_of(&out.model),
        config_hash: cfg.hash(),
        seed,
        train: cfg.train.clone(),
        head_classes: cp
            .meta_trn
            .iter()
            .map(|&c| ds.vocab().name(c).to_string())
            .collect(),
        encoder: out.model.encoder,
        head: out.model.head,
        encoder_optimizer: out.encoder_optimizer,
        head_optimizer: out.head_optimizer,
        history: out.history,
        best_epoch: out.best_epoch,
        stopped_early: out.stopped_early,
    };
    let path = cfg.paths.checkpoint(method.as_str());
    write_json(&path, &ckpt)?;
    finish(
        cfg,
        RunManifest::new(&format!("train-{}", method.as_str()), cfg),
        &[&cfg.paths.dataset(), &cfg.paths.partition()],
        &[&path],
    )?;
    Ok(ckpt)
}

/// Master seed of one grid cell; independent of which other cells run.
pub fn cell_seed(seed: u64, spec: &EpisodeSpec) -> u64 {
    let key = ((spec.n_seen as u64) << 48)
        ^ ((spec.n_unseen as u64) << 32)
        ^ ((spec.k_trn as u64) << 16)
        ^ spec.k_tst as u64;
    derive_seed(derive_seed(seed, purpose::EVAL), key)
}

pub fn report_path(cfg: &RunConfig, method: Method, ext: &str) -> PathBuf {
    cfg.paths
        .reports()
        .join(format!("eval-{}.{ext}", method.as_str()))
}

pub fn load_checkpoint(cfg: &RunConfig, method: Method) -> Result<(PathBuf, Checkpoint)> {
    let path = cfg.paths.checkpoint(method.as_str());
    let ckpt = Checkpoint::load(&path)?;
    if ckpt.method != method {
        return Err(CliError::Checkpoint(format!(
            "{} holds a {} model",
            path.display(),
            ckpt.method.as_str()
        )));
    }
    Ok((path, ckpt))
}

/// Meta-test protocol over the configured grid.
pub fn eval(cfg: &RunConfig, method: Method) -> Result<EvalReport> {
    let seed = cfg.seed()?;
    let ds = load_dataset(cfg)?;
    let (cp, pools) = load_partition(cfg, &ds)?;
    let (ckpt_path, ckpt) = load_checkpoint(cfg, method)?;
    let model = ckpt.model();
    let sampler = EpisodeSampler::new(&ds, &cp, &pools);
    let mut cells = Vec::new();
    let mut dump = Vec::new();
    for spec in cfg.eval.specs() {
        let scores = parallel::evaluate_stream(
            &model,
            &sampler,
            &spec,
            cell_seed(seed, &spec),
            cfg.eval.episodes,
            &cfg.train.adapt,
        )?;
        cells.push(Cell {
            n_way: spec.n_way(),
            n_unseen: spec.n_unseen,
            k_trn: spec.k_trn,
            k_tst: spec.k_tst,
            metrics: CellMetrics::from(aggregate(&scores)?),
        });
        dump.push((spec, scores));
    }
    let report = EvalReport {
        method,
        seed,
        episodes: cfg.eval.episodes,
        checkpoint_sha256: sha256_file(&ckpt_path)?,
        cells,
    };
    let json = report_path(cfg, method, "json");
    write_json(&json, &report)?;
    let mut outputs = vec![json.clone()];
    if cfg.eval.per_episode_csv {
        let csv = report_path(cfg, method, "csv");
        write_text(&csv, &episode_csv(&dump))?;
        outputs.push(csv);
    }
    let outs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    finish(
        cfg,
        RunManifest::new(&format!("eval-{}", method.as_str()), cfg),
        &[&cfg.paths.dataset(), &cfg.paths.partition(), &ckpt_path],
        &outs,
    )?;
    Ok(report)
}

/// Scores a stored episode file with a trained model.
pub fn eval_episode_file(cfg: &RunConfig, method: Method, path: &Path) -> Result<CellMetrics> {
    let ds = load_dataset(cfg)?;
    let (_, ckpt) = load_checkpoint(cfg, method)?;
    let files: Vec<EpisodeFile> = read_json(path, "episodes")?;
    let model = ckpt.model();
    let scores = files
        .iter()
        .map(|f| {
            Ok(evaluate_episode(
                &model,
                &ds,
                &f.to_episode(&ds)?,
                &cfg.train.adapt,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CellMetrics::from(aggregate(&scores)?))
}

/// Renders the stored evaluation report as a text table.
pub fn report(cfg: &RunConfig, method: Method) -> Result<String> {
    let json = report_path(cfg, method, "json");
    let r: EvalReport = read_json(&json, "eval")?;
    let text = r.to_text();
    let out = report_path(cfg, method, "txt");
    write_text(&out, &text)?;
    finish(
        cfg,
        RunManifest::new(&format!("report-{}", method.as_str()), cfg),
        &[&json],
        &[&out],
    )?;
    Ok(text)
}

/// Every stage in order, for one method.
pub fn run_all(cfg: &RunConfig, method: Method) -> Result<String> {
    synth(cfg)?;
    ingest(cfg)?;
    stats(cfg)?;
    partition(cfg)?;
    episodes(cfg)?;
    train(cfg, method)?;
    eval(cfg, method)?;
    report(cfg, method)
}
