use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gfsl::config::RunConfig;
use gfsl::{io, pipeline, Result};
use gfsl_core::dataset::CardinalityBasis;
use gfsl_core::partition::build_class_partition;
use gfsl_core::{Method, Phase};

#[derive(Parser)]
#[command(
    name = "gfsl",
    version,
    about = "Multi-label few-shot episode pipeline"
)]
struct Cli {
    /// Config file (`key = value` lines or a JSON object).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; required by stages that sample.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory holding every stage artifact.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Dotted-key override, e.g. `train.patience=5`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (vocabulary, metadata, features).
    Synth,
    /// Validate metadata and features into dataset.json.
    Ingest {
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        metadata: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Label statistics of the ingested dataset, or of a count table.
    Stats {
        #[arg(long, value_parser = parse_basis)]
        basis: Option<CardinalityBasis>,
        /// CSV of per-source class counts (`class,<source>,...`).
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Class meta-partition and example pools.
    Partition {
        /// Partition a count table instead (class sets only).
        #[arg(long)]
        counts: Option<PathBuf>,
    },
    /// Dump sampled episodes as JSON.
    Episodes {
        #[arg(long)]
        phase: Option<Phase>,
        #[arg(long)]
        count: Option<u64>,
        #[arg(long)]
        n_seen: Option<usize>,
        #[arg(long)]
        n_unseen: Option<usize>,
        #[arg(long)]
        k_trn: Option<usize>,
        #[arg(long)]
        k_tst: Option<usize>,
    },
    /// Pretrain with early stopping on meta-val HM.
    Train {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        max_epochs: Option<usize>,
    },
    /// Meta-test evaluation over the configured grid.
    Eval {
        #[arg(long)]
        method: Method,
        #[arg(long)]
        episodes: Option<u64>,
        /// Score a stored episode file instead of sampling.
        #[arg(long)]
        episode_file: Option<PathBuf>,
    },
    /// Render the evaluation report as a table.
    Report {
        #[arg(long)]
        method: Method,
    },
    /// Every stage in order.
    Run {
        #[arg(long)]
        method: Method,
    },
}

fn parse_basis(s: &str) -> std::result::Result<CardinalityBasis, String> {
    match s {
        "labeled" => Ok(CardinalityBasis::Labeled),
        "all" => Ok(CardinalityBasis::All),
        _ => Err(format!("expected `labeled` or `all`, got `{s}`")),
    }
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg = cfg.with_overrides(&cli.overrides)?;
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(d) = &cli.work_dir {
        cfg.paths.work_dir = d.clone();
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = resolve(&cli)?;
    match cli.command {
        Command::Synth => {
            let m = pipeline::synth(&cfg)?;
            print_json(&m.outputs);
        }
        Command::Ingest {
            vocab,
            metadata,
            embeddings,
        } => {
            cfg.paths.vocab = vocab.or(cfg.paths.vocab);
            cfg.paths.metadata = metadata.or(cfg.paths.metadata);
            cfg.paths.embeddings = embeddings.or(cfg.paths.embeddings);
            let ds = pipeline::ingest(&cfg)?;
            println!(
                "{} examples, {} classes, feature dim {:?}",
                ds.len(),
                ds.vocab().len(),
                ds.feature_dim()
            );
        }
        Command::Stats { basis, counts } => {
            if let Some(b) = basis {
                cfg.cardinality_basis = b;
            }
            match counts {
                Some(p) => {
                    let t = io::read_counts_table(&p)?;
                    print_json(&serde_json::json!({
                        "total_instances": t.total_instances(),
                        "frequencies": t.vocab.names().iter().zip(&t.freq).collect::<Vec<_>>(),
                    }));
                }
                None => print_json(&pipeline::stats(&cfg)?),
            }
        }
        Command::Partition { counts } => match counts {
            Some(p) => {
                let t = io::read_counts_table(&p)?;
                let cp = build_class_partition(&t, cfg.n_tst_classes, cfg.n_val_classes)?;
                let names = |v: &[usize]| {
                    v.iter()
                        .map(|&c| t.vocab.name(c).to_string())
                        .collect::<Vec<_>>()
                };
                print_json(&serde_json::json!({
                    "meta_trn": names(&cp.meta_trn),
                    "meta_val": names(&cp.meta_val),
                    "meta_tst": names(&cp.meta_tst),
                }));
            }
            None => {
                let m = pipeline::partition(&cfg)?;
                print_json(&m.classes);
                for w in &m.warnings {
                    eprintln!(
                        "warning: {} pool lacks {}",
                        w.phase,
                        w.class.as_deref().unwrap_or("a not-finding example")
                    );
                }
            }
        },
        Command::Episodes {
            phase,
            count,
            n_seen,
            n_unseen,
            k_trn,
            k_tst,
        } => {
            let s = &mut cfg.episodes.spec;
            s.phase = phase.unwrap_or(s.phase);
            s.n_seen = n_seen.unwrap_or(s.n_seen);
            s.n_unseen = n_unseen.unwrap_or(s.n_unseen);
            s.k_trn = k_trn.unwrap_or(s.k_trn);
            s.k_tst = k_tst.unwrap_or(s.k_tst);
            cfg.episodes.count = count.unwrap_or(cfg.episodes.count);
            let files = pipeline::episodes(&cfg)?;
            println!(
                "{} episodes -> {}",
                files.len(),
                cfg.paths.episodes(cfg.episodes.spec.phase).display()
            );
        }
        Command::Train { method, max_epochs } => {
            cfg.train.max_epochs = max_epochs.unwrap_or(cfg.train.max_epochs);
            let c = pipeline::train(&cfg, method)?;
            for r in &c.history {
                println!(
                    "epoch {:>3}  loss {:.6}  val HM {:.4}",
                    r.epoch, r.loss, r.val_hm
                );
            }
            println!(
                "best epoch {:?}, stopped early: {}",
                c.best_epoch, c.stopped_early
            );
        }
        Command::Eval {
            method,
            episodes,
            episode_file,
        } => {
            cfg.eval.episodes = episodes.unwrap_or(cfg.eval.episodes);
            match episode_file {
                Some(p) => print_json(&pipeline::eval_episode_file(&cfg, method, &p)?),
                None => print!("{}", pipeline::eval(&cfg, method)?.to_text()),
            }
        }
        Command::Report { method } => print!("{}", pipeline::report(&cfg, method)?),
        Command::Run { method } => print!("{}", pipeline::run_all(&cfg, method)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
