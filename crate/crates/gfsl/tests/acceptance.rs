//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed.

#[path = "../../core/tests/common/mod.rs"]
#[allow(dead_code)]
mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gfsl::{io, pipeline, RunConfig};
use gfsl_core::dataset::{
    compute_stats, CardinalityBasis, ExampleRecord, MetaDataset, PathologyVocab,
};
use gfsl_core::episode::{
    generate_episode, validate_episode, validate_membership, Episode, EpisodeClass,
};
use gfsl_core::head::{adapt_head, AdaptConfig, HeadParams};
use gfsl_core::labels::LabelSet;
use gfsl_core::loss::{bce_loss, bce_with_logits};
use gfsl_core::math::{dot, sigmoid};
use gfsl_core::metrics::{aggregate, auc_roc, harmonic_mean, EpisodeScores};
use gfsl_core::partition::{
    build_class_partition, build_example_pools, ClassPartition, ExamplePools, PoolFractions,
};
use gfsl_core::protonet::{episode_loss, episode_loss_grad};
use gfsl_core::rng::stream_rng;
use gfsl_core::synth::{generate, SynthConfig};
use gfsl_core::train::{batch_train_epoch, pretrain, validate_model, Model};
use gfsl_core::{
    Activation, EncoderParams, EpisodeSampler, EpisodeSpec, Error, Method, OptimizerState, Phase,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(n: u32, name: &str, budget: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panic".into()))
    });
    let el = t.elapsed();
    let r = match (r, budget) {
        (Ok(d), Some(b)) if el > b => Err(format!("{d}; took {el:.2?}, budget {b:.0?}")),
        (r, _) => r,
    };
    let (tag, detail) = match &r {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("criterion {n:>2} {tag} {name}: {detail} [{el:.2?}]");
    r.is_ok()
}

// ---------------------------------------------------------------- 1

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn partition_fixture() -> Check {
    let table =
        io::read_counts_table(&fixture("reference_counts.csv")).map_err(|e| e.to_string())?;
    let cp = build_class_partition(&table, 5, 3).map_err(|e| e.to_string())?;
    let names = |v: &[usize]| {
        v.iter()
            .map(|&c| table.vocab.name(c).to_string())
            .collect::<BTreeSet<_>>()
    };
    let set = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    ensure(
        names(&cp.meta_tst)
            == set(&[
                "Cardiomegaly",
                "Edema",
                "Pneumothorax",
                "Consolidation",
                "Pneumonia",
            ]),
        || format!("meta-tst {:?}", names(&cp.meta_tst)),
    )?;
    ensure(
        names(&cp.meta_val) == set(&["Emphysema", "Fibrosis", "Hernia"]),
        || format!("meta-val {:?}", names(&cp.meta_val)),
    )?;
    ensure(cp.meta_trn.len() == 7, || "meta-trn size".into())?;
    Ok("meta-tst and meta-val match exactly; 7 meta-trn classes".into())
}

// ---------------------------------------------------------------- 2

fn record(id: usize, width: usize, labels: &[usize]) -> ExampleRecord {
    ExampleRecord {
        id: format!("r{id}"),
        source: "s".into(),
        age: 50,
        labels: LabelSet::from_indices(width, labels.iter().copied()),
        embedding: None,
    }
}

/// Corpus with the reference totals: class positives laid out round-robin
/// over the labeled images, plus label-free images.
fn corpus_with_totals(freq: &[u64], n_labeled: usize, n_images: usize) -> MetaDataset {
    let k = freq.len();
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); n_labeled];
    let mut cursor = 0usize;
    for (c, &f) in freq.iter().enumerate() {
        for _ in 0..f {
            sets[cursor % n_labeled].push(c);
            cursor += 1;
        }
    }
    let recs = (0..n_images)
        .map(|i| record(i, k, sets.get(i).map_or(&[][..], Vec::as_slice)))
        .collect();
    MetaDataset::new(
        PathologyVocab::new((0..k).map(|c| format!("c{c}"))).unwrap(),
        recs,
        None,
    )
    .unwrap()
}

fn stats_fixture() -> Check {
    let table =
        io::read_counts_table(&fixture("reference_counts.csv")).map_err(|e| e.to_string())?;
    ensure(table.total_instances() == 596_494, || {
        format!("total {}", table.total_instances())
    })?;

    // hand fixture: {0}, {0,1}, {}, {0,1,2} over 5 classes
    let sets: [&[usize]; 4] = [&[0], &[0, 1], &[], &[0, 1, 2]];
    let ds = MetaDataset::new(
        PathologyVocab::new(["a", "b", "c", "d", "e"]).unwrap(),
        sets.iter()
            .enumerate()
            .map(|(i, s)| record(i, 5, s))
            .collect(),
        None,
    )
    .unwrap();
    let l = compute_stats(&ds, CardinalityBasis::Labeled).unwrap();
    let a = compute_stats(&ds, CardinalityBasis::All).unwrap();
    ensure(l.label_cardinality == 2.0 && l.label_density == 0.4, || {
        format!("labeled basis {} {}", l.label_cardinality, l.label_density)
    })?;
    ensure(a.label_cardinality == 1.5 && a.label_density == 0.3, || {
        format!("all basis {} {}", a.label_cardinality, a.label_density)
    })?;
    ensure(
        l.cooccurrence[0][1] == 2 && l.cooccurrence[1][2] == 1 && l.n_normal == 1,
        || "co-occurrence".into(),
    )?;

    // no real metadata is bundled; a corpus rebuilt from the published totals stands in
    let corpus = corpus_with_totals(&table.freq, 322_475, 479_215);
    let s = compute_stats(&corpus, CardinalityBasis::Labeled).unwrap();
    ensure(
        s.n_instances == 596_494 && s.n_multilabeled == 322_475,
        || "rebuilt corpus totals".into(),
    )?;
    ensure((s.label_cardinality - 1.84).abs() <= 0.01, || {
        format!("cardinality {}", s.label_cardinality)
    })?;
    ensure((s.label_density - 0.12).abs() <= 0.005, || {
        format!("density {}", s.label_density)
    })?;
    Ok(format!(
        "596,494 instances; hand oracles exact; corpus-level cardinality {:.4}, density {:.4}",
        s.label_cardinality, s.label_density
    ))
}

// ---------------------------------------------------------------- 3

fn episode_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut feasible, mut violations) = (0, 0);
    for trial in 0..1000u64 {
        let (ds, cp, pools) = common::fuzz_setup(trial);
        let spec = common::random_spec(&mut rng);
        match generate_episode(&ds, &cp, &pools, &spec, trial ^ 0x5eed) {
            Ok(ep) => {
                feasible += 1;
                if !validate_episode(&ds, &ep, &spec).is_empty()
                    || !validate_membership(&ep, &cp, &pools).is_empty()
                {
                    violations += 1;
                }
            }
            Err(Error::InEpisode { source, .. })
                if matches!(*source, Error::EpisodeInfeasible { .. }) => {}
            Err(e) => return Err(format!("trial {trial}: {e}")),
        }
    }
    ensure(violations == 0, || {
        format!("{violations} episodes violate invariants")
    })?;
    ensure(feasible >= 500, || {
        format!("only {feasible} feasible triples")
    })?;

    let (ds, cp, pools) = common::micro();
    let spec = EpisodeSpec::new(1, 1, 1, 1, Phase::MetaVal);
    let valid = common::enumerate_valid(&ds, &cp, &pools.d_meta_val, &spec);
    let sampler = EpisodeSampler::new(&ds, &cp, &pools);
    for seed in 0..100u64 {
        let ep = sampler
            .generate_indexed(&spec, seed, 0)
            .map_err(|e| e.to_string())?;
        ensure(valid.contains(&common::outcome(&ep)), || {
            format!("micro seed {seed} outside the enumerated set")
        })?;
    }
    Ok(format!("1000 fuzzed triples ({feasible} feasible), 0 violations; 100/100 micro-pool outputs in the {}-element valid set", valid.len()))
}

// ---------------------------------------------------------------- 4

fn pair_auc(s: &[f64], y: &[u8]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                den += 1.0;
                num += if s[i] > s[j] {
                    1.0
                } else if s[i] == s[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / den
}

fn auc_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=50);
        let mut y: Vec<u8> = (0..n).map(|_| rng.random_range(0..2)).collect();
        y[rng.random_range(0..n)] = 1;
        let zero = (0..n).find(|&i| y[i] == 0).unwrap_or(0);
        if y.iter().all(|&v| v == 1) {
            y[zero] = 0;
        }
        let levels = rng.random_range(2..10);
        let s: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let a = auc_roc(&s, &y).map_err(|e| e.to_string())?;
        worst = worst.max((a - pair_auc(&s, &y)).abs());
    }
    ensure(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("10,000 tied instances, max deviation {worst:e}"))
}

// ---------------------------------------------------------------- 5

fn numeric(params: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let o = p[i];
            p[i] = o + h;
            let up = f(&p);
            p[i] = o - h;
            let down = f(&p);
            p[i] = o;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let d: Vec<f64> = a.iter().zip(n).map(|(x, y)| x - y).collect();
    let s = norm(a) + norm(n);
    if s == 0.0 {
        0.0
    } else {
        norm(&d) / s
    }
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize, r: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-r..r)).collect()
}

fn tiny_episode(rng: &mut ChaCha8Rng) -> (MetaDataset, Episode) {
    let sets: [&[usize]; 10] = [
        &[0],
        &[0],
        &[0, 1],
        &[1],
        &[1],
        &[],
        &[0],
        &[1],
        &[0, 1],
        &[],
    ];
    let recs = sets
        .iter()
        .enumerate()
        .map(|(i, s)| ExampleRecord {
            embedding: Some(rand_vec(rng, 3, 1.5)),
            ..record(i, 2, s)
        })
        .collect();
    let ds = MetaDataset::new(PathologyVocab::new(["a", "b"]).unwrap(), recs, Some(3)).unwrap();
    let view =
        |r: std::ops::Range<usize>| r.map(|i| ds.example(i).labels.restrict(&[0, 1])).collect();
    let ep = Episode {
        phase: Phase::MetaTrain,
        seed: 0,
        index: 0,
        classes: vec![
            EpisodeClass {
                class: 0,
                seen: true,
            },
            EpisodeClass {
                class: 1,
                seen: true,
            },
        ],
        trn: (0..6).collect(),
        tst: (6..10).collect(),
        trn_labels: view(0..6),
        tst_labels: view(6..10),
    };
    (ds, ep)
}

fn gradient_checks() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = [0.0f64; 4];
    for draw in 0..100u64 {
        // encoder
        let enc =
            EncoderParams::random(&[4, 6, 3], Activation::Tanh, &mut stream_rng(draw, 0)).unwrap();
        let x = rand_vec(&mut rng, 4, 2.0);
        let w = rand_vec(&mut rng, 3, 1.0);
        let mut g = vec![0.0; enc.params().len()];
        enc.backward(&enc.forward_trace(&x).unwrap(), &w, &mut g);
        let num = numeric(enc.params(), |p| {
            dot(
                &w,
                &EncoderParams::from_parts(enc.dims().to_vec(), enc.activation(), p.to_vec())
                    .unwrap()
                    .encode(&x)
                    .unwrap(),
            )
        });
        worst[0] = worst[0].max(rel(&g, &num));
        // head
        let head = HeadParams::from_parts(3, 4, rand_vec(&mut rng, 15, 1.0)).unwrap();
        let e = rand_vec(&mut rng, 4, 2.0);
        let y: Vec<u8> = (0..3).map(|_| rng.random_range(0..2)).collect();
        let (_, gl) = bce_with_logits(&head.logits(&e).unwrap(), &y).unwrap();
        let mut gh = vec![0.0; 15];
        head.backward(&e, &gl, &mut gh);
        let num = numeric(head.params(), |p| {
            bce_with_logits(
                &HeadParams::from_parts(3, 4, p.to_vec())
                    .unwrap()
                    .logits(&e)
                    .unwrap(),
                &y,
            )
            .unwrap()
            .0
        });
        worst[1] = worst[1].max(rel(&gh, &num));
        // BCE
        let s = rand_vec(&mut rng, 8, 4.0);
        let yb: Vec<u8> = (0..8).map(|_| rng.random_range(0..2)).collect();
        let (_, gb) = bce_loss(&s.iter().map(|&v| sigmoid(v)).collect::<Vec<_>>(), &yb).unwrap();
        let num = numeric(&s, |v| {
            bce_loss(&v.iter().map(|&z| sigmoid(z)).collect::<Vec<_>>(), &yb)
                .unwrap()
                .0
        });
        worst[2] = worst[2].max(rel(&gb, &num));
        // full prototype episode loss
        let (ds, ep) = tiny_episode(&mut rng);
        let enc =
            EncoderParams::random(&[3, 5, 4], Activation::Tanh, &mut stream_rng(draw, 1)).unwrap();
        let (_, g) = episode_loss_grad(&enc, &ds, &ep).unwrap();
        let num = numeric(enc.params(), |p| {
            episode_loss(
                &EncoderParams::from_parts(enc.dims().to_vec(), enc.activation(), p.to_vec())
                    .unwrap(),
                &ds,
                &ep,
            )
            .unwrap()
        });
        worst[3] = worst[3].max(rel(&g, &num));
    }
    ensure(worst.iter().all(|&w| w < 1e-4), || {
        format!("relative errors {worst:?}")
    })?;
    Ok(format!(
        "100 draws; max relative error encoder {:.1e}, head {:.1e}, BCE {:.1e}, episode {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    ))
}

// ---------------------------------------------------------------- 6, 7

struct World {
    ds: MetaDataset,
    cp: ClassPartition,
    pools: ExamplePools,
}

impl World {
    fn new(cfg: &SynthConfig, seed: u64) -> Self {
        let ds = generate(cfg, seed).unwrap().dataset;
        let cp = build_class_partition(ds.frequency_table(), cfg.n_tst_classes, cfg.n_val_classes)
            .unwrap();
        let pools = build_example_pools(&ds, &cp, PoolFractions::default(), seed).unwrap();
        Self { ds, cp, pools }
    }

    fn sampler(&self) -> EpisodeSampler<'_> {
        EpisodeSampler::new(&self.ds, &self.cp, &self.pools)
    }

    fn encoder(&self, seed: u64) -> EncoderParams {
        let d = self.ds.feature_dim().unwrap();
        EncoderParams::random(
            &[d, 128, 128, 128],
            Activation::Tanh,
            &mut stream_rng(seed, 0),
        )
        .unwrap()
    }
}

fn mean_hm(
    model: &Model,
    s: &EpisodeSampler<'_>,
    spec: &EpisodeSpec,
    master: u64,
    n: u64,
) -> Result<gfsl_core::AggregateReport, String> {
    let scores =
        gfsl::parallel::evaluate_stream(model, s, spec, master, n, &AdaptConfig::default())
            .map_err(|e| e.to_string())?;
    aggregate(&scores).map_err(|e| e.to_string())
}

fn separable() -> SynthConfig {
    // separation 6 with unit noise
    SynthConfig {
        separation: 6.0,
        noise: 1.0,
        ..Default::default()
    }
}

fn protonet_sanity(world: &World) -> Check {
    let s = world.sampler();
    let val = EpisodeSpec::new(2, 1, 5, 5, Phase::MetaVal);
    let cfg = TrainConfig {
        max_epochs: 1,
        train_episodes: 200,
        val_episodes: 100,
        train_spec: EpisodeSpec::new(3, 0, 5, 5, Phase::MetaTrain),
        val_spec: val,
        ..Default::default()
    };
    let init = Model::new(
        Method::ProtonetMl,
        world.encoder(6),
        world.cp.meta_trn.len(),
    );
    let out = pretrain(init, &s, &cfg, 6, |m| validate_model(m, &s, &cfg, 6))
        .map_err(|e| e.to_string())?;
    let r = mean_hm(&out.model, &s, &val, 606, 500)?;
    ensure(r.hm.mean >= 0.95, || {
        format!("meta-val HM {:.4}", r.hm.mean)
    })?;
    Ok(format!(
        "200 episodes (loss {:.4}); meta-val HM {:.4} ± {:.4} over 500 episodes",
        out.history[0].loss, r.hm.mean, r.hm.ci95
    ))
}

/// Ten pool passes with the reference optimizer settings.
fn batch_pretrain(world: &World, seed: u64) -> Result<(Model, Vec<f64>), String> {
    let tc = TrainConfig::default();
    let mut model = Model::new(
        Method::BatchBased,
        world.encoder(seed),
        world.cp.meta_trn.len(),
    );
    let head = model.head.as_mut().unwrap();
    let mut eo = OptimizerState::adamw(tc.learning_rate, tc.adamw, model.encoder.params().len());
    let mut ho = OptimizerState::adamw(tc.learning_rate, tc.adamw, head.params().len());
    let mut losses = Vec::new();
    for e in 0..10 {
        losses.push(
            batch_train_epoch(
                &mut model.encoder,
                head,
                &world.ds,
                &world.pools.d_meta_trn,
                &world.cp.meta_trn,
                tc.batch_size,
                &mut eo,
                &mut ho,
                &mut stream_rng(seed, e),
            )
            .map_err(|e| e.to_string())?,
        );
    }
    Ok((model, losses))
}

fn batchbased_sanity(world: &World) -> Check {
    let s = world.sampler();
    let (model, losses) = batch_pretrain(world, 7)?;
    let bits: Vec<u64> = model.encoder.params().iter().map(|v| v.to_bits()).collect();
    let tst = EpisodeSpec::new(2, 1, 5, 5, Phase::MetaTest);
    let r = mean_hm(&model, &s, &tst, 707, 500)?;
    // adaptation goes through a shared reference; check the bits anyway
    let ep = s.generate_indexed(&tst, 1, 0).map_err(|e| e.to_string())?;
    adapt_head(
        &model.encoder,
        &world.ds,
        &ep,
        &AdaptConfig::default(),
        &mut stream_rng(0, 0),
    )
    .map_err(|e| e.to_string())?;
    let after: Vec<u64> = model.encoder.params().iter().map(|v| v.to_bits()).collect();
    ensure(bits == after, || "encoder changed during adaptation".into())?;
    ensure(r.hm.mean >= 0.95, || {
        format!("meta-test HM {:.4}", r.hm.mean)
    })?;
    Ok(format!("loss {:.4} -> {:.4}; meta-test HM {:.4} ± {:.4} over 500 episodes; encoder bitwise unchanged", losses[0], losses[9], r.hm.mean, r.hm.ci95))
}

// ---------------------------------------------------------------- 8

const TREND_TOL: f64 = 0.01;
const SHOTS: [usize; 4] = [1, 5, 15, 30];

fn trends() -> Check {
    let world = World::new(
        &SynthConfig {
            separation: 3.0,
            ..Default::default()
        },
        8,
    );
    let s = world.sampler();
    let (model, _) = batch_pretrain(&world, 8)?;
    // (n_way, n_unseen, k) -> (hm, ci)
    let mut cell = std::collections::BTreeMap::new();
    for n in 3..=5usize {
        for u in 1..=n {
            for k in SHOTS {
                let spec = EpisodeSpec::new(n - u, u, k, 30, Phase::MetaTest);
                let r = mean_hm(&model, &s, &spec, pipeline::cell_seed(8, &spec), 500)?;
                cell.insert((n, u, k), (r.hm.mean, r.hm.ci95));
            }
        }
    }
    let mut bad = Vec::new();
    let mut worst = 0.0f64;
    let mut cmp = |what: &str, prev: f64, next: f64, at: String| {
        let excess = next - prev;
        worst = worst.max(excess);
        if excess > TREND_TOL {
            bad.push(format!("{what} {at}: {prev:.4} -> {next:.4}"));
        }
    };
    for n in 3..=5usize {
        for u in 1..=n {
            for w in SHOTS.windows(2) {
                let (a, b) = (cell[&(n, u, w[0])], cell[&(n, u, w[1])]);
                cmp(
                    "HM falls with k",
                    b.0,
                    a.0,
                    format!("n{n} u{u} k{}->{}", w[0], w[1]),
                );
                cmp(
                    "CI widens with k",
                    a.1,
                    b.1,
                    format!("n{n} u{u} k{}->{}", w[0], w[1]),
                );
            }
            for &k in &SHOTS {
                if u < n {
                    let (a, b) = (cell[&(n, u, k)], cell[&(n, u + 1, k)]);
                    cmp(
                        "HM rises with n-unseen",
                        a.0,
                        b.0,
                        format!("n{n} k{k} u{}->{}", u, u + 1),
                    );
                }
                if n < 5 {
                    let (a, b) = (cell[&(n, u, k)], cell[&(n + 1, u, k)]);
                    cmp(
                        "CI widens with n-way",
                        a.1,
                        b.1,
                        format!("u{u} k{k} n{}->{}", n, n + 1),
                    );
                }
            }
        }
    }
    let lo = cell[&(3, 1, 1)];
    let hi = cell[&(3, 1, 30)];
    ensure(bad.is_empty(), || bad.join("; "))?;
    Ok(format!(
        "48 cells x 500 episodes; 3-way/1-unseen HM {:.4} (k=1) -> {:.4} (k=30); largest adverse step {:.4} <= {TREND_TOL}",
        lo.0, hi.0, worst.max(0.0)
    ))
}

// ---------------------------------------------------------------- 9

fn hm_semantics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let eps: Vec<EpisodeScores> = (0..1000)
        .map(|i| {
            let (hi, lo) = (rng.random_range(0.9..1.0), rng.random_range(0.5..0.6));
            if i % 2 == 0 {
                EpisodeScores::new(Some(hi), Some(lo))
            } else {
                EpisodeScores::new(Some(lo), Some(hi))
            }
            .unwrap()
        })
        .collect();
    let r = aggregate(&eps).map_err(|e| e.to_string())?;
    let per_episode = eps.iter().map(|e| e.hm).sum::<f64>() / eps.len() as f64;
    let of_means = harmonic_mean(r.seen.unwrap().mean, r.unseen.unwrap().mean);
    ensure((r.hm.mean - per_episode).abs() < 1e-12, || {
        "aggregate is not the per-episode mean".into()
    })?;
    ensure(of_means - r.hm.mean > 0.02, || {
        format!("difference {:.4}", of_means - r.hm.mean)
    })?;
    Ok(format!(
        "mean of per-episode HM {:.4} vs HM of means {:.4}; aggregate uses the former",
        r.hm.mean, of_means
    ))
}

// ---------------------------------------------------------------- 10

const PIPELINE: &str = "\
seed = 10
synth.trn_per_class = 400
synth.val_per_class = 120
synth.tst_per_class = 120
synth.n_not_finding = 200
encoder.hidden = [32, 32]
encoder.output_dim = 16
train.max_epochs = 2
train.train_episodes = 20
train.val_episodes = 10
train.train_spec = {\"n_seen\": 3, \"n_unseen\": 0, \"k_trn\": 5, \"k_tst\": 5, \"phase\": \"meta-train\"}
train.val_spec = {\"n_seen\": 2, \"n_unseen\": 1, \"k_trn\": 5, \"k_tst\": 5, \"phase\": \"meta-val\"}
episodes.spec = {\"n_seen\": 2, \"n_unseen\": 1, \"k_trn\": 5, \"k_tst\": 5, \"phase\": \"meta-test\"}
episodes.count = 25
eval.episodes = 50
eval.n_unseen = [1, 2]
eval.k_trn = [1, 5]
eval.k_tst = 5
";

fn determinism() -> Check {
    let files = [
        "episodes/meta-test.json",
        "checkpoints/batchbased.json",
        "checkpoints/protonet-ml.json",
        "reports/eval-batchbased.json",
        "reports/eval-batchbased.txt",
        "reports/eval-batchbased.csv",
        "reports/eval-protonet-ml.json",
        "reports/eval-protonet-ml.txt",
        "reports/eval-protonet-ml.csv",
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::parse(PIPELINE).map_err(|e| e.to_string())?;
        cfg.paths.work_dir = dir.path().to_path_buf();
        cfg.paths.reports = Some(dir.path().join("reports"));
        for m in [Method::BatchBased, Method::ProtonetMl] {
            pipeline::run_all(&cfg, m).map_err(|e| e.to_string())?;
        }
        runs.push(
            files
                .iter()
                .map(|f| std::fs::read(dir.path().join(f)).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    for (i, f) in files.iter().enumerate() {
        ensure(runs[0][i] == runs[1][i], || {
            format!("{f} differs between runs")
        })?;
    }
    let bytes: usize = runs[0].iter().map(Vec::len).sum();
    Ok(format!(
        "{} artifacts ({bytes} bytes) identical across two full runs",
        files.len()
    ))
}

fn main() -> ExitCode {
    std::env::remove_var(gfsl::config::REPORT_DIR_ENV);
    let mut ok = true;
    ok &= run(
        1,
        "partition fixture",
        Some(Duration::from_secs(1)),
        partition_fixture,
    );
    ok &= run(2, "stats fixture", None, stats_fixture);
    ok &= run(
        3,
        "episode invariants",
        Some(Duration::from_secs(30)),
        episode_invariants,
    );
    ok &= run(4, "AUC oracle", Some(Duration::from_secs(10)), auc_oracle);
    ok &= run(
        5,
        "gradient checks",
        Some(Duration::from_secs(60)),
        gradient_checks,
    );
    let world = World::new(&separable(), 6);
    ok &= run(
        6,
        "ProtoNet-ML learning sanity",
        Some(Duration::from_secs(300)),
        || protonet_sanity(&world),
    );
    ok &= run(
        7,
        "BatchBased learning sanity",
        Some(Duration::from_secs(300)),
        || batchbased_sanity(&world),
    );
    ok &= run(8, "grid trends", None, trends);
    ok &= run(9, "HM aggregation semantics", None, hm_semantics);
    ok &= run(10, "determinism", None, determinism);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
