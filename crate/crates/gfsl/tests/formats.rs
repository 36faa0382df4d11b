use std::fs;

use gfsl::artifacts::{
    read_json, write_json, Checkpoint, EpisodeFile, PartitionManifest, Shapes, CHECKPOINT_FORMAT,
    CHECKPOINT_VERSION,
};
use gfsl::error::CliError;
use gfsl::io;
use gfsl_core::dataset::AgeRange;
use gfsl_core::partition::{build_class_partition, build_example_pools, PoolFractions};
use gfsl_core::rng::stream_rng;
use gfsl_core::synth::{generate, SynthConfig};
use gfsl_core::train::EpochRecord;
use gfsl_core::{
    Activation, AdamWConfig, EncoderParams, EpisodeSampler, EpisodeSpec, HeadParams, Method,
    OptimizerState, Phase, TrainConfig,
};
use tempfile::tempdir;

fn write(dir: &std::path::Path, name: &str, body: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn parse_line(e: CliError) -> u64 {
    match e {
        CliError::Parse { line, .. } => line,
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn metadata_parses_labels_and_not_finding() {
    let d = tempdir().unwrap();
    let v = write(d.path(), "v.txt", "Effusion\nEdema\n\nHernia\n");
    let m = write(
        d.path(),
        "m.csv",
        "id,source,age,labels\na,S1,40,Effusion|Hernia\nb,S2,9,\nc,S1,81, Edema \n",
    );
    let ds = io::load_dataset(&v, &m, None, None).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.example(0).labels.iter().collect::<Vec<_>>(), [0, 2]);
    assert!(ds.example(1).labels.is_empty());
    assert_eq!(ds.example(2).labels.iter().collect::<Vec<_>>(), [1]);
    let filtered = io::load_dataset(&v, &m, None, Some(AgeRange::default())).unwrap();
    assert_eq!(filtered.len(), 1);
}

#[test]
fn metadata_errors_carry_line_numbers() {
    let d = tempdir().unwrap();
    let v = write(d.path(), "v.txt", "Effusion\nEdema\n");
    let vocab = io::read_vocab(&v).unwrap();
    let cases = [
        (
            "id,source,age,labels\na,S,40,Effusion\nb,S,41,Pneumonia\n",
            3,
        ),
        ("id,source,age,labels\na,S,40,\nb,S,x,\n", 3),
        ("id,source,age,labels\na,S,40,\nb,S,40,\na,S,40,Edema\n", 4),
        ("id,source,labels\n", 1),
    ];
    for (body, line) in cases {
        let m = write(d.path(), "m.csv", body);
        assert_eq!(
            parse_line(io::read_metadata(&m, &vocab).unwrap_err()),
            line,
            "{body}"
        );
    }
    assert!(io::read_vocab(&write(d.path(), "dup.txt", "A\nA\n")).is_err());
}

#[test]
fn embeddings_join_one_to_one() {
    let d = tempdir().unwrap();
    let v = write(d.path(), "v.txt", "A\n");
    let m = write(
        d.path(),
        "m.csv",
        "id,source,age,labels\na,S,40,A\nb,S,40,\n",
    );
    let ok = write(d.path(), "e.csv", "id,v0,v1\nb,1.5,2\na,-1,0.25\n");
    let ds = io::load_dataset(&v, &m, Some(&ok), None).unwrap();
    assert_eq!(ds.feature_dim(), Some(2));
    assert_eq!(ds.features(0).unwrap(), [-1.0, 0.25]);
    for bad in [
        "id,v0\na,1\n",
        "id,v0\na,1\nb,2\nc,3\n",
        "id,v0\na,1\nb,nan\n",
        "id,v0\na,1\nb,1,2\n",
    ] {
        let e = write(d.path(), "bad.csv", bad);
        assert!(io::load_dataset(&v, &m, Some(&e), None).is_err(), "{bad}");
    }
}

#[test]
fn synthetic_files_round_trip() {
    let d = tempdir().unwrap();
    let cfg = SynthConfig {
        trn_per_class: 20,
        val_per_class: 10,
        tst_per_class: 10,
        n_not_finding: 10,
        ..Default::default()
    };
    let ds = generate(&cfg, 4).unwrap().dataset;
    let (v, m, e) = (d.path().join("v"), d.path().join("m"), d.path().join("e"));
    io::write_vocab(&v, ds.vocab()).unwrap();
    io::write_metadata(&m, &ds).unwrap();
    io::write_embeddings(&e, &ds).unwrap();
    let back = io::load_dataset(&v, &m, Some(&e), None).unwrap();
    assert_eq!(back, ds);
    let j = d.path().join("ds.json");
    write_json(&j, &ds).unwrap();
    assert_eq!(
        read_json::<gfsl_core::MetaDataset>(&j, "ingest").unwrap(),
        ds
    );
}

#[test]
fn partition_manifest_and_episode_files_resolve() {
    let ds = generate(&SynthConfig::default(), 5).unwrap().dataset;
    let cp = build_class_partition(ds.frequency_table(), 5, 3).unwrap();
    let pools = build_example_pools(&ds, &cp, PoolFractions::default(), 5).unwrap();
    let man = PartitionManifest::new(&ds, &cp, &pools);
    let text = serde_json::to_string(&man).unwrap();
    let (cp2, pools2) = serde_json::from_str::<PartitionManifest>(&text)
        .unwrap()
        .resolve(&ds)
        .unwrap();
    assert_eq!((cp2, pools2), (cp.clone(), pools.clone()));

    let sampler = EpisodeSampler::new(&ds, &cp, &pools);
    let spec = EpisodeSpec::new(2, 1, 5, 5, Phase::MetaTest);
    for i in 0..20 {
        let ep = sampler.generate_indexed(&spec, 77, i).unwrap();
        let f = EpisodeFile::new(&ds, &ep, &spec);
        let json = serde_json::to_value(&f).unwrap();
        for key in ["classes", "trn", "tst", "seed", "spec"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let back: EpisodeFile = serde_json::from_value(json).unwrap();
        assert_eq!(back.to_episode(&ds).unwrap(), ep);
    }
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let d = tempdir().unwrap();
    let mut rng = stream_rng(1, 1);
    let encoder = EncoderParams::random(&[7, 13, 5], Activation::Tanh, &mut rng).unwrap();
    let mut head = HeadParams::zeros(4, 5);
    // awkward values: subnormal, near-max, many digits
    head.params_mut()[0] = 5e-324;
    head.params_mut()[1] = 1.7976931348623157e308;
    head.params_mut()[2] = 0.1 + 0.2;
    head.params_mut()[3] = -1.0 / 3.0;
    let mut opt = OptimizerState::adamw(1e-4, AdamWConfig::default(), encoder.params().len());
    let mut p = encoder.params().to_vec();
    let g = vec![0.123456789; p.len()];
    opt.step(&mut p, &g).unwrap();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        method: Method::BatchBased,
        shapes: Shapes {
            encoder: vec![7, 13, 5],
            head: Some((4, 5)),
        },
        config_hash: "x".into(),
        seed: 9,
        train: TrainConfig::default(),
        head_classes: vec!["a".into(), "b".into(), "c".into(), "d".into()],
        encoder,
        head: Some(head),
        encoder_optimizer: opt,
        head_optimizer: None,
        history: vec![EpochRecord {
            epoch: 0,
            loss: 0.6931471805599453,
            val_hm: 0.75,
        }],
        best_epoch: Some(0),
        stopped_early: false,
    };
    let path = d.path().join("c.json");
    write_json(&path, &ckpt).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    let bits = |c: &Checkpoint| {
        let mut v: Vec<u64> = c.encoder.params().iter().map(|x| x.to_bits()).collect();
        v.extend(
            c.head
                .as_ref()
                .unwrap()
                .params()
                .iter()
                .map(|x| x.to_bits()),
        );
        v
    };
    assert_eq!(bits(&back), bits(&ckpt));
    assert_eq!(back, ckpt);

    let mut bad = ckpt.clone();
    bad.shapes.encoder = vec![7, 5];
    write_json(&path, &bad).unwrap();
    assert!(matches!(
        Checkpoint::load(&path),
        Err(CliError::Checkpoint(_))
    ));
}
