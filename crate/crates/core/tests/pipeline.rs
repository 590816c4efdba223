use std::fs;
use std::path::Path;

use ungan_core::data::load_dataset;
use ungan_core::experiment::{
    paths, run_experiment, run_stage, ExperimentConfig, Manifest, RunOptions, Stage, CONFIG_FILE,
};
use ungan_core::nn::load_checkpoint;
use ungan_core::Error;

fn small_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        master_seed: seed,
        ..Default::default()
    };
    cfg.data.num_classes = 4;
    cfg.data.dim = 4;
    cfg.data.samples = 400;
    cfg.classifier.hidden_dims = vec![16];
    cfg.classifier.epochs = 10;
    for g in [&mut cfg.gan_forget, &mut cfg.gan_retain] {
        g.epochs = 3;
        g.generator_hidden = vec![8];
        g.discriminator_hidden = vec![8];
    }
    cfg.unlearn.finetune_epochs = 2;
    cfg.mia.iterations = 50;
    cfg.mia.stump_count = 10;
    cfg
}

#[test]
fn bundled_default_config_is_the_library_default() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json");
    assert_eq!(
        ExperimentConfig::load(&path).unwrap(),
        ExperimentConfig::default()
    );
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&small_config(3), dir.path(), &RunOptions::default()).unwrap();
    assert_eq!(manifest.failed_stage, None);
    let stages: Vec<Stage> = manifest.stages.iter().map(|r| r.stage).collect();
    assert_eq!(stages, Stage::ALL.to_vec());
    let hashes = manifest.artifact_hashes();
    let models = hashes.keys().filter(|p| p.starts_with("models/")).count();
    let kl = hashes.keys().filter(|p| p.starts_with("gan/kl_")).count();
    assert_eq!((models, kl), (4, 2));
    for (path, sha) in &hashes {
        let bytes = fs::read(dir.path().join(path)).unwrap();
        assert_eq!(&ungan_core::io::sha256_hex(&bytes), sha, "{path}");
    }
    let (_, role) = load_checkpoint(&dir.path().join(paths::model("proposed"))).unwrap();
    assert_eq!(role.as_deref(), Some("proposed"));
    let synth = load_dataset(&dir.path().join(paths::SYNTHETIC_FORGET)).unwrap();
    assert!(synth.is_labeled());
    assert_eq!(
        manifest.seeds.len(),
        ungan_core::experiment::SEED_COMPONENTS.len()
    );
}

#[test]
fn parallel_gans_match_sequential() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config(5);
    let ma = run_experiment(&cfg, a.path(), &RunOptions { jobs: 1 }).unwrap();
    let mb = run_experiment(&cfg, b.path(), &RunOptions { jobs: 4 }).unwrap();
    assert_eq!(ma.artifact_hashes(), mb.artifact_hashes());
}

#[test]
fn staged_run_across_directories_matches_monolithic() {
    let mono = tempfile::tempdir().unwrap();
    let cfg = small_config(8);
    let expected = run_experiment(&cfg, mono.path(), &RunOptions::default()).unwrap();

    let staged = tempfile::tempdir().unwrap();
    let opts = RunOptions::default();
    for stage in Stage::ALL {
        run_stage(stage, Some(&cfg), staged.path(), staged.path(), &opts).unwrap();
    }
    let got = Manifest::load(staged.path()).unwrap().unwrap();
    assert_eq!(got.artifact_hashes(), expected.artifact_hashes());
}

#[test]
fn evaluate_into_fresh_directory_reproduces_metrics() {
    let run = tempfile::tempdir().unwrap();
    let first = run_experiment(&small_config(2), run.path(), &RunOptions::default()).unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    let rec = run_stage(
        Stage::Evaluate,
        None,
        run.path(),
        elsewhere.path(),
        &RunOptions::default(),
    )
    .unwrap();
    assert_eq!(rec.outputs[0].path, paths::EVAL_METRICS);
    assert_eq!(
        rec.outputs[0].sha256,
        first.artifact_hashes()[paths::EVAL_METRICS]
    );
}

#[test]
fn unlearn_without_pretrained_checkpoint_is_missing_artifact() {
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&small_config(1), dir.path(), &RunOptions::default()).unwrap();
    fs::remove_file(dir.path().join(paths::PRETRAINED)).unwrap();
    let err = run_stage(
        Stage::Unlearn,
        None,
        dir.path(),
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap_err();
    match err {
        Error::MissingArtifact(p) => assert!(p.ends_with(paths::PRETRAINED), "{}", p.display()),
        other => panic!("expected missing artifact, got {other}"),
    }
    let manifest = Manifest::load(dir.path()).unwrap().unwrap();
    assert_eq!(manifest.failed_stage, Some(Stage::Unlearn));
    assert!(manifest.stage(Stage::Unlearn).is_none());
}

#[test]
fn failed_stage_keeps_earlier_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(4);
    run_stage(
        Stage::Pretrain,
        Some(&cfg),
        dir.path(),
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap();
    fs::remove_file(dir.path().join(paths::RETAIN)).unwrap();
    let err = run_stage(
        Stage::GanTrain,
        None,
        dir.path(),
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingArtifact(_)));
    let manifest = Manifest::load(dir.path()).unwrap().unwrap();
    assert_eq!(manifest.failed_stage, Some(Stage::GanTrain));
    assert!(dir.path().join(CONFIG_FILE).exists());
    assert!(dir.path().join(paths::PRETRAINED).exists());
}

#[test]
fn zero_ratio_writes_empty_synthetic_sets() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(6);
    cfg.unlearn.synthetic_ratio = 0.0;
    run_experiment(&cfg, dir.path(), &RunOptions::default()).unwrap();
    assert!(load_dataset(&dir.path().join(paths::SYNTHETIC_FORGET))
        .unwrap()
        .is_empty());
    let (p, _) = load_checkpoint(&dir.path().join(paths::model("proposed"))).unwrap();
    let (b2, _) = load_checkpoint(&dir.path().join(paths::model("baseline2"))).unwrap();
    assert!(p.bit_identical(&b2));
}

#[test]
fn stage_without_config_needs_one() {
    let dir = tempfile::tempdir().unwrap();
    let err = run_stage(
        Stage::Pretrain,
        None,
        dir.path(),
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    let err = run_stage(
        Stage::Report,
        None,
        dir.path(),
        dir.path(),
        &RunOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::MissingArtifact(ref p) if p.ends_with(CONFIG_FILE)));
}
