//! Training loop, checkpoints and the stage pipeline on a very small corpus.

use mtreid::config::{RunConfig, Stage2Variant};
use mtreid::pipeline::{self, Prepared};
use mtreid::trainer::{resume, Stage, Trainer};
use mtreid::Error;

const TINY: &str = r#"
seed = 5

[data]
kind = "synthetic"
num_datasets = 2
identities_per_dataset = 4
images_per_identity = 4
image_height = 16
image_width = 8
cameras = 2
attribute_fraction = 0.5

[model]
backbone = { tiny_cnn = { channels = [4, 8] } }
signature_dim = 8
fc2_dim = 4

[train]
batch_size = 4
stage1_epochs = 6
stage2_epochs = 2
log_every = 3
plateau_window = 0

[plan]
stage2 = ["with_attributes", "without_attributes"]
"#;

fn setup() -> (RunConfig, Prepared) {
    let cfg = RunConfig::from_toml(TINY).unwrap();
    let prepared = pipeline::prepare(&cfg).unwrap();
    (cfg, prepared)
}

fn bits(t: &Trainer<'_>) -> Vec<u64> {
    t.model().flat_params().iter().chain(t.centers().matrix().iter()).map(|v| v.to_bits()).collect()
}

#[test]
fn resuming_a_checkpoint_matches_an_uninterrupted_stage() {
    let (cfg, prepared) = setup();
    let reg = &prepared.registry;
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.bin");

    let model = pipeline::initial_model(&cfg, reg).unwrap();
    let mut straight = Trainer::new(model.clone(), None, reg, cfg.train, Stage::One, false, cfg.seed).unwrap();
    straight.run().unwrap();

    let mut first = Trainer::new(model, None, reg, cfg.train, Stage::One, false, cfg.seed).unwrap();
    first.run_steps(5).unwrap();
    first.checkpoint(&ckpt).unwrap();
    let mut second = resume(&ckpt, reg, cfg.train, Stage::One, false, cfg.seed).unwrap();
    assert_eq!(second.step_count(), 5);
    second.run().unwrap();

    assert_eq!(bits(&straight), bits(&second));
    assert_eq!(straight.log().to_csv().unwrap(), second.log().to_csv().unwrap());
}

#[test]
fn resume_rejects_changed_settings() {
    let (cfg, prepared) = setup();
    let reg = &prepared.registry;
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt.bin");
    let model = pipeline::initial_model(&cfg, reg).unwrap();
    let mut t = Trainer::new(model, None, reg, cfg.train, Stage::One, false, cfg.seed).unwrap();
    t.run_steps(2).unwrap();
    t.checkpoint(&ckpt).unwrap();

    let mut changed = cfg.train;
    changed.alpha = 0.1;
    assert!(matches!(resume(&ckpt, reg, changed, Stage::One, false, cfg.seed), Err(Error::ConfigMismatch { .. })));
    assert!(resume(&ckpt, reg, cfg.train, Stage::One, false, cfg.seed + 1).is_err());

    // Extending the epoch cap is allowed.
    let mut longer = cfg.train;
    longer.stage1_epochs += 2;
    assert!(resume(&ckpt, reg, longer, Stage::One, false, cfg.seed).is_ok());
}

#[test]
fn pipeline_resumes_from_a_stage2_checkpoint() {
    let (cfg, prepared) = setup();
    let full = tempfile::tempdir().unwrap();
    pipeline::train(&cfg, &prepared, full.path(), None).unwrap();

    // Interrupted run: stage 1 complete, stage 2 stopped after one step.
    let part = tempfile::tempdir().unwrap();
    let s1 = pipeline::run_stage1(&cfg, &prepared, part.path(), None).unwrap();
    let model = pipeline::stage2_model(&cfg, &s1.model, &prepared.registry, Stage2Variant::WithAttributes).unwrap();
    let mut t =
        Trainer::new(model, Some(s1.centers.clone()), &prepared.registry, cfg.train, Stage::Two, true, cfg.seed).unwrap();
    t.step().unwrap();
    let variant_dir = part.path().join(Stage2Variant::WithAttributes.dir_name());
    std::fs::create_dir_all(&variant_dir).unwrap();
    let ckpt = variant_dir.join(pipeline::CHECKPOINT_FILE);
    t.checkpoint(&ckpt).unwrap();

    let summaries = pipeline::train(&cfg, &prepared, part.path(), Some(&ckpt)).unwrap();
    assert_eq!(summaries.len(), 2);
    for v in [Stage2Variant::WithAttributes, Stage2Variant::WithoutAttributes] {
        for file in [pipeline::WEIGHTS_FILE, pipeline::LOG_FILE] {
            let a = std::fs::read(full.path().join(v.dir_name()).join(file)).unwrap();
            let b = std::fs::read(part.path().join(v.dir_name()).join(file)).unwrap();
            assert_eq!(a, b, "{}/{file}", v.dir_name());
        }
    }
}

#[test]
fn identity_loss_falls_during_stage1() {
    let (cfg, prepared) = setup();
    let dir = tempfile::tempdir().unwrap();
    let s1 = pipeline::run_stage1(&cfg, &prepared, dir.path(), None).unwrap();
    let r = &s1.log.records;
    let head: f64 = r[..4].iter().map(|x| x.l_id).sum::<f64>() / 4.0;
    let tail: f64 = r[r.len() - 4..].iter().map(|x| x.l_id).sum::<f64>() / 4.0;
    assert!(tail < head, "{head} -> {tail}");
    assert!(r.iter().any(|x| x.cmc_rank1_train.is_some()));
}

#[test]
fn weights_from_another_config_are_refused() {
    let (cfg, prepared) = setup();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.bin");
    pipeline::initial_model(&cfg, &prepared.registry).unwrap().save_weights(&path).unwrap();
    let mut other = cfg.clone();
    other.model.signature_dim = 16;
    assert!(matches!(
        pipeline::load_model(&other, &prepared.registry, &path),
        Err(Error::DigestMismatch { .. })
    ));
    assert!(pipeline::load_model(&cfg, &prepared.registry, &path).is_ok());
}
