//! End-to-end run plumbing: data loading, splitting, the stage plan, and
//! evaluation of saved weights.
//!
//! Output layout of a training run:
//!
//! ```text
//! <out>/config.toml                  effective configuration
//! <out>/stage1/{weights.bin, checkpoint.bin, log.csv}
//! <out>/stage2-attributes/...        one directory per stage-2 variant
//! <out>/stage2-plain/...
//! ```
//!
//! Stage-2 logs start with the stage-1 records, so each log covers the
//! full history of its model.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataConfig, RunConfig, Stage2Variant};
use crate::data::{
    generate_synthetic, load_manifest, write_manifest, AttributeSchema, DatasetDescriptor, DatasetRegistry, ImageSize,
    Sample,
};
use crate::error::{ensure, Error, Result};
use crate::evaluator::{apply_split, evaluate, make_split, EvalReport, SplitSpec};
use crate::losses::Centers;
use crate::matcher::{extract, SignatureStore};
use crate::model::{Model, ModelConfig, WeightFile};
use crate::rng::{derive_seed, TAG_INIT};
use crate::trainer::{checkpoint_stage, resume, Stage, Trainer, TrainingLog};

pub const CONFIG_FILE: &str = "config.toml";
pub const WEIGHTS_FILE: &str = "weights.bin";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const LOG_FILE: &str = "log.csv";
pub const STAGE1_DIR: &str = "stage1";
/// Config written by [`synthesize`] that reads the emitted manifests.
pub const MANIFEST_CONFIG_FILE: &str = "manifests.toml";

/// Registry with the test split applied.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub registry: DatasetRegistry,
    pub splits: Vec<SplitSpec>,
}

/// Raw datasets named by the config, before splitting.
pub fn load_datasets(cfg: &RunConfig, schema: &AttributeSchema) -> Result<Vec<(DatasetDescriptor, Vec<Sample>)>> {
    match &cfg.data {
        DataConfig::Synthetic(s) => generate_synthetic(s, cfg.seed),
        DataConfig::Manifests { paths, image_height, image_width } => paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let (mut desc, mut samples) =
                    load_manifest(p, schema, ImageSize { height: *image_height, width: *image_width })?;
                if desc.dataset_id == 0 && i > 0 {
                    desc.dataset_id = i as u32;
                    samples.iter_mut().for_each(|s| s.dataset_id = i as u32);
                }
                Ok((desc, samples))
            })
            .collect(),
    }
}

/// Render the configured synthetic corpus to `<out>/<dataset>/` as PNG files
/// plus manifests, and write `<out>/manifests.toml`: the same run config
/// reading those manifests instead. Returns the manifest paths.
pub fn synthesize(cfg: &RunConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let DataConfig::Synthetic(synth) = &cfg.data else {
        return Err(Error::Config("synth needs a synthetic data section".into()));
    };
    let schema = AttributeSchema::pedestrian();
    let mut paths = Vec::new();
    for (desc, samples) in generate_synthetic(synth, cfg.seed)? {
        paths.push(write_manifest(&out.join(&desc.name), &desc, &samples, &schema)?);
    }
    let relative = paths.iter().map(|p| p.strip_prefix(out).map(Path::to_path_buf).unwrap_or_else(|_| p.clone()));
    let mirror = RunConfig {
        data: DataConfig::Manifests {
            paths: relative.collect(),
            image_height: synth.image_height,
            image_width: synth.image_width,
        },
        ..cfg.clone()
    };
    fs::write(out.join(MANIFEST_CONFIG_FILE), mirror.to_toml()?)?;
    Ok(paths)
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let schema = AttributeSchema::pedestrian();
    let mut datasets = load_datasets(cfg, &schema)?;
    let mut splits = Vec::with_capacity(datasets.len());
    for (desc, samples) in datasets.iter_mut() {
        let protocol = cfg.split.per_dataset.get(&desc.name).copied().unwrap_or(cfg.split.protocol);
        let split = make_split(desc, protocol, cfg.split_seed())?;
        apply_split(samples, &split)?;
        splits.push(split);
    }
    Ok(Prepared { registry: DatasetRegistry::register(datasets, schema)?, splits })
}

pub fn model_config(cfg: &RunConfig, registry: &DatasetRegistry, attributes: bool) -> Result<ModelConfig> {
    let (h, w, c) = registry.image_shape().ok_or(Error::EmptyRegistry)?;
    Ok(ModelConfig {
        backbone: cfg.model.backbone.clone(),
        input_height: h,
        input_width: w,
        input_channels: c,
        signature_dim: cfg.model.signature_dim,
        fc2_dim: cfg.model.fc2_dim,
        num_identities: registry.total_identities(),
        attribute_schema: if attributes { registry.schema().clone() } else { AttributeSchema::empty() },
        dropout_keep: cfg.train.dropout_keep,
        fc2_stop_gradient: cfg.model.fc2_stop_gradient,
    })
}

/// Freshly initialized stage-1 model (no attribute heads).
pub fn initial_model(cfg: &RunConfig, registry: &DatasetRegistry) -> Result<Model> {
    Model::new(model_config(cfg, registry, false)?, derive_seed(cfg.seed, &[TAG_INIT, 1]))
}

/// Stage-2 starting point: the stage-1 model with heads for the variant.
pub fn stage2_model(cfg: &RunConfig, stage1: &Model, registry: &DatasetRegistry, variant: Stage2Variant) -> Result<Model> {
    let schema = if variant.attributes_enabled() { registry.schema().clone() } else { AttributeSchema::empty() };
    stage1.with_attribute_schema(schema, derive_seed(cfg.seed, &[TAG_INIT, 2]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub name: String,
    pub dir: PathBuf,
    pub steps: u64,
    pub final_train_rank1: Option<f64>,
    pub plateaued: bool,
}

/// Stage-1 or stage-2 result kept in memory between stages.
pub struct StageResult {
    pub model: Model,
    pub centers: Centers,
    /// Full history of the model, stage-1 records first.
    pub log: TrainingLog,
    pub summary: StageSummary,
}

fn drive(mut trainer: Trainer<'_>, cfg: &RunConfig, dir: &Path, prior: &TrainingLog, name: &str) -> Result<StageResult> {
    fs::create_dir_all(dir)?;
    let ckpt = dir.join(CHECKPOINT_FILE);
    while !trainer.is_finished() {
        trainer.step()?;
        let every = cfg.plan.checkpoint_every as u64;
        if every > 0 && trainer.step_count().is_multiple_of(every) {
            trainer.checkpoint(&ckpt)?;
        }
    }
    trainer.checkpoint(&ckpt)?;
    let steps = trainer.step_count();
    let outcome = trainer.finish();
    let mut log = prior.clone();
    log.extend(&outcome.log);
    outcome.model.save_weights(&dir.join(WEIGHTS_FILE))?;
    log.write_csv(&dir.join(LOG_FILE))?;
    Ok(StageResult {
        summary: StageSummary {
            name: name.to_string(),
            dir: dir.to_path_buf(),
            steps,
            final_train_rank1: outcome.log.last_rank1(),
            plateaued: outcome.plateaued,
        },
        model: outcome.model,
        centers: outcome.centers,
        log,
    })
}

pub fn run_stage1(cfg: &RunConfig, prepared: &Prepared, out: &Path, from: Option<&Path>) -> Result<StageResult> {
    let trainer = match from {
        Some(p) => resume(p, &prepared.registry, cfg.train, Stage::One, false, cfg.seed)?,
        None => {
            let model = initial_model(cfg, &prepared.registry)?;
            Trainer::new(model, None, &prepared.registry, cfg.train, Stage::One, false, cfg.seed)?
        }
    };
    drive(trainer, cfg, &out.join(STAGE1_DIR), &TrainingLog::default(), STAGE1_DIR)
}

pub fn run_stage2(
    cfg: &RunConfig,
    prepared: &Prepared,
    out: &Path,
    stage1: &StageResult,
    variant: Stage2Variant,
    from: Option<&Path>,
) -> Result<StageResult> {
    let registry = &prepared.registry;
    let attrs = variant.attributes_enabled();
    let trainer = match from {
        Some(p) => resume(p, registry, cfg.train, Stage::Two, attrs, cfg.seed)?,
        None => {
            let model = stage2_model(cfg, &stage1.model, registry, variant)?;
            Trainer::new(model, Some(stage1.centers.clone()), registry, cfg.train, Stage::Two, attrs, cfg.seed)?
        }
    };
    let stage1_log = TrainingLog {
        records: stage1.log.records.iter().filter(|r| r.stage == Stage::One).cloned().collect(),
    };
    drive(trainer, cfg, &out.join(variant.dir_name()), &stage1_log, variant.dir_name())
}

/// Reload a finished stage-1 run from its checkpoint and log.
fn load_stage1(cfg: &RunConfig, prepared: &Prepared, out: &Path) -> Result<StageResult> {
    let dir = out.join(STAGE1_DIR);
    let trainer = resume(&dir.join(CHECKPOINT_FILE), &prepared.registry, cfg.train, Stage::One, false, cfg.seed)?;
    ensure!(trainer.is_finished(), Error::Config("stage 1 has not finished; resume its checkpoint first".into()));
    let steps = trainer.step_count();
    let outcome = trainer.finish();
    Ok(StageResult {
        summary: StageSummary {
            name: STAGE1_DIR.into(),
            dir: dir.clone(),
            steps,
            final_train_rank1: outcome.log.last_rank1(),
            plateaued: outcome.plateaued,
        },
        log: outcome.log,
        model: outcome.model,
        centers: outcome.centers,
    })
}

/// Execute the stage plan, optionally resuming from a checkpoint of either
/// stage. Writes the effective config first.
pub fn train(cfg: &RunConfig, prepared: &Prepared, out: &Path, resume_from: Option<&Path>) -> Result<Vec<StageSummary>> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_toml()?)?;
    let resume_point = match resume_from {
        Some(p) => Some((p, checkpoint_stage(&WeightFile::read(p)?)?)),
        None => None,
    };
    let mut summaries = Vec::new();
    let (stage1, first_variant, variant_resume) = match resume_point {
        None => (run_stage1(cfg, prepared, out, None)?, 0, None),
        Some((p, (Stage::One, _))) => (run_stage1(cfg, prepared, out, Some(p))?, 0, None),
        Some((p, (Stage::Two, attrs))) => {
            let idx = cfg
                .plan
                .stage2
                .iter()
                .position(|v| v.attributes_enabled() == attrs)
                .ok_or_else(|| Error::Config("checkpoint variant is not in the stage plan".into()))?;
            (load_stage1(cfg, prepared, out)?, idx, Some(p))
        }
    };
    if resume_point.is_none_or(|(_, (s, _))| s == Stage::One) {
        summaries.push(stage1.summary.clone());
    }
    for (i, &variant) in cfg.plan.stage2.iter().enumerate().skip(first_variant) {
        let from = if i == first_variant { variant_resume } else { None };
        summaries.push(run_stage2(cfg, prepared, out, &stage1, variant, from)?.summary);
    }
    Ok(summaries)
}

/// Load weights, checking that they were produced for this configuration.
pub fn load_model(cfg: &RunConfig, registry: &DatasetRegistry, weights: &Path) -> Result<Model> {
    let file = WeightFile::read(weights)?;
    let expected = model_config(cfg, registry, !file.config.attribute_schema.is_empty())?;
    ensure!(
        file.config.digest() == expected.digest(),
        Error::DigestMismatch { expected: expected.digest(), found: file.config.digest() }
    );
    Model::from_weights(weights)
}

/// Held-out evaluation of saved weights.
pub fn evaluate_weights(cfg: &RunConfig, prepared: &Prepared, weights: &Path) -> Result<EvalReport> {
    let model = load_model(cfg, &prepared.registry, weights)?;
    evaluate(&model, &prepared.registry, &prepared.splits, &cfg.eval)
}

/// Signatures of the test split (or every sample with `all`).
pub fn extract_signatures(cfg: &RunConfig, prepared: &Prepared, weights: &Path, all: bool) -> Result<SignatureStore> {
    let model = load_model(cfg, &prepared.registry, weights)?;
    let samples: Vec<&Sample> =
        if all { prepared.registry.all_samples().iter().collect() } else { prepared.registry.test_samples().collect() };
    extract(&model, &samples)
}
