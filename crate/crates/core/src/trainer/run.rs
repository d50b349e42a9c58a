//! The training loop of one stage.

use std::time::Instant;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use super::hyper::{Hyperparameters, Stage};
use super::log::{LogRecord, TrainingLog};
use crate::data::{DatasetRegistry, EpochSampler, SamplerState, Sample};
use crate::error::{ensure, Error, Result};
use crate::evaluator::{cmc, make_trials, multi_camera};
use crate::losses::{total_loss, Centers, LossWeights, OutputsView, Targets};
use crate::matcher::extract;
use crate::model::{Model, ParamFilter};
use crate::optim::Adam;
use crate::rng::{derive_seed, stream_rng, TAG_DROPOUT, TAG_TRIAL};

/// Result of a completed stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub model: Model,
    pub centers: Centers,
    pub log: TrainingLog,
    /// True when the stage ended on the plateau rule rather than the cap.
    pub plateaued: bool,
}

/// Scalar trainer state stored in checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct TrainerState {
    pub stage: Stage,
    pub attributes_enabled: bool,
    pub seed: u64,
    pub step: u64,
    pub hyperparameters: Hyperparameters,
    pub sampler: SamplerState,
    pub plateaued: bool,
    pub log: TrainingLog,
}

pub struct Trainer<'r> {
    pub(crate) registry: &'r DatasetRegistry,
    pub(crate) hp: Hyperparameters,
    pub(crate) stage: Stage,
    pub(crate) attributes_enabled: bool,
    pub(crate) seed: u64,
    pub(crate) model: Model,
    pub(crate) centers: Centers,
    pub(crate) optimizer: Adam,
    pub(crate) sampler: EpochSampler,
    pub(crate) weights: LossWeights,
    pub(crate) step: u64,
    pub(crate) log: TrainingLog,
    pub(crate) plateaued: bool,
    eval_samples: Vec<&'r Sample>,
    started: Instant,
}

impl<'r> Trainer<'r> {
    /// Start a stage. Stage 2 must be given the centers carried over from
    /// stage 1; stage 1 starts from zero centers when none are given.
    pub fn new(
        model: Model,
        centers: Option<Centers>,
        registry: &'r DatasetRegistry,
        hp: Hyperparameters,
        stage: Stage,
        attributes_enabled: bool,
        seed: u64,
    ) -> Result<Self> {
        hp.validate()?;
        let centers = match (centers, stage) {
            (Some(c), _) => c,
            (None, Stage::One) => Centers::zeros(model.config().num_identities, model.config().signature_dim),
            (None, Stage::Two) => return Err(Error::Config("stage 2 needs the centers learned in stage 1".into())),
        };
        let optimizer = Adam::new(&model, hp.adam(stage), ParamFilter { freeze_backbone: hp.freeze_backbone })?;
        let sampler = EpochSampler::new(registry, hp.batch_size, seed, stage.number() as u64)?;
        Self::assemble(registry, hp, stage, attributes_enabled, seed, model, centers, optimizer, sampler)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        registry: &'r DatasetRegistry,
        hp: Hyperparameters,
        stage: Stage,
        attributes_enabled: bool,
        seed: u64,
        model: Model,
        centers: Centers,
        optimizer: Adam,
        sampler: EpochSampler,
    ) -> Result<Self> {
        let cfg = model.config();
        ensure!(
            cfg.dropout_keep == hp.dropout_keep,
            Error::ConfigMismatch {
                field: "dropout_keep".into(),
                expected: hp.dropout_keep.to_string(),
                found: cfg.dropout_keep.to_string(),
            }
        );
        ensure!(
            cfg.num_identities == registry.total_identities(),
            Error::ConfigMismatch {
                field: "num_identities".into(),
                expected: registry.total_identities().to_string(),
                found: cfg.num_identities.to_string(),
            }
        );
        let shape = (cfg.input_height, cfg.input_width, cfg.input_channels);
        ensure!(
            registry.image_shape() == Some(shape),
            Error::Config(format!("model expects {shape:?} images, registry holds {:?}", registry.image_shape()))
        );
        ensure!(
            centers.num_identities() == cfg.num_identities && centers.dim() == cfg.signature_dim,
            Error::Shape(format!(
                "centers are {}×{}, model needs {}×{}",
                centers.num_identities(),
                centers.dim(),
                cfg.num_identities,
                cfg.signature_dim
            ))
        );
        let same_schema = cfg.attribute_schema == *registry.schema();
        let attribute_counts = if attributes_enabled {
            ensure!(registry.has_attributes(), Error::Config("attributes enabled but no dataset is annotated".into()));
            ensure!(same_schema, Error::Config("model attribute heads differ from the registry schema".into()));
            registry.attribute_counts()
        } else {
            cfg.attribute_schema.entries().iter().map(|e| vec![0; e.cardinality]).collect()
        };
        let lambda = if attributes_enabled { hp.lambda } else { 0.0 };
        let weights = LossWeights::from_counts(hp.alpha, lambda, registry.class_counts(), &attribute_counts)?;
        let train: Vec<&Sample> = registry.train_samples().collect();
        let eval_samples = multi_camera(&train);
        Ok(Self {
            registry,
            hp,
            stage,
            attributes_enabled,
            seed,
            model,
            centers,
            optimizer,
            sampler,
            weights,
            step: 0,
            log: TrainingLog::default(),
            plateaued: false,
            eval_samples,
            started: Instant::now(),
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn centers(&self) -> &Centers {
        &self.centers
    }

    pub fn log(&self) -> &TrainingLog {
        &self.log
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Step cap of this stage.
    pub fn max_steps(&self) -> u64 {
        (self.hp.epochs(self.stage) * self.sampler.batches_per_epoch()) as u64
    }

    pub fn is_finished(&self) -> bool {
        self.plateaued || self.step >= self.max_steps()
    }

    /// One optimization step: batch, forward with dropout, loss, backward,
    /// Adam update, center update.
    pub fn step(&mut self) -> Result<&LogRecord> {
        let index = self.step;
        let diverged = |what: String| Error::Divergence { step: index + 1, what };
        let batch = self.sampler.next_batch(self.registry)?;
        let mut rng = stream_rng(self.seed, &[TAG_DROPOUT, self.stage.number() as u64, index]);
        let (out, cache) = self.model.forward_train(batch.images.view(), &mut rng).map_err(|e| match e {
            Error::NonFinite(what) => diverged(what),
            e => e,
        })?;
        let mask = if self.attributes_enabled { batch.attribute_mask.clone() } else { vec![false; batch.len()] };
        let targets = Targets { identities: &batch.global_identities, mask: &mask, attributes: &batch.attribute_labels };
        let outputs = OutputsView {
            identity_logits: out.identity_logits.view(),
            signatures: out.signatures.view(),
            attribute_logits: &out.attribute_logits,
        };
        let schema = &self.model.config().attribute_schema;
        let (loss, grads) = total_loss(outputs, targets, &self.centers, &self.weights, schema)?;
        ensure!(loss.total.is_finite(), diverged(format!("loss is {}", loss.total)));
        let param_grads = self.model.backward(&cache, &grads)?;
        ensure!(param_grads.iter().all(|g: &ArrayD<f64>| g.iter().all(|v| v.is_finite())), diverged("gradient".into()));
        self.optimizer.step(&mut self.model, &param_grads)?;
        self.centers.update(out.signatures.view(), &batch.global_identities, self.hp.cs_alpha)?;
        self.step += 1;

        let evaluate = self.hp.log_every > 0 && (self.step.is_multiple_of(self.hp.log_every as u64) || self.step == self.max_steps());
        let cmc_rank1_train = if evaluate { self.train_rank1()? } else { None };
        self.log.push(LogRecord {
            step: self.step,
            stage: self.stage,
            l_id: loss.l_id,
            l_cs: loss.l_cs,
            l_att: loss.l_att_total,
            total: loss.total,
            cmc_rank1_train,
            wall_time: Some(self.started.elapsed().as_secs_f64()),
        });
        if cmc_rank1_train.is_some() {
            self.plateaued = self.plateau_reached();
        }
        Ok(self.log.records.last().expect("record just pushed"))
    }

    /// Rank-1 CMC over cross-camera trials of all training identities.
    pub fn train_rank1(&self) -> Result<Option<f64>> {
        if self.eval_samples.is_empty() {
            return Ok(None);
        }
        let store = extract(&self.model, &self.eval_samples)?;
        let seed = derive_seed(self.seed, &[TAG_TRIAL, self.stage.number() as u64, self.step]);
        let trials = make_trials(&self.eval_samples, self.hp.log_trials, seed)?;
        Ok(Some(cmc(&trials, &store, Some(1))?.rank1()))
    }

    fn plateau_reached(&self) -> bool {
        let w = self.hp.plateau_window;
        let hist: Vec<f64> = self.log.records.iter().filter_map(|r| r.cmc_rank1_train).collect();
        if w == 0 || hist.len() <= w {
            return false;
        }
        let (before, recent) = hist.split_at(hist.len() - w);
        let best_before = before.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best_recent = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        best_recent <= best_before + self.hp.plateau_min_delta
    }

    /// Run `n` more steps, stopping early if the stage finishes.
    pub fn run_steps(&mut self, n: u64) -> Result<()> {
        for _ in 0..n {
            if self.is_finished() {
                break;
            }
            self.step()?;
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    pub fn finish(self) -> StageOutcome {
        StageOutcome { model: self.model, centers: self.centers, log: self.log, plateaued: self.plateaued }
    }

    pub(crate) fn state(&self) -> TrainerState {
        TrainerState {
            stage: self.stage,
            attributes_enabled: self.attributes_enabled,
            seed: self.seed,
            step: self.step,
            hyperparameters: self.hp,
            sampler: self.sampler.state(),
            plateaued: self.plateaued,
            log: self.log.clone(),
        }
    }
}

/// Run one complete stage.
pub fn run_stage(
    model: Model,
    centers: Option<Centers>,
    registry: &DatasetRegistry,
    hp: Hyperparameters,
    stage: Stage,
    attributes_enabled: bool,
    seed: u64,
) -> Result<StageOutcome> {
    let mut trainer = Trainer::new(model, centers, registry, hp, stage, attributes_enabled, seed)?;
    trainer.run()?;
    Ok(trainer.finish())
}
