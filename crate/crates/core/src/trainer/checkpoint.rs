//! Training checkpoints: a weight file with three extra sections.
//!
//! | tag    | payload                                                   |
//! |--------|-----------------------------------------------------------|
//! | `TRNR` | JSON trainer state (stage, step, seed, hyperparameters, sampler position, log) |
//! | `CNTR` | centers as one f64 tensor record                          |
//! | `ADAM` | u64 step, then the first and second moment tensors        |

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, ArrayD};

use super::hyper::{Hyperparameters, Stage};
use super::run::{Trainer, TrainerState};
use crate::codec::{self, Precision};
use crate::data::{DatasetRegistry, EpochSampler};
use crate::error::{ensure, Error, Result};
use crate::losses::Centers;
use crate::model::weights::write_weight_file;
use crate::model::{LoadOptions, Model, ParamFilter, WeightFile};
use crate::optim::Adam;

const TAG_STATE: &[u8; 4] = b"TRNR";
const TAG_CENTERS: &[u8; 4] = b"CNTR";
const TAG_ADAM: &[u8; 4] = b"ADAM";

/// Fields that may change between a checkpoint and its resumption.
const RESUMABLE_CHANGES: [&str; 2] = ["stage1_epochs", "stage2_epochs"];

fn mismatch(field: &str, expected: impl ToString, found: impl ToString) -> Error {
    Error::ConfigMismatch { field: field.into(), expected: expected.to_string(), found: found.to_string() }
}

impl Trainer<'_> {
    pub fn checkpoint(&self, path: &Path) -> Result<()> {
        let state = serde_json::to_vec(&self.state())?;
        let mut centers = Vec::new();
        let c = self.centers.matrix();
        codec::write_tensor(&mut centers, "centers", c.shape(), c.iter().copied(), Precision::F64)?;
        let mut adam = Vec::new();
        adam.write_u64::<LE>(self.optimizer.step)?;
        for t in self.optimizer.m.iter().chain(&self.optimizer.v) {
            codec::write_tensor(&mut adam, "", t.shape(), t.iter().copied(), Precision::F64)?;
        }
        let sections = [(*TAG_STATE, state), (*TAG_CENTERS, centers), (*TAG_ADAM, adam)];
        let mut w = BufWriter::new(File::create(path)?);
        write_weight_file(&mut w, &self.model, Precision::F64, &sections)?;
        w.flush()?;
        Ok(())
    }
}

/// Rebuild a trainer from a checkpoint. The run settings must match the
/// ones the checkpoint was written with, except the epoch caps.
pub fn resume<'r>(
    path: &Path,
    registry: &'r DatasetRegistry,
    hp: Hyperparameters,
    stage: Stage,
    attributes_enabled: bool,
    seed: u64,
) -> Result<Trainer<'r>> {
    let file = WeightFile::read(path)?;
    let model = Model::new(file.config.clone(), 0)?;
    resume_into(model, &file, registry, hp, stage, attributes_enabled, seed)
}

/// As [`resume`], loading into a caller-built model (for external
/// backbones).
pub fn resume_into<'r>(
    mut model: Model,
    file: &WeightFile,
    registry: &'r DatasetRegistry,
    hp: Hyperparameters,
    stage: Stage,
    attributes_enabled: bool,
    seed: u64,
) -> Result<Trainer<'r>> {
    let state: TrainerState = serde_json::from_slice(
        file.section(TAG_STATE).ok_or_else(|| Error::Format("weight file is not a training checkpoint".into()))?,
    )?;
    if let Some((field, expected, found)) = hp.first_difference(&state.hyperparameters, &RESUMABLE_CHANGES) {
        return Err(Error::ConfigMismatch { field, expected, found });
    }
    ensure!(state.stage == stage, mismatch("stage", stage, state.stage));
    ensure!(state.seed == seed, mismatch("seed", seed, state.seed));
    ensure!(
        state.attributes_enabled == attributes_enabled,
        mismatch("attributes_enabled", attributes_enabled, state.attributes_enabled)
    );
    model.apply_weights(file, LoadOptions::default())?;

    let centers = match file.section(TAG_CENTERS) {
        Some(bytes) => {
            let t = codec::read_tensor(&mut Cursor::new(bytes), Precision::F64)?;
            ensure!(t.shape.len() == 2, Error::Format("centers tensor is not 2-D".into()));
            Centers::from_matrix(
                Array2::from_shape_vec((t.shape[0], t.shape[1]), t.values).map_err(|e| Error::Format(e.to_string()))?,
            )?
        }
        None if hp.alpha > 0.0 => return Err(Error::Config("checkpoint has no centers and alpha > 0".into())),
        None => Centers::zeros(model.config().num_identities, model.config().signature_dim),
    };

    let bytes = file.section(TAG_ADAM).ok_or_else(|| Error::Format("checkpoint has no optimizer state".into()))?;
    let mut r = Cursor::new(bytes);
    let mut optimizer = Adam::new(&model, hp.adam(stage), ParamFilter { freeze_backbone: hp.freeze_backbone })?;
    optimizer.step = r.read_u64::<LE>()?;
    let n = optimizer.m.len();
    let mut moments = Vec::with_capacity(2 * n);
    for i in 0..2 * n {
        let t = codec::read_tensor(&mut r, Precision::F64)?;
        let expect = optimizer.m[i % n].shape();
        ensure!(t.shape == expect, Error::Format(format!("optimizer moment {i} has shape {:?}", t.shape)));
        moments.push(ArrayD::from_shape_vec(t.shape, t.values).map_err(|e| Error::Format(e.to_string()))?);
    }
    ensure!(r.position() as usize == bytes.len(), Error::Format("trailing optimizer bytes".into()));
    optimizer.v = moments.split_off(n);
    optimizer.m = moments;

    let sampler = EpochSampler::resume(registry, hp.batch_size, seed, stage.number() as u64, state.sampler)?;
    let mut trainer = Trainer::assemble(registry, hp, stage, attributes_enabled, seed, model, centers, optimizer, sampler)?;
    trainer.step = state.step;
    trainer.log = state.log;
    trainer.plateaued = state.plateaued;
    Ok(trainer)
}

/// Stage and attribute flag a checkpoint was written for.
pub fn checkpoint_stage(file: &WeightFile) -> Result<(Stage, bool)> {
    let bytes = file.section(TAG_STATE).ok_or_else(|| Error::Format("weight file is not a training checkpoint".into()))?;
    let state: TrainerState = serde_json::from_slice(bytes)?;
    Ok((state.stage, state.attributes_enabled))
}
