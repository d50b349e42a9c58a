//! Weight file format.
//!
//! ```text
//! magic      "MTRW"
//! version    u32                (1)
//! precision  u32                (1 = f32, 2 = f64)
//! digest     [u8; 32]           SHA-256 of the config JSON
//! config     u32 len + JSON     ModelConfig
//! n_tensors  u32
//! tensor     u32 len + name, u32 ndim, u64 dims..., values   (repeated)
//! n_sections u32
//! section    [u8; 4] tag, u64 len, payload                   (repeated)
//! ```
//!
//! All integers and floats are little-endian. Tensors appear in
//! [`Model::parameters`] order. Plain weight files carry no sections;
//! training checkpoints append optimizer, center and trainer sections.

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::ArrayD;

use super::config::ModelConfig;
use super::network::Model;
use crate::codec::{self, Precision};
use crate::error::{ensure, Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MTRW";
pub const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Keep freshly initialized attribute heads when the file has none.
    pub allow_missing_heads: bool,
}

#[derive(Debug, Clone)]
pub struct WeightFile {
    pub config: ModelConfig,
    pub precision: Precision,
    pub tensors: Vec<(String, ArrayD<f64>)>,
    pub sections: Vec<([u8; 4], Vec<u8>)>,
}

impl WeightFile {
    pub fn section(&self, tag: &[u8; 4]) -> Option<&[u8]> {
        self.sections.iter().find(|(t, _)| t == tag).map(|(_, p)| p.as_slice())
    }

    /// Snapshot of a model's parameters in memory.
    pub fn from_model(model: &Model) -> Self {
        Self {
            config: model.config().clone(),
            precision: Precision::F64,
            tensors: model.parameters().iter().map(|p| (p.name.clone(), p.value.clone())).collect(),
            sections: vec![],
        }
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        codec::expect_magic(r, WEIGHTS_MAGIC)?;
        codec::expect_version(r, WEIGHTS_VERSION)?;
        let precision = Precision::from_code(r.read_u32::<LE>()?)?;
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        let json = codec::read_str(r)?;
        let config: ModelConfig =
            serde_json::from_str(&json).map_err(|e| Error::Format(format!("embedded config: {e}")))?;
        ensure!(
            config.digest_bytes() == digest,
            Error::DigestMismatch { expected: hex::encode(digest), found: config.digest() }
        );
        let n = r.read_u32::<LE>()?;
        let mut tensors = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let t = codec::read_tensor(r, precision)?;
            let arr = ArrayD::from_shape_vec(t.shape, t.values).map_err(|e| Error::Format(e.to_string()))?;
            tensors.push((t.name, arr));
        }
        let ns = r.read_u32::<LE>()?;
        let mut sections = Vec::with_capacity(ns as usize);
        for _ in 0..ns {
            let mut tag = [0u8; 4];
            r.read_exact(&mut tag)?;
            let len = r.read_u64::<LE>()?;
            ensure!(len < (1 << 36), Error::Format("section too large".into()));
            let mut payload = vec![0u8; len as usize];
            r.read_exact(&mut payload)?;
            sections.push((tag, payload));
        }
        let mut rest = [0u8; 1];
        ensure!(r.read(&mut rest)? == 0, Error::Format("trailing bytes after last section".into()));
        Ok(Self { config, precision, tensors, sections })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// Parse from memory; used for digests and tests.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut Cursor::new(bytes))
    }
}

pub(crate) fn write_weight_file<W: Write>(
    w: &mut W,
    model: &Model,
    precision: Precision,
    sections: &[([u8; 4], Vec<u8>)],
) -> Result<()> {
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_u32::<LE>(WEIGHTS_VERSION)?;
    w.write_u32::<LE>(precision as u32)?;
    w.write_all(&model.config().digest_bytes())?;
    codec::write_str(w, &serde_json::to_string(model.config())?)?;
    let params = model.parameters();
    w.write_u32::<LE>(params.len() as u32)?;
    for p in params {
        codec::write_tensor(w, &p.name, p.value.shape(), p.value.iter().copied(), precision)?;
    }
    w.write_u32::<LE>(sections.len() as u32)?;
    for (tag, payload) in sections {
        w.write_all(tag)?;
        w.write_u64::<LE>(payload.len() as u64)?;
        w.write_all(payload)?;
    }
    Ok(())
}

impl Model {
    /// Save all parameters in double precision (bit-exact round trip).
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        self.save_weights_as(path, Precision::F64)
    }

    /// Save with an explicit element type; `F32` is lossy for f64 models.
    pub fn save_weights_as(&self, path: &Path, precision: Precision) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_weight_file(&mut w, self, precision, &[])?;
        w.flush()?;
        Ok(())
    }

    pub fn load_weights(&mut self, path: &Path, opts: LoadOptions) -> Result<()> {
        self.apply_weights(&WeightFile::read(path)?, opts)
    }

    /// Build a tiny-backbone model straight from a weight file.
    pub fn from_weights(path: &Path) -> Result<Self> {
        let file = WeightFile::read(path)?;
        let mut model = Model::new(file.config.clone(), 0)?;
        model.apply_weights(&file, LoadOptions::default())?;
        Ok(model)
    }

    pub fn apply_weights(&mut self, file: &WeightFile, opts: LoadOptions) -> Result<()> {
        let skip: &[&str] = if opts.allow_missing_heads { &["attribute_schema"] } else { &[] };
        if let Some((field, expected, found)) = self.config().first_difference(&file.config, skip) {
            return Err(Error::ConfigMismatch { field, expected, found });
        }
        for (name, _) in &file.tensors {
            let known = self.parameters().iter().any(|p| &p.name == name);
            ensure!(
                known || (opts.allow_missing_heads && Model::is_attribute_head(name)),
                Error::Format(format!("unexpected tensor `{name}`"))
            );
        }
        let mut staged = Vec::new();
        for (i, p) in self.parameters().iter().enumerate() {
            match file.tensors.iter().find(|(n, _)| n == &p.name) {
                Some((_, value)) => {
                    ensure!(
                        value.shape() == p.value.shape(),
                        Error::ConfigMismatch {
                            field: p.name.clone(),
                            expected: format!("{:?}", p.value.shape()),
                            found: format!("{:?}", value.shape()),
                        }
                    );
                    staged.push((i, value.clone()));
                }
                None if opts.allow_missing_heads && Model::is_attribute_head(&p.name) => {}
                None => return Err(Error::Format(format!("missing tensor `{}`", p.name))),
            }
        }
        let mut params = self.parameters_mut();
        for (i, value) in staged {
            params[i].value = value;
        }
        Ok(())
    }
}
