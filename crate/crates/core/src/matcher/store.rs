//! In-memory and on-disk signature stores.
//!
//! File layout, all little-endian:
//!
//! ```text
//! magic    "MTRS"
//! version  u32            (1)
//! rows     u64            M
//! dim      u64            D
//! digest   [u8; 32]       SHA-256 digest of the producing model
//! vectors  f32 × M × D    row-major
//! ids      M × (sample_id u64, global_identity u64, camera_id u32)
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use ndarray::{Array2, Axis};

use crate::codec;
use crate::error::{ensure, Error, Result};

pub const STORE_MAGIC: &[u8; 4] = b"MTRS";
pub const STORE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureStore {
    vectors: Array2<f32>,
    sample_ids: Vec<u64>,
    global_identities: Vec<usize>,
    camera_ids: Vec<u32>,
    model_digest: [u8; 32],
    index: HashMap<u64, usize>,
}

impl SignatureStore {
    pub fn new(
        vectors: Array2<f32>,
        sample_ids: Vec<u64>,
        global_identities: Vec<usize>,
        camera_ids: Vec<u32>,
        model_digest: [u8; 32],
    ) -> Result<Self> {
        let m = vectors.nrows();
        ensure!(
            sample_ids.len() == m && global_identities.len() == m && camera_ids.len() == m,
            Error::Shape(format!(
                "{m} vectors, {} sample ids, {} identities, {} cameras",
                sample_ids.len(),
                global_identities.len(),
                camera_ids.len()
            ))
        );
        let mut index = HashMap::with_capacity(m);
        for (row, &id) in sample_ids.iter().enumerate() {
            ensure!(index.insert(id, row).is_none(), Error::InvalidArgument(format!("duplicate sample id {id}")));
        }
        Ok(Self { vectors, sample_ids, global_identities, camera_ids, model_digest, index })
    }

    pub fn empty(dim: usize, model_digest: [u8; 32]) -> Self {
        Self::new(Array2::zeros((0, dim)), vec![], vec![], vec![], model_digest).expect("empty store is consistent")
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn vector(&self, row: usize) -> &[f32] {
        let start = row * self.dim();
        &self.vectors.as_slice().expect("standard layout")[start..start + self.dim()]
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    pub fn global_identities(&self) -> &[usize] {
        &self.global_identities
    }

    pub fn camera_ids(&self) -> &[u32] {
        &self.camera_ids
    }

    pub fn model_digest(&self) -> [u8; 32] {
        self.model_digest
    }

    pub fn row_of(&self, sample_id: u64) -> Option<usize> {
        self.index.get(&sample_id).copied()
    }

    /// Rows for `sample_ids`, in that order.
    pub fn subset(&self, sample_ids: &[u64]) -> Result<Self> {
        let rows: Vec<usize> =
            sample_ids.iter().map(|&id| self.row_of(id).ok_or(Error::MissingSignature(id))).collect::<Result<_>>()?;
        Self::new(
            self.vectors.select(Axis(0), &rows).as_standard_layout().into_owned(),
            sample_ids.to_vec(),
            rows.iter().map(|&r| self.global_identities[r]).collect(),
            rows.iter().map(|&r| self.camera_ids[r]).collect(),
            self.model_digest,
        )
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(STORE_MAGIC)?;
        w.write_u32::<LE>(STORE_VERSION)?;
        w.write_u64::<LE>(self.len() as u64)?;
        w.write_u64::<LE>(self.dim() as u64)?;
        w.write_all(&self.model_digest)?;
        for &v in self.vectors.iter() {
            w.write_f32::<LE>(v)?;
        }
        for i in 0..self.len() {
            w.write_u64::<LE>(self.sample_ids[i])?;
            w.write_u64::<LE>(self.global_identities[i] as u64)?;
            w.write_u32::<LE>(self.camera_ids[i])?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        codec::expect_magic(r, STORE_MAGIC)?;
        codec::expect_version(r, STORE_VERSION)?;
        let m = r.read_u64::<LE>()? as usize;
        let d = r.read_u64::<LE>()? as usize;
        ensure!(
            m.checked_mul(d).is_some_and(|n| n < (1 << 34)),
            Error::Format(format!("implausible store size {m}×{d}"))
        );
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        let mut flat = vec![0f32; m * d];
        r.read_f32_into::<LE>(&mut flat)?;
        let (mut ids, mut gids, mut cams) = (Vec::with_capacity(m), Vec::with_capacity(m), Vec::with_capacity(m));
        for _ in 0..m {
            ids.push(r.read_u64::<LE>()?);
            gids.push(r.read_u64::<LE>()? as usize);
            cams.push(r.read_u32::<LE>()?);
        }
        let mut rest = [0u8; 1];
        ensure!(r.read(&mut rest)? == 0, Error::Format("trailing bytes after signature store".into()));
        let vectors = Array2::from_shape_vec((m, d), flat).map_err(|e| Error::Format(e.to_string()))?;
        Self::new(vectors, ids, gids, cams, digest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
