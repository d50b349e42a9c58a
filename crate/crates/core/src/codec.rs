//! Little-endian primitives shared by the weight, checkpoint and signature
//! file formats.

use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use crate::error::{ensure, Error, Result};

/// Element encoding of tensor payloads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    F32 = 1,
    F64 = 2,
}

impl Precision {
    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            1 => Ok(Self::F32),
            2 => Ok(Self::F64),
            c => Err(Error::Format(format!("unknown element type {c}"))),
        }
    }
}

/// Sanity cap on lengths read from untrusted headers.
const MAX_LEN: u64 = 1 << 34;

pub(crate) fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

pub(crate) fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = r.read_u32::<LE>()? as usize;
    ensure!(n as u64 <= MAX_LEN, Error::Format("string length out of range".into()));
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub(crate) fn write_values<W: Write>(w: &mut W, values: impl Iterator<Item = f64>, p: Precision) -> Result<()> {
    for v in values {
        match p {
            Precision::F32 => w.write_f32::<LE>(v as f32)?,
            Precision::F64 => w.write_f64::<LE>(v)?,
        }
    }
    Ok(())
}

pub(crate) fn read_values<R: Read>(r: &mut R, n: usize, p: Precision) -> Result<Vec<f64>> {
    ensure!(n as u64 <= MAX_LEN, Error::Format("tensor size out of range".into()));
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(match p {
            Precision::F32 => r.read_f32::<LE>()? as f64,
            Precision::F64 => r.read_f64::<LE>()?,
        });
    }
    Ok(out)
}

/// `name, ndim u32, dims u64 × ndim, values`.
pub(crate) fn write_tensor<W: Write>(
    w: &mut W,
    name: &str,
    shape: &[usize],
    values: impl Iterator<Item = f64>,
    p: Precision,
) -> Result<()> {
    write_str(w, name)?;
    w.write_u32::<LE>(shape.len() as u32)?;
    for &d in shape {
        w.write_u64::<LE>(d as u64)?;
    }
    write_values(w, values, p)
}

pub(crate) struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

pub(crate) fn read_tensor<R: Read>(r: &mut R, p: Precision) -> Result<TensorRecord> {
    let name = read_str(r)?;
    let ndim = r.read_u32::<LE>()? as usize;
    ensure!(ndim <= 8, Error::Format(format!("tensor `{name}` has {ndim} dimensions")));
    let mut shape = Vec::with_capacity(ndim);
    let mut total: u64 = 1;
    for _ in 0..ndim {
        let d = r.read_u64::<LE>()?;
        total = total.saturating_mul(d);
        shape.push(d as usize);
    }
    ensure!(total <= MAX_LEN, Error::Format(format!("tensor `{name}` too large")));
    let values = read_values(r, total as usize, p)?;
    Ok(TensorRecord { name, shape, values })
}

pub(crate) fn expect_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> Result<()> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m)?;
    ensure!(
        &m == magic,
        Error::Format(format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&m), String::from_utf8_lossy(magic)))
    );
    Ok(())
}

pub(crate) fn expect_version<R: Read>(r: &mut R, expected: u32) -> Result<()> {
    let v = r.read_u32::<LE>()?;
    ensure!(v == expected, Error::Version { found: v, expected });
    Ok(())
}
