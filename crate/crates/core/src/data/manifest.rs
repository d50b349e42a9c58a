//! JSON-lines dataset manifests.
//!
//! Line 1 is a header object describing the dataset:
//! `{"dataset": "name", "num_identities": 10, "has_attributes": true, "cameras": 2}`
//! (optionally `"dataset_id"`). Every following line is one image:
//! `{"image_path": "images/000001.png", "identity": 3, "camera": 1, "split": "train",
//!   "attributes": {"gender": 1, ...}}` with paths relative to the manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use ndarray::Array3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::{DatasetDescriptor, Sample, Split};
use super::schema::{AttributeAnnotation, AttributeSchema};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestHeader {
    pub dataset: String,
    pub num_identities: usize,
    pub has_attributes: bool,
    pub cameras: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub image_path: String,
    pub identity: usize,
    pub camera: u32,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<BTreeMap<String, usize>>,
}

/// Target image geometry for ingestion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub height: usize,
    pub width: usize,
}

fn line_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Manifest { path: path.to_path_buf(), line, message: message.into() }
}

fn annotation_from_map(
    map: &BTreeMap<String, usize>,
    schema: &AttributeSchema,
) -> std::result::Result<AttributeAnnotation, String> {
    let mut values = vec![None; schema.len()];
    for (name, &v) in map {
        let l = schema.index_of(name).ok_or_else(|| format!("unknown attribute `{name}`"))?;
        let card = schema.entries()[l].cardinality;
        if v >= card {
            return Err(format!("attribute `{name}` = {v} outside [0, {card})"));
        }
        values[l] = Some(v);
    }
    let values = values
        .into_iter()
        .zip(schema.entries())
        .map(|(v, e)| v.ok_or_else(|| format!("attribute `{}` missing", e.name)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    AttributeAnnotation::new(values, schema).map_err(|e| e.to_string())
}

fn decode_image(path: &Path, size: ImageSize) -> std::result::Result<Array3<f64>, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?.to_rgb8();
    let img = if img.width() as usize == size.width && img.height() as usize == size.height {
        img
    } else {
        image::imageops::resize(&img, size.width as u32, size.height as u32, FilterType::Triangle)
    };
    let mut out = Array3::zeros((size.height, size.width, 3));
    for (x, y, px) in img.enumerate_pixels() {
        for c in 0..3 {
            out[[y as usize, x as usize, c]] = px.0[c] as f64 / 255.0;
        }
    }
    Ok(out)
}

/// Read a manifest and decode its images, resized to `size`.
pub fn load_manifest(
    path: &Path,
    schema: &AttributeSchema,
    size: ImageSize,
) -> Result<(DatasetDescriptor, Vec<Sample>)> {
    let text = fs::read_to_string(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let (header_no, header_line) = lines.next().ok_or_else(|| Error::NoSamples(path.to_path_buf()))?;
    let header: ManifestHeader = serde_json::from_str(header_line)
        .map_err(|e| line_error(path, header_no + 1, format!("bad header: {e}")))?;
    if header.num_identities == 0 || header.cameras == 0 {
        return Err(line_error(path, header_no + 1, "num_identities and cameras must be positive"));
    }
    let desc = DatasetDescriptor {
        dataset_id: header.dataset_id.unwrap_or(0),
        name: header.dataset.clone(),
        num_identities: header.num_identities,
        has_attributes: header.has_attributes,
        camera_count: header.cameras,
    };

    let mut parsed: Vec<(usize, ManifestEntry, Option<AttributeAnnotation>)> = Vec::new();
    for (i, line) in lines {
        let no = i + 1;
        let entry: ManifestEntry = serde_json::from_str(line).map_err(|e| line_error(path, no, e.to_string()))?;
        if entry.identity >= header.num_identities {
            return Err(line_error(
                path,
                no,
                format!("identity {} outside [0, {})", entry.identity, header.num_identities),
            ));
        }
        if entry.camera as usize >= header.cameras {
            return Err(line_error(path, no, format!("camera {} outside [0, {})", entry.camera, header.cameras)));
        }
        let annotation = match &entry.attributes {
            Some(_) if !header.has_attributes => {
                return Err(line_error(path, no, "attributes given for a dataset declared without attributes"))
            }
            Some(map) => Some(annotation_from_map(map, schema).map_err(|m| line_error(path, no, m))?),
            None => None,
        };
        parsed.push((no, entry, annotation));
    }
    if parsed.is_empty() {
        return Err(Error::NoSamples(path.to_path_buf()));
    }

    let images: Vec<Result<Array3<f64>>> = parsed
        .par_iter()
        .map(|(no, entry, _)| decode_image(&dir.join(&entry.image_path), size).map_err(|m| line_error(path, *no, m)))
        .collect();

    let mut samples = Vec::with_capacity(parsed.len());
    for ((_, entry, annotation), image) in parsed.into_iter().zip(images) {
        samples.push(Sample {
            sample_id: samples.len() as u64,
            image: image?,
            local_identity: entry.identity,
            global_identity: entry.identity,
            dataset_id: desc.dataset_id,
            camera_id: entry.camera,
            split: entry.split,
            attributes: annotation,
        });
    }
    Ok((desc, samples))
}

/// Write `samples` as PNG files plus a manifest under `dir`. Returns the
/// manifest path. Pixel values are rounded to 8 bits.
pub fn write_manifest(
    dir: &Path,
    desc: &DatasetDescriptor,
    samples: &[Sample],
    schema: &AttributeSchema,
) -> Result<PathBuf> {
    let image_dir = dir.join("images");
    fs::create_dir_all(&image_dir)?;
    let entries: Vec<ManifestEntry> = samples
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let rel = format!("images/{k:06}.png");
            let (h, w, _) = s.image.dim();
            let buf = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let px = |c| (s.image[[y as usize, x as usize, c]].clamp(0.0, 1.0) * 255.0).round() as u8;
                image::Rgb([px(0), px(1), px(2)])
            });
            buf.save_with_format(dir.join(&rel), image::ImageFormat::Png)?;
            let attributes = s.attributes.as_ref().map(|a| {
                schema.entries().iter().zip(a.values()).map(|(e, &v)| (e.name.clone(), v)).collect()
            });
            Ok(ManifestEntry {
                image_path: rel,
                identity: s.local_identity,
                camera: s.camera_id,
                split: s.split,
                attributes,
            })
        })
        .collect::<Result<_>>()?;

    let path = dir.join(MANIFEST_FILE);
    let mut out = BufWriter::new(fs::File::create(&path)?);
    let header = ManifestHeader {
        dataset: desc.name.clone(),
        num_identities: desc.num_identities,
        has_attributes: desc.has_attributes,
        cameras: desc.camera_count,
        dataset_id: Some(desc.dataset_id),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for e in &entries {
        writeln!(out, "{}", serde_json::to_string(e)?)?;
    }
    out.flush()?;
    Ok(path)
}
