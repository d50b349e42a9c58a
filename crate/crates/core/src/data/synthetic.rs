//! Procedurally rendered pedestrian datasets for desk-scale runs.
//!
//! Every identity gets a fixed appearance (clothing colors, sleeve and leg
//! length, body width, hair, bags, plus an identity-specific accent stripe).
//! Cameras apply a fixed brightness/color cast and a horizontal shift; each
//! image adds a small translation jitter and pixel noise. Attribute labels,
//! when emitted, are read off the appearance, so they are learnable.

use ndarray::Array3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::sample::{DatasetDescriptor, Sample, Split};
use super::schema::{AttributeAnnotation, AttributeSchema, BOTTOM_COLORS, TOP_COLORS};
use crate::error::{ensure, Error, Result};
use crate::rng::{stream_rng, TAG_SYNTH};

pub const MIN_HEIGHT: usize = 16;
pub const MIN_WIDTH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub num_datasets: usize,
    pub identities_per_dataset: usize,
    pub images_per_identity: usize,
    pub image_height: usize,
    pub image_width: usize,
    pub cameras: usize,
    /// Fraction of datasets that carry attribute labels (rounded to a
    /// dataset count; the annotated ones are the last datasets).
    pub attribute_fraction: f64,
    pub noise_std: f64,
}

fn default_noise() -> f64 {
    0.03
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            num_datasets: 3,
            identities_per_dataset: 10,
            images_per_identity: 8,
            image_height: 32,
            image_width: 16,
            cameras: 2,
            attribute_fraction: 1.0 / 3.0,
            noise_std: default_noise(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_datasets", self.num_datasets),
            ("identities_per_dataset", self.identities_per_dataset),
            ("images_per_identity", self.images_per_identity),
            ("cameras", self.cameras),
        ];
        for (name, v) in positive {
            ensure!(v > 0, Error::InvalidArgument(format!("{name} must be positive")));
        }
        ensure!(
            (0.0..=1.0).contains(&self.attribute_fraction),
            Error::InvalidArgument("attribute_fraction must lie in [0, 1]".into())
        );
        ensure!(
            self.noise_std >= 0.0 && self.noise_std.is_finite(),
            Error::InvalidArgument("noise_std must be finite and nonnegative".into())
        );
        ensure!(
            self.image_height >= MIN_HEIGHT && self.image_width >= MIN_WIDTH,
            Error::InvalidArgument(format!(
                "image {}x{} too small to render a pedestrian (minimum {}x{})",
                self.image_height, self.image_width, MIN_HEIGHT, MIN_WIDTH
            ))
        );
        Ok(())
    }

    pub fn annotated_datasets(&self) -> usize {
        (self.attribute_fraction * self.num_datasets as f64).round() as usize
    }
}

type Rgb = [f64; 3];

const TOP_RGB: [Rgb; 8] = [
    [0.10, 0.10, 0.10],
    [0.15, 0.30, 0.85],
    [0.15, 0.65, 0.20],
    [0.50, 0.50, 0.50],
    [0.50, 0.20, 0.60],
    [0.85, 0.15, 0.15],
    [0.92, 0.92, 0.92],
    [0.90, 0.85, 0.15],
];

const BOTTOM_RGB: [Rgb; 9] = [
    [0.10, 0.10, 0.10],
    [0.15, 0.30, 0.85],
    [0.45, 0.28, 0.12],
    [0.50, 0.50, 0.50],
    [0.15, 0.65, 0.20],
    [0.95, 0.55, 0.70],
    [0.50, 0.20, 0.60],
    [0.92, 0.92, 0.92],
    [0.90, 0.85, 0.15],
];

const SKIN: [Rgb; 3] = [[0.96, 0.80, 0.69], [0.80, 0.60, 0.45], [0.55, 0.38, 0.26]];
const HAIR: Rgb = [0.12, 0.08, 0.05];
const BACKPACK_RGB: Rgb = [0.35, 0.22, 0.10];
const HANDBAG_RGB: Rgb = [0.75, 0.10, 0.45];
const OTHERBAG_RGB: Rgb = [0.10, 0.45, 0.45];

/// Fixed look of one identity.
#[derive(Debug, Clone)]
struct Appearance {
    female: bool,
    top: usize,
    bottom: usize,
    short_sleeves: bool,
    short_legs: bool,
    backpack: bool,
    hand_bag: bool,
    other_bag: bool,
    long_hair: bool,
    top_rgb: Rgb,
    bottom_rgb: Rgb,
    skin: Rgb,
    accent: Rgb,
    /// Stripe position as a fraction of the torso height.
    stripe: f64,
}

impl Appearance {
    fn draw(rng: &mut ChaCha8Rng) -> Self {
        let top = rng.random_range(0..TOP_COLORS.len());
        let bottom = rng.random_range(0..BOTTOM_COLORS.len());
        let mut jitter = |c: Rgb| c.map(|v| (v + rng.random_range(-0.04..0.04)).clamp(0.0, 1.0));
        let top_rgb = jitter(TOP_RGB[top]);
        let bottom_rgb = jitter(BOTTOM_RGB[bottom]);
        Self {
            female: rng.random_bool(0.5),
            top,
            bottom,
            short_sleeves: rng.random_bool(0.5),
            short_legs: rng.random_bool(0.5),
            backpack: rng.random_bool(0.4),
            hand_bag: rng.random_bool(0.4),
            other_bag: rng.random_bool(0.4),
            long_hair: rng.random_bool(0.5),
            top_rgb,
            bottom_rgb,
            skin: SKIN[rng.random_range(0..SKIN.len())],
            accent: [rng.random(), rng.random(), rng.random()],
            stripe: rng.random_range(0.2..0.8),
        }
    }

    /// Labels in the order of [`AttributeSchema::pedestrian`].
    fn labels(&self) -> Vec<usize> {
        let b = |x: bool| x as usize;
        vec![
            b(self.female),
            self.top,
            self.bottom,
            b(self.short_sleeves),
            b(self.short_legs),
            b(self.backpack),
            b(self.hand_bag),
            b(self.other_bag),
            b(!self.long_hair),
        ]
    }
}

struct Camera {
    gain: Rgb,
    background: Rgb,
    shift: i64,
}

impl Camera {
    fn new(camera: usize) -> Self {
        let brightness = [1.0, 0.8, 0.9, 0.7][camera % 4];
        let cast: Rgb = [[1.0, 1.0, 1.0], [1.05, 1.0, 0.9], [0.95, 1.0, 1.08], [1.0, 0.92, 1.0]][camera % 4];
        let g = 0.30 + 0.12 * (camera % 3) as f64;
        Self {
            gain: cast.map(|c| c * brightness),
            background: [g, g * 1.05, g * 0.95],
            shift: if camera % 2 == 1 { 1 } else { 0 },
        }
    }
}

/// Paint the pedestrian in normalized body coordinates.
fn render(look: &Appearance, cam: &Camera, h: usize, w: usize, dx: i64, dy: i64, brightness: f64) -> Array3<f64> {
    let hf = h as f64;
    let wf = w as f64;
    let cx = wf / 2.0;
    let torso_half = if look.female { 0.22 } else { 0.30 } * wf;
    let arm = 0.10 * wf;
    let head_half = 0.14 * wf;
    let (head_top, head_bot) = (0.04 * hf, 0.20 * hf);
    let (torso_top, torso_bot) = (0.20 * hf, 0.55 * hf);
    let legs_bot = 0.96 * hf;
    let hair_bot = if look.long_hair { 0.34 * hf } else { 0.09 * hf };
    let stripe_row = torso_top + look.stripe * (torso_bot - torso_top);

    let mut img = Array3::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let py = (y as i64 - dy) as f64 + 0.5;
            let px = (x as i64 - dx - cam.shift) as f64 + 0.5;
            let ax = (px - cx).abs();
            let mut c = cam.background;

            if (head_top..head_bot).contains(&py) && ax < head_half {
                c = if py < head_top + 0.04 * hf { HAIR } else { look.skin };
            }
            // Long hair falls past the shoulders, beside the face.
            if (head_top..hair_bot).contains(&py) && ax >= head_half - 1.0 && ax < head_half + 0.5 {
                c = HAIR;
            }
            if (torso_top..torso_bot).contains(&py) {
                if ax < torso_half {
                    c = if (py - stripe_row).abs() < 0.045 * hf { look.accent } else { look.top_rgb };
                } else if ax < torso_half + arm && py < torso_bot - 0.05 * hf {
                    let sleeve_end = if look.short_sleeves { torso_top + 0.3 * (torso_bot - torso_top) } else { torso_bot };
                    c = if py < sleeve_end { look.top_rgb } else { look.skin };
                }
            }
            if (torso_bot..legs_bot).contains(&py) {
                let gap = 0.05 * wf;
                if ax >= gap && ax < torso_half {
                    let trousers_end = if look.short_legs { torso_bot + 0.45 * (legs_bot - torso_bot) } else { legs_bot };
                    c = if py < trousers_end { look.bottom_rgb } else { look.skin };
                }
            }
            let left = px < cx;
            if look.backpack && left && ax >= torso_half - 1.0 && ax < torso_half + 0.18 * wf
                && (torso_top + 0.05 * hf..torso_top + 0.28 * hf).contains(&py)
            {
                c = BACKPACK_RGB;
            }
            if look.hand_bag && !left && ax >= torso_half + arm - 1.0 && ax < torso_half + arm + 0.14 * wf
                && (0.50 * hf..0.64 * hf).contains(&py)
            {
                c = HANDBAG_RGB;
            }
            if look.other_bag && left && ax >= torso_half && ax < torso_half + arm + 0.14 * wf
                && (0.58 * hf..0.72 * hf).contains(&py)
            {
                c = OTHERBAG_RGB;
            }
            for ch in 0..3 {
                img[[y, x, ch]] = c[ch] * cam.gain[ch] * brightness;
            }
        }
    }
    img
}

fn quantize(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Generate `config.num_datasets` datasets. Dataset ids are 0..n; all
/// samples are in the training split until a split is applied.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Vec<(DatasetDescriptor, Vec<Sample>)>> {
    config.validate()?;
    let schema = AttributeSchema::pedestrian();
    let annotated = config.annotated_datasets();
    let (h, w) = (config.image_height, config.image_width);
    let noise = Normal::new(0.0, config.noise_std.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let cameras: Vec<Camera> = (0..config.cameras).map(Camera::new).collect();

    let mut out = Vec::with_capacity(config.num_datasets);
    for d in 0..config.num_datasets {
        let has_attributes = d >= config.num_datasets - annotated;
        let desc = DatasetDescriptor {
            dataset_id: d as u32,
            name: format!("synthetic-{d}"),
            num_identities: config.identities_per_dataset,
            has_attributes,
            camera_count: config.cameras,
        };
        let mut samples = Vec::with_capacity(config.identities_per_dataset * config.images_per_identity);
        for identity in 0..config.identities_per_dataset {
            let mut rng = stream_rng(seed, &[TAG_SYNTH, d as u64, identity as u64]);
            let look = Appearance::draw(&mut rng);
            let attributes = if has_attributes { Some(AttributeAnnotation::new(look.labels(), &schema)?) } else { None };
            for k in 0..config.images_per_identity {
                let camera = k % config.cameras;
                let dx = rng.random_range(-1..=1);
                let dy = rng.random_range(-1..=1);
                let brightness = rng.random_range(0.92..1.08);
                let mut image = render(&look, &cameras[camera], h, w, dx, dy, brightness);
                for v in image.iter_mut() {
                    let n = if config.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    *v = quantize(*v + n);
                }
                samples.push(Sample {
                    sample_id: samples.len() as u64,
                    image,
                    local_identity: identity,
                    global_identity: identity,
                    dataset_id: d as u32,
                    camera_id: camera as u32,
                    split: Split::Train,
                    attributes: attributes.clone(),
                });
            }
        }
        out.push((desc, samples));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            num_datasets: 1,
            identities_per_dataset: 2,
            images_per_identity: 2,
            image_height: 16,
            image_width: 8,
            cameras: 2,
            attribute_fraction: 1.0,
            noise_std: 0.03,
        }
    }

    #[test]
    fn counts_and_classes() {
        let data = generate_synthetic(&small(), 0).unwrap();
        assert_eq!(data.len(), 1);
        let samples = &data[0].1;
        assert_eq!(samples.len(), 4);
        let mut ids: Vec<_> = samples.iter().map(|s| s.local_identity).collect();
        ids.dedup();
        assert_eq!(ids, vec![0, 1]);
        assert!(samples.iter().all(|s| s.image.iter().all(|v| (0.0..=1.0).contains(v))));
    }

    #[test]
    fn zero_fraction_has_no_annotations() {
        let cfg = SyntheticConfig { attribute_fraction: 0.0, num_datasets: 3, ..small() };
        let data = generate_synthetic(&cfg, 1).unwrap();
        assert!(data.iter().all(|(d, s)| !d.has_attributes && s.iter().all(|x| x.attributes.is_none())));
    }

    #[test]
    fn same_seed_same_pixels() {
        let a = generate_synthetic(&small(), 5).unwrap();
        let b = generate_synthetic(&small(), 5).unwrap();
        for (x, y) in a[0].1.iter().zip(&b[0].1) {
            assert_eq!(x.image, y.image);
        }
        let c = generate_synthetic(&small(), 6).unwrap();
        assert_ne!(a[0].1[0].image, c[0].1[0].image);
    }

    #[test]
    fn too_small_rejected() {
        let cfg = SyntheticConfig { image_height: 8, ..small() };
        assert!(generate_synthetic(&cfg, 0).is_err());
    }

    #[test]
    fn cameras_alternate_and_differ() {
        let cfg = SyntheticConfig { noise_std: 0.0, ..small() };
        let data = generate_synthetic(&cfg, 2).unwrap();
        let s = &data[0].1;
        assert_eq!(s[0].camera_id, 0);
        assert_eq!(s[1].camera_id, 1);
        assert_ne!(s[0].image, s[1].image);
    }

    #[test]
    fn pixels_are_byte_quantized() {
        let data = generate_synthetic(&small(), 3).unwrap();
        for v in data[0].1[0].image.iter() {
            let b = v * 255.0;
            assert_eq!(b, b.round());
        }
    }
}
