//! Seeded synthetic retrieval dataset.
//!
//! Each query class is a textured geometric landmark. In facilitatory-context
//! mode every genuine instance carries a fixed companion pattern beside the
//! landmark, while look-alike distractors repeat the landmark with a decoy
//! companion, so only the surroundings separate positives from look-alikes.
//! Remaining images hold decoy landmarks. Everything sits on a low-contrast
//! cluttered background.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, ImageEntry, QueryEntry};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{Image, Rect};

pub const MIN_IMAGES: usize = 20;
pub const DEFAULT_IMAGES: usize = 200;
pub const DEFAULT_QUERIES: usize = 10;

const GAP: usize = 3;
const MARGIN: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    /// Defaults to `min(10, n_images / 4)`.
    pub n_queries: Option<usize>,
    /// Genuine instances per query besides the query image itself.
    pub positives_per_query: Option<usize>,
    pub lookalikes_per_query: Option<usize>,
    /// Place the class companion next to genuine landmarks.
    pub facilitatory_context: bool,
    pub clutter_shapes: usize,
    pub landmark_size: usize,
    pub companion_size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            width: 128,
            height: 96,
            n_queries: None,
            positives_per_query: None,
            lookalikes_per_query: None,
            facilitatory_context: true,
            clutter_shapes: 8,
            landmark_size: 40,
            companion_size: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Square,
    Disc,
    Diamond,
    Triangle,
    Cross,
}

const SHAPES: [Shape; 5] = [Shape::Square, Shape::Disc, Shape::Diamond, Shape::Triangle, Shape::Cross];

impl Shape {
    fn contains(self, u: f64, v: f64) -> bool {
        let (du, dv) = (u - 0.5, v - 0.5);
        match self {
            Shape::Square => du.abs() < 0.42 && dv.abs() < 0.42,
            Shape::Disc => du * du + dv * dv < 0.45 * 0.45,
            Shape::Diamond => du.abs() + dv.abs() < 0.5,
            Shape::Triangle => v > 0.08 && v < 0.92 && du.abs() < (v - 0.08) * 0.55,
            Shape::Cross => (du.abs() < 0.17 && dv.abs() < 0.46) || (dv.abs() < 0.17 && du.abs() < 0.46),
        }
    }
}

/// Shape plus stripe texture.
#[derive(Debug, Clone, Copy)]
struct Signature {
    shape: Shape,
    angle: f64,
    period: f64,
    colors: [[f64; 3]; 2],
}

/// Companion tile texture.
#[derive(Debug, Clone, Copy)]
struct Pattern {
    kind: usize,
    cell: usize,
    colors: [[f64; 3]; 2],
}

#[derive(Debug, Clone, Copy)]
enum Side {
    Right,
    Left,
    Below,
    Above,
}

const SIDES: [Side; 4] = [Side::Right, Side::Left, Side::Below, Side::Above];

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as usize {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn signature(i: usize, n: usize) -> Signature {
    let hue = (i as f64 + 0.5) / n as f64;
    Signature {
        shape: SHAPES[i % SHAPES.len()],
        angle: [0.0, 0.5, 0.25, 0.75][(i / SHAPES.len()) % 4] * std::f64::consts::PI,
        period: [6.0, 8.0, 10.0][i % 3],
        colors: [hsv(hue, 0.9, 1.0), hsv(hue + 0.45, 0.7, 0.55)],
    }
}

fn pattern(i: usize, n: usize) -> Pattern {
    let hue = (i as f64 + 0.25) / n as f64 + 0.1;
    Pattern {
        kind: i % 3,
        cell: [3, 4, 5][(i / 3) % 3],
        colors: [hsv(hue, 1.0, 1.0), hsv(hue + 0.5, 0.3, 0.95)],
    }
}

/// What gets drawn into one image.
#[derive(Debug, Clone, Copy)]
struct Scene {
    landmark: Signature,
    companion: Option<Pattern>,
    side: Side,
}

/// Rendered dataset; `images` is aligned with `manifest.images`.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    pub images: Vec<RgbImage>,
    /// Look-alike distractor ids per query id.
    pub lookalikes: BTreeMap<String, Vec<String>>,
}

impl SyntheticDataset {
    /// `(id, image)` pairs ready for encoding.
    pub fn database<T: Real>(&self) -> Result<Vec<(String, Image<T>)>> {
        self.manifest
            .images
            .iter()
            .zip(&self.images)
            .map(|(e, img)| Ok((e.id.clone(), Image::from_rgb8(img)?)))
            .collect()
    }

    /// Writes `manifest.json` and `images/*.png` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir.join("images"))?;
        for (entry, img) in self.manifest.images.iter().zip(&self.images) {
            img.save_with_format(dir.join(&entry.path), image::ImageFormat::Png)?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, self.manifest.to_json()?)?;
        Ok(path)
    }
}

struct Plan {
    n_queries: usize,
    positives: usize,
    lookalikes: usize,
}

fn plan(n_images: usize, config: &SyntheticConfig) -> Result<Plan> {
    if n_images < MIN_IMAGES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_IMAGES} images, got {n_images}"
        )));
    }
    let n_queries = config.n_queries.unwrap_or(DEFAULT_QUERIES.min(n_images / 4));
    if n_queries == 0 {
        return Err(Error::InvalidArgument("n_queries must be positive".into()));
    }
    // About 70% of the images belong to query classes.
    let budget = (n_images * 7 / 10 / n_queries).max(3) - 1;
    let positives = config.positives_per_query.unwrap_or(budget.div_ceil(2));
    let lookalikes = config.lookalikes_per_query.unwrap_or(budget - budget.div_ceil(2));
    if positives == 0 {
        return Err(Error::InvalidArgument("each query needs at least one positive".into()));
    }
    let needed = n_queries * (1 + positives + lookalikes);
    if needed > n_images {
        return Err(Error::InvalidArgument(format!(
            "{n_queries} queries with {positives} positives and {lookalikes} look-alikes need {needed} images, have {n_images}"
        )));
    }
    let group_w = config.landmark_size * 11 / 10 + GAP + config.companion_size + 2 * MARGIN;
    let group_h = config.landmark_size * 11 / 10 + 2 * MARGIN;
    if group_w > config.width.min(config.height) || group_h > config.width.min(config.height) {
        return Err(Error::InvalidArgument(format!(
            "landmark {} with companion {} does not fit a {}x{} image",
            config.landmark_size, config.companion_size, config.width, config.height
        )));
    }
    Ok(Plan { n_queries, positives, lookalikes })
}

pub fn generate_synthetic(seed: u64, n_images: usize, config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let plan = plan(n_images, config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_decoys = n_images.max(8);
    let n_sigs = plan.n_queries + n_decoys;
    let class_sig = |c: usize| signature(c, n_sigs);
    let decoy_sig = |d: usize| signature(plan.n_queries + d, n_sigs);
    let n_patterns = plan.n_queries + 4;
    let class_pattern = |c: usize| pattern(c, n_patterns);
    let decoy_pattern = |d: usize| pattern(plan.n_queries + d % 4, n_patterns);

    // (class, role) per image: role 0 = query, 1 = positive, 2 = look-alike.
    let mut slots: Vec<(Option<usize>, u8)> = Vec::with_capacity(n_images);
    for c in 0..plan.n_queries {
        slots.push((Some(c), 0));
        slots.extend(std::iter::repeat_n((Some(c), 1), plan.positives));
        slots.extend(std::iter::repeat_n((Some(c), 2), plan.lookalikes));
    }
    slots.resize(n_images, (None, 2));
    slots.shuffle(&mut rng);

    let mut images = Vec::with_capacity(n_images);
    let mut entries = Vec::with_capacity(n_images);
    let mut query_roi = BTreeMap::new();
    let mut members: BTreeMap<usize, (Vec<String>, Vec<String>)> = BTreeMap::new();
    let mut decoy_count = 0;
    for (i, &(class, role)) in slots.iter().enumerate() {
        let id = format!("img_{i:03}");
        let scene = match class {
            Some(c) => Scene {
                landmark: class_sig(c),
                companion: match (config.facilitatory_context, role) {
                    (false, _) => None,
                    (true, 2) => Some(decoy_pattern(rng.gen_range(0..4))),
                    (true, _) => Some(class_pattern(c)),
                },
                side: SIDES[c % SIDES.len()],
            },
            None => {
                decoy_count += 1;
                Scene {
                    landmark: decoy_sig(decoy_count % n_decoys),
                    companion: config.facilitatory_context.then(|| decoy_pattern(rng.gen_range(0..4))),
                    side: SIDES[rng.gen_range(0..SIDES.len())],
                }
            }
        };
        let (img, roi) = render(&mut rng, config, &scene);
        if let Some(c) = class {
            let m = members.entry(c).or_default();
            match role {
                0 => {
                    query_roi.insert(c, (id.clone(), roi));
                }
                1 => m.0.push(id.clone()),
                _ => m.1.push(id.clone()),
            }
        }
        entries.push(ImageEntry {
            id: id.clone(),
            path: PathBuf::from("images").join(format!("{id}.png")),
            w: config.width,
            h: config.height,
        });
        images.push(img);
    }

    let mut queries = Vec::with_capacity(plan.n_queries);
    let mut lookalikes = BTreeMap::new();
    for (c, (image, roi)) in query_roi {
        let (positive, looks) = members.remove(&c).unwrap_or_default();
        let id = format!("q_{c:02}");
        lookalikes.insert(id.clone(), looks);
        queries.push(QueryEntry {
            id,
            junk: vec![image.clone()],
            image,
            roi,
            positive,
        });
    }
    let manifest = DatasetManifest { images: entries, queries };
    manifest.validate()?;
    Ok(SyntheticDataset { manifest, images, lookalikes })
}

fn to_u8(c: [f64; 3]) -> Rgb<u8> {
    Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8))
}

fn render(rng: &mut ChaCha8Rng, config: &SyntheticConfig, scene: &Scene) -> (RgbImage, Rect) {
    let (w, h) = (config.width, config.height);
    let gray = rng.gen_range(0.10..0.18);
    let base: [f64; 3] = std::array::from_fn(|_| gray + rng.gen_range(-0.02..0.02));
    let mut px: Vec<[f64; 3]> = (0..w * h)
        .map(|_| {
            let n = rng.gen_range(-0.02..0.02);
            base.map(|b| b + n)
        })
        .collect();

    for _ in 0..config.clutter_shapes {
        let (sw, sh) = (rng.gen_range(4..14), rng.gen_range(4..14));
        let (x0, y0) = (rng.gen_range(0..w - sw), rng.gen_range(0..h - sh));
        let shade = rng.gen_range(-0.08..0.14);
        let tint: [f64; 3] = std::array::from_fn(|_| shade + rng.gen_range(-0.03..0.03));
        let round = rng.gen_bool(0.5);
        for y in y0..y0 + sh {
            for x in x0..x0 + sw {
                let u = (x - x0) as f64 / sw as f64 - 0.5;
                let v = (y - y0) as f64 / sh as f64 - 0.5;
                if !round || u * u + v * v < 0.25 {
                    let p = &mut px[y * w + x];
                    *p = std::array::from_fn(|k| base[k] + tint[k]);
                }
            }
        }
    }

    let size = config.landmark_size * rng.gen_range(95..=110) / 100;
    let cs = config.companion_size;
    let (group_w, group_h, lx, ly, cx, cy) = match scene.side {
        Side::Right => (size + GAP + cs, size, 0, 0, size + GAP, (size - cs) / 2),
        Side::Left => (size + GAP + cs, size, cs + GAP, 0, 0, (size - cs) / 2),
        Side::Below => (size, size + GAP + cs, 0, 0, (size - cs) / 2, size + GAP),
        Side::Above => (size, size + GAP + cs, 0, cs + GAP, (size - cs) / 2, 0),
    };
    let gx = rng.gen_range(MARGIN..=w - group_w - MARGIN);
    let gy = rng.gen_range(MARGIN..=h - group_h - MARGIN);
    let roi = Rect { x0: gx + lx, y0: gy + ly, x1: gx + lx + size, y1: gy + ly + size };

    let sig = &scene.landmark;
    let (ca, sa) = (sig.angle.cos(), sig.angle.sin());
    for y in 0..size {
        for x in 0..size {
            let (u, v) = ((x as f64 + 0.5) / size as f64, (y as f64 + 0.5) / size as f64);
            if sig.shape.contains(u, v) {
                let t = x as f64 * ca + y as f64 * sa;
                let band = (t / (sig.period / 2.0)).floor() as i64;
                px[(roi.y0 + y) * w + roi.x0 + x] = sig.colors[band.rem_euclid(2) as usize];
            }
        }
    }

    if let Some(p) = &scene.companion {
        let (ox, oy) = (gx + cx, gy + cy);
        for y in 0..cs {
            for x in 0..cs {
                let on = match p.kind {
                    0 => (x / p.cell + y / p.cell) % 2 == 0,
                    1 => (x % (2 * p.cell) < p.cell) && (y % (2 * p.cell) < p.cell),
                    _ => {
                        let (dx, dy) = (x as f64 - cs as f64 / 2.0, y as f64 - cs as f64 / 2.0);
                        ((dx * dx + dy * dy).sqrt() as usize / p.cell) % 2 == 0
                    }
                };
                px[(oy + y) * w + ox + x] = p.colors[usize::from(!on)];
            }
        }
    }

    let img = RgbImage::from_fn(w as u32, h as u32, |x, y| to_u8(px[y as usize * w + x as usize]));
    (img, roi)
}
