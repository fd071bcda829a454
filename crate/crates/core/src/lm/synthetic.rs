//! Seeded toy scenes paired with template captions, standing in for detector
//! output.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::{Region, RegionSet};

pub const OBJECT_CLASSES: [&str; 15] = [
    "cat", "dog", "man", "woman", "car", "bus", "tree", "horse", "bird", "boat", "chair", "table",
    "cup", "kite", "train",
];

pub const RELATIONS: [&str; 5] = [
    "to the left of",
    "to the right of",
    "above",
    "below",
    "near",
];

const FILLER_WORDS: [&str; 4] = ["a", "small", "large", "is"];

/// Fixed seed for class templates so a class looks the same in every dataset.
const TEMPLATE_SEED: u64 = 0x7e3a_1a7e;

/// Every word a synthetic caption can contain.
pub fn grammar_words() -> BTreeSet<&'static str> {
    OBJECT_CLASSES
        .iter()
        .copied()
        .chain(FILLER_WORDS)
        .chain(RELATIONS.iter().flat_map(|r| r.split(' ')))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    /// Regions per image, at least 2: the captioned pair plus distractors.
    pub regions_per_image: usize,
    pub appearance_dim: usize,
    /// Half-width of the uniform noise added to each appearance coordinate.
    pub noise_scale: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            regions_per_image: 2,
            appearance_dim: 16,
            noise_scale: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub image_id: String,
    pub regions: RegionSet,
    /// Object class of each region, parallel to `regions`.
    pub classes: Vec<usize>,
    pub caption: String,
}

/// Per-class appearance centers, uniform in [-1, 1].
pub fn class_templates(dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(TEMPLATE_SEED);
    (0..OBJECT_CLASSES.len())
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect()
}

fn appearance(template: &[f64], noise: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    template
        .iter()
        .map(|&t| {
            if noise > 0.0 {
                t + rng.gen_range(-noise..noise)
            } else {
                t
            }
        })
        .collect()
}

/// Builds `n_images` scenes. The first two regions are the captioned subject
/// and object; the subject's box size picks "small" or "large" and the
/// object's placement realizes the relation. Class pairs stay distinct while
/// unused pairs remain.
pub fn synthetic_regions(
    seed: u64,
    n_images: usize,
    cfg: &SyntheticConfig,
) -> Result<Vec<SyntheticScene>> {
    if cfg.regions_per_image < 2 {
        return Err(Error::InvalidConfig(
            "scenes need at least two regions".into(),
        ));
    }
    if cfg.appearance_dim == 0 || !(cfg.noise_scale >= 0.0) {
        return Err(Error::InvalidConfig("invalid appearance settings".into()));
    }
    let templates = class_templates(cfg.appearance_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = OBJECT_CLASSES.len();
    let max_pairs = n_classes * (n_classes - 1) / 2;
    let mut used_pairs = BTreeSet::new();
    let mut scenes = Vec::with_capacity(n_images);
    for index in 0..n_images {
        let (subject, object) = loop {
            let a = rng.gen_range(0..n_classes);
            let b = rng.gen_range(0..n_classes);
            if a == b {
                continue;
            }
            let key = (a.min(b), a.max(b));
            if used_pairs.len() >= max_pairs || used_pairs.insert(key) {
                break (a, b);
            }
        };
        let large = rng.gen_bool(0.5);
        let relation = rng.gen_range(0..RELATIONS.len());

        let side = if large {
            rng.gen_range(0.30..0.40)
        } else {
            rng.gen_range(0.08..0.14)
        };
        let (sx, sy) = (rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7));
        let gap = side / 2.0 + rng.gen_range(0.25..0.35);
        // The subject sits to the left of the object when the object is to its right, etc.
        let (ox, oy) = match relation {
            0 => (sx + gap, sy),
            1 => (sx - gap, sy),
            2 => (sx, sy + gap),
            3 => (sx, sy - gap),
            _ => (sx + side * 0.6, sy + side * 0.3),
        };
        let object_side = rng.gen_range(0.15..0.25);

        let mut regions = vec![
            Region::new(
                sx,
                sy,
                side,
                side,
                appearance(&templates[subject], cfg.noise_scale, &mut rng),
            )?,
            Region::new(
                ox,
                oy,
                object_side,
                object_side,
                appearance(&templates[object], cfg.noise_scale, &mut rng),
            )?,
        ];
        let mut classes = vec![subject, object];
        for _ in 2..cfg.regions_per_image {
            let c = rng.gen_range(0..n_classes);
            let s = rng.gen_range(0.05..0.1);
            regions.push(Region::new(
                rng.gen_range(0.0..1.0),
                rng.gen_range(0.0..1.0),
                s,
                s,
                appearance(&templates[c], cfg.noise_scale, &mut rng),
            )?);
            classes.push(c);
        }
        let caption = format!(
            "a {} {} is {} a {}",
            if large { "large" } else { "small" },
            OBJECT_CLASSES[subject],
            RELATIONS[relation],
            OBJECT_CLASSES[object]
        );
        scenes.push(SyntheticScene {
            image_id: format!("syn{index:04}"),
            regions: RegionSet::new(regions)?,
            classes,
            caption,
        });
    }
    Ok(scenes)
}

/// Caption lines in the corpus format, `image_id<TAB>caption`.
pub fn to_corpus_lines(scenes: &[SyntheticScene]) -> String {
    scenes
        .iter()
        .map(|s| format!("{}\t{}\n", s.image_id, s.caption))
        .collect()
}

/// Writes `<stem>.tsv` with the captions and `<stem>.json` with boxes and
/// appearance vectors.
pub fn write_dataset(scenes: &[SyntheticScene], stem: &Path) -> Result<()> {
    let tsv = stem.with_extension("tsv");
    std::fs::write(&tsv, to_corpus_lines(scenes)).map_err(|e| Error::io(&tsv, e))?;
    let json = stem.with_extension("json");
    let mut f = std::fs::File::create(&json).map_err(|e| Error::io(&json, e))?;
    serde_json::to_writer_pretty(&mut f, scenes)?;
    f.write_all(b"\n").map_err(|e| Error::io(&json, e))?;
    Ok(())
}

pub fn read_sidecar(path: &Path) -> Result<Vec<SyntheticScene>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Nearest-template class of an appearance vector.
pub fn nearest_class(appearance: &[f64], centroids: &[Vec<f64>]) -> usize {
    let dist = |c: &Vec<f64>| -> f64 {
        c.iter()
            .zip(appearance)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    };
    (0..centroids.len())
        .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
        .unwrap_or(0)
}

/// Shuffles the region order within each scene, keeping `classes` aligned.
pub fn shuffle_regions(scenes: &mut [SyntheticScene], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for s in scenes {
        let mut order: Vec<usize> = (0..s.regions.len()).collect();
        order.shuffle(&mut rng);
        s.regions = s.regions.permuted(&order);
        s.classes = order.iter().map(|&i| s.classes[i]).collect();
    }
}
