//! Synthetic videos of flat-coloured rectangles moving at integer velocity.
//!
//! Every frame comes with exact labels, exact forward and backward flow, and
//! the masks of pixels whose motion is trackable between neighbouring
//! frames. Optional label noise produces imperfect predictions.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{
    frame_stem, write_flo, write_label_png, write_pfm, write_rgb_png, DatasetManifest, Domain, ManifestRecord, Split,
};
use crate::raster::{ClassSpace, FlowField, LabelMap, RgbImage, ScalarPlane, ValidityMask};

/// Confidence written for pixels whose prediction was corrupted by noise.
pub const NOISY_CONFIDENCE: f32 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: u8,
    /// Top-left corner at frame 0. May lie outside the canvas.
    pub x: i64,
    pub y: i64,
    pub w: u32,
    pub h: u32,
    #[serde(default)]
    pub vx: i64,
    #[serde(default)]
    pub vy: i64,
    /// Depth order. Larger values are drawn on top; values must be unique.
    pub z: i32,
}

fn default_seed() -> u64 {
    1
}

fn default_clips() -> u32 {
    1
}

fn default_domain() -> Domain {
    Domain::Target
}

fn default_split() -> Split {
    Split::Val
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub width: usize,
    pub height: usize,
    pub num_classes: u8,
    pub background_class: u8,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    /// Frames per clip.
    pub length: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Per-pixel probability of replacing a predicted label with a different
    /// random class. Ground-truth labels are never noisy.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_clips")]
    pub clips: u32,
    #[serde(default = "default_domain")]
    pub domain: Domain,
    #[serde(default = "default_split")]
    pub split: Split,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<ClassSpace> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("canvas {}x{} is empty", self.width, self.height));
        }
        if self.length == 0 {
            return bad("sequence length is zero".into());
        }
        if self.clips == 0 {
            return bad("clip count is zero".into());
        }
        let space = ClassSpace::new(self.num_classes)?;
        if !space.is_class(self.background_class) {
            return bad(format!("background class {} outside the class space", self.background_class));
        }
        let mut depths = BTreeSet::new();
        for o in &self.objects {
            if !space.is_class(o.class) {
                return bad(format!("object class {} outside the class space", o.class));
            }
            if !depths.insert(o.z) {
                return bad(format!("depth {} used by two objects", o.z));
            }
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise rate {} outside [0, 1)", self.noise));
        }
        if self.noise > 0.0 && self.num_classes < 2 {
            return bad("label noise needs at least two classes".into());
        }
        Ok(space)
    }

    /// A random valid world no larger than `max_size` on either side and at
    /// most `max_length` frames long.
    pub fn random(seed: u64, max_size: usize, max_length: u32) -> WorldSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = rng.random_range(1..=max_size.max(1));
        let height = rng.random_range(1..=max_size.max(1));
        let num_classes: u8 = rng.random_range(2..=20);
        let count = rng.random_range(0..=6);
        let mut z: Vec<i32> = (0..count).collect();
        for i in (1..z.len()).rev() {
            z.swap(i, rng.random_range(0..=i));
        }
        let objects = z
            .into_iter()
            .map(|z| ObjectSpec {
                class: rng.random_range(0..num_classes),
                x: rng.random_range(-(width as i64) / 2..width as i64),
                y: rng.random_range(-(height as i64) / 2..height as i64),
                w: rng.random_range(1..=width as u32),
                h: rng.random_range(1..=height as u32),
                vx: rng.random_range(-4..=4),
                vy: rng.random_range(-4..=4),
                z,
            })
            .collect();
        WorldSpec {
            width,
            height,
            num_classes,
            background_class: rng.random_range(0..num_classes),
            objects,
            length: rng.random_range(2..=max_length.max(2)),
            seed,
            noise: 0.0,
            clips: 1,
            domain: Domain::Target,
            split: Split::Val,
        }
    }
}

/// One rendered frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthFrame {
    pub index: u32,
    pub image: RgbImage,
    pub labels: LabelMap,
    /// Labels after noise injection; equal to `labels` when noise is zero.
    pub predictions: LabelMap,
    pub confidence: ScalarPlane,
    /// Exact flow `t -> t+1`; absent on the last frame.
    pub flow_fwd: Option<FlowField>,
    /// Exact flow `t -> t-1`; absent on the first frame.
    pub flow_bwd: Option<FlowField>,
    /// Pixels whose surface is still visible at `t+1` (the complement of the
    /// forward occlusion mask).
    pub visible_fwd: Option<ValidityMask>,
    pub visible_bwd: Option<ValidityMask>,
}

/// Deterministic flat colour for a class.
pub fn class_color(class: u8) -> [u8; 3] {
    let c = class as u32;
    [
        (c * 67 + 40) as u8,
        (c * 131 + 90) as u8,
        (c * 29 + 160) as u8,
    ]
}

const BACKGROUND: usize = usize::MAX;

/// Index of the topmost object covering each pixel, or `BACKGROUND`.
fn owners(spec: &WorldSpec, order: &[usize], t: u32) -> Vec<usize> {
    let (w, h) = (spec.width as i64, spec.height as i64);
    let mut owner = vec![BACKGROUND; spec.width * spec.height];
    for &i in order {
        let o = &spec.objects[i];
        let x0 = o.x + o.vx * t as i64;
        let y0 = o.y + o.vy * t as i64;
        let (xa, xb) = (x0.max(0), (x0 + o.w as i64).min(w));
        let (ya, yb) = (y0.max(0), (y0 + o.h as i64).min(h));
        for y in ya..yb {
            let row = y as usize * spec.width;
            for x in xa..xb {
                owner[row + x as usize] = i;
            }
        }
    }
    owner
}

fn velocity(spec: &WorldSpec, owner: usize) -> (i64, i64) {
    if owner == BACKGROUND {
        (0, 0)
    } else {
        (spec.objects[owner].vx, spec.objects[owner].vy)
    }
}

/// Flow from frame `t` towards a neighbour at `sign = ±1`, and the mask of
/// pixels whose owner at `t` also owns the displaced pixel in the neighbour.
fn motion(spec: &WorldSpec, here: &[usize], there: &[usize], sign: i64) -> (FlowField, ValidityMask) {
    let (w, h) = (spec.width, spec.height);
    let mut dx = Vec::with_capacity(w * h);
    let mut dy = Vec::with_capacity(w * h);
    let mut visible = Vec::with_capacity(w * h);
    for (i, &o) in here.iter().enumerate() {
        let (vx, vy) = velocity(spec, o);
        let (fx, fy) = (sign * vx, sign * vy);
        dx.push(fx as f32);
        dy.push(fy as f32);
        let tx = (i % w) as i64 + fx;
        let ty = (i / w) as i64 + fy;
        let inside = (0..w as i64).contains(&tx) && (0..h as i64).contains(&ty);
        visible.push(inside && there[ty as usize * w + tx as usize] == o);
    }
    (
        FlowField::new(w, h, dx, dy).expect("integral flow is finite"),
        ValidityMask::from_valid(w, h, visible),
    )
}

fn noise_rng(seed: u64, clip: u32, frame: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((clip as u64) << 32 | frame as u64);
    rng
}

/// Renders clip `clip` of the world. Clips share geometry and differ only
/// in their noise draws.
pub fn generate_clip(spec: &WorldSpec, clip: u32) -> Result<Vec<SynthFrame>> {
    let space = spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut order: Vec<usize> = (0..spec.objects.len()).collect();
    order.sort_by_key(|&i| spec.objects[i].z);
    let owner_maps: Vec<Vec<usize>> = (0..spec.length).map(|t| owners(spec, &order, t)).collect();

    let mut frames = Vec::with_capacity(spec.length as usize);
    for t in 0..spec.length {
        let here = &owner_maps[t as usize];
        let labels: Vec<u8> = here
            .iter()
            .map(|&o| if o == BACKGROUND { spec.background_class } else { spec.objects[o].class })
            .collect();
        let image = labels.iter().map(|&c| class_color(c)).collect();

        let mut predictions = labels.clone();
        let mut confidence = vec![1.0f32; w * h];
        if spec.noise > 0.0 {
            let mut rng = noise_rng(spec.seed, clip, t);
            for (p, c) in predictions.iter_mut().zip(&mut confidence) {
                if rng.random_bool(spec.noise) {
                    // uniform over the other K - 1 classes
                    let r: u8 = rng.random_range(0..spec.num_classes - 1);
                    *p = if r >= *p { r + 1 } else { r };
                    *c = NOISY_CONFIDENCE;
                }
            }
        }

        let (flow_fwd, visible_fwd) = match owner_maps.get(t as usize + 1) {
            Some(next) => {
                let (f, v) = motion(spec, here, next, 1);
                (Some(f), Some(v))
            }
            None => (None, None),
        };
        let (flow_bwd, visible_bwd) = if t > 0 {
            let (f, v) = motion(spec, here, &owner_maps[t as usize - 1], -1);
            (Some(f), Some(v))
        } else {
            (None, None)
        };

        frames.push(SynthFrame {
            index: t,
            image: RgbImage::new(w, h, image)?,
            labels: LabelMap::from_valid(w, h, labels, space),
            predictions: LabelMap::from_valid(w, h, predictions, space),
            confidence: ScalarPlane::from_valid(w, h, confidence),
            flow_fwd,
            flow_bwd,
            visible_fwd,
            visible_bwd,
        });
    }
    Ok(frames)
}

/// Renders the first clip.
pub fn generate_sequence(spec: &WorldSpec) -> Result<Vec<SynthFrame>> {
    generate_clip(spec, 0)
}

pub fn clip_name(clip: u32) -> String {
    format!("clip{clip:03}")
}

/// Writes every clip under `out_dir` and returns the manifest, also saved
/// as `out_dir/manifest.jsonl`.
///
/// Layout: `images/`, `labels/` and `preds/` hold PNGs, `conf/` holds PFM
/// confidences, `flow/` holds `<stem>_fwd.flo` and `<stem>_bwd.flo`.
/// Manifest paths are relative to `out_dir`.
pub fn emit_dataset(spec: &WorldSpec, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    spec.validate()?;
    let out = out_dir.as_ref();
    for sub in ["images", "labels", "preds", "conf", "flow"] {
        fs::create_dir_all(out.join(sub)).map_err(|e| Error::from(e).at(out.join(sub)))?;
    }
    let mut records = Vec::new();
    for clip in 0..spec.clips {
        let clip_id = clip_name(clip);
        for frame in generate_clip(spec, clip)? {
            let stem = frame_stem(&clip_id, frame.index);
            let rel = |dir: &str, ext: &str| PathBuf::from(dir).join(format!("{stem}{ext}"));
            let mut record = ManifestRecord::new(&clip_id, frame.index, spec.domain, spec.split);

            let image = rel("images", ".png");
            write_rgb_png(&frame.image, out.join(&image))?;
            record.image_path = Some(image);
            let label = rel("labels", ".png");
            write_label_png(&frame.labels, out.join(&label))?;
            record.label_path = Some(label);
            write_label_png(&frame.predictions, out.join(rel("preds", ".png")))?;
            write_pfm(&frame.confidence, out.join(rel("conf", ".pfm")))?;
            if let Some(flow) = &frame.flow_fwd {
                let p = rel("flow", "_fwd.flo");
                write_flo(flow, out.join(&p))?;
                record.flow_fwd_path = Some(p);
            }
            if let Some(flow) = &frame.flow_bwd {
                let p = rel("flow", "_bwd.flo");
                write_flo(flow, out.join(&p))?;
                record.flow_bwd_path = Some(p);
            }
            records.push(record);
        }
    }
    let manifest = DatasetManifest::from_records(records, out)?;
    manifest.write(out.join("manifest.jsonl"))?;
    Ok(manifest)
}
