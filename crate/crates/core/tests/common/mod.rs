#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use flowseg::io::{Domain, Split};
use flowseg::pipeline::JobConfig;
use flowseg::synth::{emit_dataset, ObjectSpec, WorldSpec};

/// Every file under `root`, keyed by its relative path.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub fn object(class: u8, x: i64, y: i64, w: u32, h: u32, vx: i64, vy: i64, z: i32) -> ObjectSpec {
    ObjectSpec { class, x, y, w, h, vx, vy, z }
}

/// Several rectangles crossing each other on a 6-class canvas.
pub fn crossing_world(noise: f64) -> WorldSpec {
    WorldSpec {
        width: 64,
        height: 48,
        num_classes: 6,
        background_class: 0,
        objects: vec![
            object(1, 5, 5, 20, 14, 2, 1, 1),
            object(2, 40, 20, 16, 16, -2, 0, 2),
            object(3, 0, 30, 30, 10, 1, -1, 0),
            object(4, 30, 0, 8, 40, 0, 1, 3),
        ],
        length: 12,
        seed: 1,
        noise,
        clips: 2,
        domain: Domain::Target,
        split: Split::Val,
    }
}

/// A world where nothing moves.
pub fn static_world() -> WorldSpec {
    WorldSpec {
        width: 24,
        height: 16,
        num_classes: 4,
        background_class: 0,
        objects: vec![object(1, 2, 2, 8, 6, 0, 0, 0), object(3, 12, 6, 9, 8, 0, 0, 1)],
        length: 6,
        seed: 1,
        noise: 0.0,
        clips: 1,
        domain: Domain::Target,
        split: Split::Val,
    }
}

/// Stripes wider than the canvas sliding together, so nothing is ever
/// occluded or disoccluded inside the frame.
pub fn translating_world() -> WorldSpec {
    let objects = (0..40)
        .map(|i| object((i % 5) as u8, -60 + 5 * i as i64, -30, 5, 100, 1, -1, i))
        .collect();
    WorldSpec {
        width: 40,
        height: 30,
        num_classes: 5,
        background_class: 0,
        objects,
        length: 12,
        seed: 1,
        noise: 0.0,
        clips: 1,
        domain: Domain::Target,
        split: Split::Val,
    }
}

pub fn dataset(spec: &WorldSpec, dir: &Path) -> JobConfig {
    emit_dataset(spec, dir).unwrap();
    JobConfig {
        manifest: dir.join("manifest.jsonl"),
        pred_dir: dir.join("preds"),
        conf_dir: Some(dir.join("conf")),
        num_classes: spec.num_classes,
        workers: 1,
        ..JobConfig::default()
    }
}
