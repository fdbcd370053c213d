//! Class-mix augmentation and its temporally consistent variant.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, Dims, LabelMap, RgbImage, IGNORE};

/// The classes pasted from the source frame.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixPlan {
    pub classes: BTreeSet<u8>,
    pub seed: u64,
}

impl MixPlan {
    pub fn contains(&self, label: u8) -> bool {
        self.classes.contains(&label)
    }
}

/// Samples `ceil(m / 2)` of the `m` classes present in `y_src`, uniformly
/// and without replacement. The draw depends only on the classes present
/// and the seed.
pub fn select_mix_classes(y_src: &LabelMap, seed: u64) -> Result<MixPlan> {
    let present = y_src.classes_present();
    if present.is_empty() {
        return Err(Error::EmptySource);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = present.len().div_ceil(2);
    let classes = index::sample(&mut rng, present.len(), take)
        .into_iter()
        .map(|i| present[i])
        .collect();
    Ok(MixPlan { classes, seed })
}

/// Pastes every source pixel whose label is in the plan onto the target.
/// Ignore-labelled source pixels are never pasted.
/// Returns the mixed image and the mixed label map.
pub fn classmix(
    img_src: &RgbImage,
    img_tgt: &RgbImage,
    y_src: &LabelMap,
    pl_tgt: &LabelMap,
    plan: &MixPlan,
) -> Result<(RgbImage, LabelMap)> {
    ensure_same_dims(img_src, img_tgt, "classmix images")?;
    ensure_same_dims(img_src, y_src, "classmix source labels")?;
    ensure_same_dims(img_src, pl_tgt, "classmix target labels")?;
    if y_src.class_space() != pl_tgt.class_space() {
        return Err(Error::shape("classmix: source and target class spaces differ"));
    }
    let n = y_src.len();
    let mut image = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = y_src.data()[i];
        if label != IGNORE && plan.contains(label) {
            image.push(img_src.data()[i]);
            labels.push(label);
        } else {
            image.push(img_tgt.data()[i]);
            labels.push(pl_tgt.data()[i]);
        }
    }
    let (w, h) = y_src.dims();
    Ok((
        RgbImage::new(w, h, image)?,
        LabelMap::from_valid(w, h, labels, y_src.class_space()),
    ))
}

/// Source and target inputs for one timestep.
#[derive(Debug, Clone, Copy)]
pub struct MixFrame<'a> {
    pub img_src: &'a RgbImage,
    pub img_tgt: &'a RgbImage,
    pub y_src: &'a LabelMap,
    pub pl_tgt: &'a LabelMap,
}

/// One mixed timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixed {
    pub image: RgbImage,
    pub labels: LabelMap,
}

/// Both mixed timesteps and the single plan they share.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedPair {
    pub t: Mixed,
    pub tpk: Mixed,
    pub plan: MixPlan,
}

/// Mixes frames `t` and `t+k` with the same class set so the pasted
/// regions keep their flow correspondence.
pub fn consistent_classmix_pair(t: MixFrame<'_>, tpk: MixFrame<'_>, plan: &MixPlan) -> Result<MixedPair> {
    let mix = |f: MixFrame<'_>| {
        classmix(f.img_src, f.img_tgt, f.y_src, f.pl_tgt, plan).map(|(image, labels)| Mixed { image, labels })
    };
    Ok(MixedPair {
        t: mix(t)?,
        tpk: mix(tpk)?,
        plan: plan.clone(),
    })
}
