//! Pull-based alignment of a frame `t+k` raster onto frame `t`.
//!
//! Every output pixel `(x, y)` gathers from the source raster at
//! `(x + dx, y + dy)`, where `(dx, dy)` is the forward flow `t -> t+k` at
//! `(x, y)`. Pixels whose sample location falls outside the source are
//! marked invalid and filled with [`IGNORE`] (labels) or `0.0` (reals).

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::raster::{ensure_same_dims, Dims, FlowField, LabelMap, LogitVolume, ScalarPlane, ValidityMask, IGNORE};

/// Sampling rule for real-valued rasters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Nearest,
    Bilinear,
}

/// A warped payload together with the pixels where the sample was in bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult<T> {
    pub payload: T,
    pub validity: ValidityMask,
}

/// Nearest source index for output pixel `i`, or `None` when out of bounds.
/// Rounds half away from zero.
#[inline]
fn nearest_index(flow: &FlowField, i: usize) -> Option<usize> {
    let (w, h) = flow.dims();
    let x = (i % w) as f64 + flow.dx()[i] as f64;
    let y = (i / w) as f64 + flow.dy()[i] as f64;
    let (sx, sy) = (x.round(), y.round());
    if sx >= 0.0 && sy >= 0.0 && sx < w as f64 && sy < h as f64 {
        Some(sy as usize * w + sx as usize)
    } else {
        None
    }
}

/// Per-pixel nearest source indices; the validity mask is derived from it.
pub(crate) fn nearest_indices(flow: &FlowField) -> Vec<Option<usize>> {
    (0..flow.len()).map(|i| nearest_index(flow, i)).collect()
}

fn mask_from(width: usize, height: usize, src: &[Option<usize>]) -> ValidityMask {
    ValidityMask::from_valid(width, height, src.iter().map(Option::is_some).collect())
}

/// Warps a label map with nearest-neighbour sampling.
pub fn propagate_labels(labels: &LabelMap, flow: &FlowField) -> Result<WarpResult<LabelMap>> {
    ensure_same_dims(labels, flow, "propagate_labels")?;
    let (w, h) = labels.dims();
    let src = labels.data();
    let mut data = Vec::with_capacity(src.len());
    let mut valid = Vec::with_capacity(src.len());
    for i in 0..src.len() {
        match nearest_index(flow, i) {
            Some(j) => {
                data.push(src[j]);
                valid.push(true);
            }
            None => {
                data.push(IGNORE);
                valid.push(false);
            }
        }
    }
    Ok(WarpResult {
        payload: LabelMap::from_valid(w, h, data, labels.class_space()),
        validity: ValidityMask::from_valid(w, h, valid),
    })
}

/// Bilinear sample of `plane` at `(x, y)`. The four neighbours are the
/// floor and ceiling of each coordinate, so integral positions touch a
/// single pixel.
fn bilinear_sample(plane: &ScalarPlane, x: f64, y: f64) -> Option<f32> {
    let (w, h) = plane.dims();
    let (x0, y0) = (x.floor(), y.floor());
    let (x1, y1) = (x.ceil(), y.ceil());
    if x0 < 0.0 || y0 < 0.0 || x1 >= w as f64 || y1 >= h as f64 {
        return None;
    }
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0, x1, y1) = (x0 as usize, y0 as usize, x1 as usize, y1 as usize);
    let v = |xx: usize, yy: usize| plane.data()[yy * w + xx] as f64;
    let top = lerp(v(x0, y0), v(x1, y0), fx);
    let bottom = lerp(v(x0, y1), v(x1, y1), fx);
    Some(lerp(top, bottom, fy) as f32)
}

/// `a + t (b - a)`: exact when `a == b` and when `t == 0`.
#[inline]
pub(crate) fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Warps a real-valued plane.
pub fn propagate_plane(plane: &ScalarPlane, flow: &FlowField, mode: Sampling) -> Result<WarpResult<ScalarPlane>> {
    ensure_same_dims(plane, flow, "propagate_plane")?;
    let (w, h) = plane.dims();
    let (data, valid): (Vec<f32>, Vec<bool>) = match mode {
        Sampling::Nearest => (0..plane.len())
            .map(|i| match nearest_index(flow, i) {
                Some(j) => (plane.data()[j], true),
                None => (0.0, false),
            })
            .unzip(),
        Sampling::Bilinear => (0..plane.len())
            .map(|i| {
                let x = (i % w) as f64 + flow.dx()[i] as f64;
                let y = (i / w) as f64 + flow.dy()[i] as f64;
                match bilinear_sample(plane, x, y) {
                    Some(v) => (v, true),
                    None => (0.0, false),
                }
            })
            .unzip(),
    };
    Ok(WarpResult {
        payload: ScalarPlane::from_valid(w, h, data),
        validity: ValidityMask::from_valid(w, h, valid),
    })
}

/// Warps every channel of a logit volume with nearest-neighbour sampling.
/// All channels share one validity mask.
pub fn propagate_logits(volume: &LogitVolume, flow: &FlowField) -> Result<WarpResult<LogitVolume>> {
    ensure_same_dims(volume, flow, "propagate_logits")?;
    let (w, h) = volume.dims();
    let c = volume.channels();
    let src = nearest_indices(flow);
    let mut data = vec![0.0f32; volume.data().len()];
    for (i, s) in src.iter().enumerate() {
        if let Some(j) = *s {
            data[i * c..(i + 1) * c].copy_from_slice(volume.pixel_at(j));
        }
    }
    Ok(WarpResult {
        payload: LogitVolume::from_valid(w, h, c, data),
        validity: mask_from(w, h, &src),
    })
}
