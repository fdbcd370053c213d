//! Forward evaluation of the adaptation objectives: rare-class sampling,
//! multi-resolution fusion, masked-consistency loss, video-discriminator
//! losses and two-frame logit fusion.
//!
//! Losses are per-pixel means. Pixel reductions go through
//! [`pairwise_sum`] so the summation order is fixed.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, Dims, FlowField, LabelMap, LogitVolume, ScalarPlane, IGNORE};
use crate::warp::{lerp, propagate_logits};

/// Probability clamp for the discriminator losses.
pub const PROB_EPS: f64 = 1e-7;

/// Sum in a fixed binary-tree order.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Per-class pixel frequencies and the sampling temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassFrequencies {
    pub freqs: Vec<f64>,
    pub temperature: f64,
}

/// Rare-class sampling distribution `softmax((1 - f_c) / T)`.
pub fn rcs_distribution(freqs: &ClassFrequencies) -> Result<Vec<f64>> {
    let t = freqs.temperature;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive, got {t}")));
    }
    if freqs.freqs.is_empty() {
        return Err(Error::Parameter("no class frequencies given".into()));
    }
    if let Some(f) = freqs.freqs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Parameter(format!("class frequency {f} outside [0, 1]")));
    }
    let logits: Vec<f64> = freqs.freqs.iter().map(|f| (1.0 - f) / t).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Source coordinate and blend weight for resampling axis position `dst`
/// from `src_len` to `dst_len` samples (half-pixel centres, edge clamped).
fn resample_coord(dst: usize, src_len: usize, dst_len: usize) -> (usize, usize, f64) {
    let scale = src_len as f64 / dst_len as f64;
    let pos = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(src_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Bilinear resize of a `w x h x c` pixel-major buffer.
fn resize_bilinear(data: &[f64], w: usize, h: usize, c: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_w * out_h * c];
    for oy in 0..out_h {
        let (y0, y1, fy) = resample_coord(oy, h, out_h);
        for ox in 0..out_w {
            let (x0, x1, fx) = resample_coord(ox, w, out_w);
            for ch in 0..c {
                let v = |x: usize, y: usize| data[(y * w + x) * c + ch];
                let top = lerp(v(x0, y0), v(x1, y0), fx);
                let bottom = lerp(v(x0, y1), v(x1, y1), fx);
                out[(oy * out_w + ox) * c + ch] = lerp(top, bottom, fy);
            }
        }
    }
    out
}

fn scaled_dims(w: usize, h: usize, scale: f64) -> Result<(usize, usize)> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Parameter(format!("scale must be positive, got {scale}")));
    }
    let ow = (w as f64 * scale).round() as usize;
    let oh = (h as f64 * scale).round() as usize;
    if ow == 0 || oh == 0 {
        return Err(Error::shape(format!("scale {scale} collapses {w}x{h}")));
    }
    Ok((ow, oh))
}

/// Upsamples a logit volume by `scale` with bilinear interpolation.
pub fn upsample(volume: &LogitVolume, scale: f64) -> Result<LogitVolume> {
    let (w, h) = volume.dims();
    let (ow, oh) = scaled_dims(w, h, scale)?;
    let data: Vec<f64> = volume.data().iter().map(|&v| v as f64).collect();
    let out = resize_bilinear(&data, w, h, volume.channels(), ow, oh);
    Ok(LogitVolume::from_valid(ow, oh, volume.channels(), out.into_iter().map(|v| v as f32).collect()))
}

/// Multi-resolution fusion `up((1 - a) * context) + up(a) * detail`.
///
/// `context` and `attention` live at the low resolution; `detail` at the
/// resolution reached by scaling them by `scale`.
pub fn mrfusion_fuse(
    context: &LogitVolume,
    detail: &LogitVolume,
    attention: &ScalarPlane,
    scale: f64,
) -> Result<LogitVolume> {
    ensure_same_dims(context, attention, "mrfusion context vs attention")?;
    attention.check_unit_range("attention")?;
    if context.channels() != detail.channels() {
        return Err(Error::shape(format!(
            "mrfusion: context has {} channels, detail {}",
            context.channels(),
            detail.channels()
        )));
    }
    let (w, h) = context.dims();
    let (ow, oh) = scaled_dims(w, h, scale)?;
    if (ow, oh) != detail.dims() {
        return Err(Error::shape(format!(
            "mrfusion: context {w}x{h} scaled by {scale} is {ow}x{oh}, detail is {}x{}",
            detail.width(),
            detail.height()
        )));
    }
    let c = context.channels();
    let gated: Vec<f64> = context
        .data()
        .chunks_exact(c)
        .zip(attention.data())
        .flat_map(|(px, &a)| px.iter().map(move |&v| (1.0 - a as f64) * v as f64))
        .collect();
    let gated = resize_bilinear(&gated, w, h, c, ow, oh);
    let att: Vec<f64> = attention.data().iter().map(|&a| a as f64).collect();
    let att = resize_bilinear(&att, w, h, 1, ow, oh);
    let out = (0..ow * oh)
        .flat_map(|i| {
            let (gated, att) = (&gated, &att);
            detail
                .pixel_at(i)
                .iter()
                .enumerate()
                .map(move |(ch, &d)| (gated[i * c + ch] + att[i] * d as f64) as f32)
        })
        .collect();
    LogitVolume::new(ow, oh, c, out)
}

fn cross_entropy(logits: &[f32], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = max + logits.iter().map(|&l| (l as f64 - max).exp()).sum::<f64>().ln();
    lse - logits[label] as f64
}

/// Weighted cross-entropy between masked-image logits and pseudo-labels,
/// averaged over non-ignore pixels.
pub fn mic_loss(masked_logits: &LogitVolume, pseudo_label: &LabelMap, weight: &ScalarPlane) -> Result<f64> {
    ensure_same_dims(masked_logits, pseudo_label, "mic_loss logits vs labels")?;
    ensure_same_dims(masked_logits, weight, "mic_loss logits vs weight")?;
    weight.check_unit_range("pseudo weight")?;
    let k = pseudo_label.class_space().num_classes() as usize;
    if masked_logits.channels() != k {
        return Err(Error::shape(format!(
            "mic_loss: {} logit channels for {k} classes",
            masked_logits.channels()
        )));
    }
    let terms: Vec<f64> = pseudo_label
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l != IGNORE)
        .map(|(i, &l)| weight.data()[i] as f64 * cross_entropy(masked_logits.pixel_at(i), l as usize))
        .collect();
    if terms.is_empty() {
        return Err(Error::UndefinedLoss);
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

fn clamp_prob(p: f32) -> Result<f64> {
    if !p.is_finite() {
        return Err(Error::Data(format!("discriminator output {p} is not finite")));
    }
    Ok((p as f64).clamp(PROB_EPS, 1.0 - PROB_EPS))
}

/// Mean of `term(p)` over every pixel of every plane.
fn mean_over(planes: &[ScalarPlane], term: impl Fn(f64) -> f64) -> Result<f64> {
    let mut terms = Vec::with_capacity(planes.iter().map(|p| p.len()).sum());
    for plane in planes {
        for &p in plane.data() {
            terms.push(term(clamp_prob(p)?));
        }
    }
    if terms.is_empty() {
        return Err(Error::Parameter("no discriminator outputs given".into()));
    }
    Ok(pairwise_sum(&terms) / terms.len() as f64)
}

/// Discriminator loss: source outputs should be 1, target outputs 0.
/// Each domain contributes the mean over its pixels.
pub fn video_disc_loss_d(d_src: &[ScalarPlane], d_tgt: &[ScalarPlane]) -> Result<f64> {
    Ok(mean_over(d_src, |p| -p.ln())? + mean_over(d_tgt, |p| -(1.0 - p).ln())?)
}

/// Feature-extractor loss: target outputs should fool the discriminator.
pub fn video_disc_loss_f(d_tgt: &[ScalarPlane]) -> Result<f64> {
    mean_over(d_tgt, |p| -p.ln())
}

/// Parameters of a 1x1 convolution from `c_in` to `c_out` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    c_out: usize,
    c_in: usize,
    /// Row-major `c_out x c_in`.
    weights: Vec<f32>,
    bias: Option<Vec<f32>>,
}

impl FusionWeights {
    pub fn new(c_out: usize, c_in: usize, weights: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        if c_out == 0 || c_in == 0 || weights.len() != c_out * c_in {
            return Err(Error::shape(format!(
                "fusion weights: {c_out}x{c_in} needs {} values, got {}",
                c_out * c_in,
                weights.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != c_out {
                return Err(Error::shape(format!("fusion bias needs {c_out} values, got {}", b.len())));
            }
        }
        if weights.iter().chain(bias.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Data("fusion weights contain non-finite values".into()));
        }
        Ok(FusionWeights {
            c_out,
            c_in,
            weights,
            bias,
        })
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    fn bias_of(&self, out_channel: usize) -> f64 {
        self.bias.as_ref().map_or(0.0, |b| b[out_channel] as f64)
    }

    /// Encodes as three little-endian `i32` (`c_out`, `c_in`, `has_bias`)
    /// followed by little-endian `f32` weights and, if present, bias.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * (self.weights.len() + self.c_out));
        for v in [self.c_out as i32, self.c_in as i32, self.bias.is_some() as i32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.weights {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.bias.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Length {
                expected: 12,
                actual: bytes.len() as u64,
            });
        }
        let int = |i: usize| i32::from_le_bytes(bytes[i * 4..i * 4 + 4].try_into().unwrap());
        let (c_out, c_in, has_bias) = (int(0), int(1), int(2));
        if c_out <= 0 || c_in <= 0 || !(0..=1).contains(&has_bias) {
            return Err(Error::Format(format!(
                "fusion weight header ({c_out}, {c_in}, {has_bias}) is invalid"
            )));
        }
        let (c_out, c_in) = (c_out as usize, c_in as usize);
        let n = c_out * c_in + if has_bias == 1 { c_out } else { 0 };
        let expected = 12 + 4 * n as u64;
        if bytes.len() as u64 != expected {
            return Err(Error::Length {
                expected,
                actual: bytes.len() as u64,
            });
        }
        let floats: Vec<f32> = bytes[12..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (weights, bias) = floats.split_at(c_out * c_in);
        Self::new(c_out, c_in, weights.to_vec(), (has_bias == 1).then(|| bias.to_vec()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::from(e).at(path))?;
        Self::from_bytes(&bytes).map_err(|e| e.at(path))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::from(e).at(path))
    }
}

/// Two-frame fusion: warp `logits_tpk` onto frame `t`, stack it after
/// `logits_t` and apply the 1x1 convolution `w`. Where the warp leaves the
/// frame, the stacked half repeats `logits_t`.
pub fn accel_fuse(
    logits_t: &LogitVolume,
    logits_tpk: &LogitVolume,
    flow: &FlowField,
    w: &FusionWeights,
) -> Result<LogitVolume> {
    ensure_same_dims(logits_t, logits_tpk, "accel_fuse")?;
    let c = logits_t.channels();
    if logits_tpk.channels() != c {
        return Err(Error::shape(format!(
            "accel_fuse: {c} vs {} channels",
            logits_tpk.channels()
        )));
    }
    if w.c_in != 2 * c || w.c_out != c {
        return Err(Error::shape(format!(
            "accel_fuse: weights are {}x{}, need {c}x{}",
            w.c_out,
            w.c_in,
            2 * c
        )));
    }
    let warped = propagate_logits(logits_tpk, flow)?;
    let mut stacked = vec![0.0f64; 2 * c];
    let mut out = Vec::with_capacity(logits_t.data().len());
    for i in 0..logits_t.len() {
        let cur = logits_t.pixel_at(i);
        let other = if warped.validity.data()[i] {
            warped.payload.pixel_at(i)
        } else {
            cur
        };
        for ch in 0..c {
            stacked[ch] = cur[ch] as f64;
            stacked[c + ch] = other[ch] as f64;
        }
        for o in 0..c {
            let row = &w.weights[o * w.c_in..(o + 1) * w.c_in];
            let acc = row.iter().zip(&stacked).fold(w.bias_of(o), |s, (&wt, &x)| s + wt as f64 * x);
            out.push(acc as f32);
        }
    }
    LogitVolume::new(logits_t.width(), logits_t.height(), c, out)
}
