//! Shared raster types.
//!
//! All rasters are row-major with a top-left origin: `x` grows rightward,
//! `y` grows downward, and pixel `(x, y)` lives at index `y * width + x`.
//! Values are immutable after construction; every constructor validates its
//! contents so downstream code can index without re-checking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label value excluded from every loss and metric.
pub const IGNORE: u8 = 255;

/// Size of the label space. Valid labels are `0..num_classes`; [`IGNORE`]
/// is always accepted as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ClassSpace {
    num_classes: u8,
}

impl ClassSpace {
    pub const MAX_CLASSES: u8 = 254;

    pub fn new(num_classes: u8) -> Result<Self> {
        if num_classes == 0 || num_classes > Self::MAX_CLASSES {
            return Err(Error::ClassSpace(format!(
                "num_classes must be in 1..={}, got {num_classes}",
                Self::MAX_CLASSES
            )));
        }
        Ok(ClassSpace { num_classes })
    }

    pub fn num_classes(self) -> u8 {
        self.num_classes
    }

    pub fn ignore_value(self) -> u8 {
        IGNORE
    }

    /// True for a real class of this space (never for [`IGNORE`]).
    pub fn is_class(self, value: u8) -> bool {
        value < self.num_classes
    }

    /// True for a real class or the ignore sentinel.
    pub fn accepts(self, value: u8) -> bool {
        value == IGNORE || self.is_class(value)
    }

    pub fn check(self, value: u8) -> Result<()> {
        if self.accepts(value) {
            Ok(())
        } else {
            Err(Error::InvalidLabel {
                value,
                num_classes: self.num_classes,
            })
        }
    }
}

impl TryFrom<u8> for ClassSpace {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        ClassSpace::new(value)
    }
}

impl From<ClassSpace> for u8 {
    fn from(space: ClassSpace) -> u8 {
        space.num_classes
    }
}

fn check_dims(width: usize, height: usize, len: usize, what: &str) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::shape(format!(
            "{what} dimensions must be positive, got {width}x{height}"
        )));
    }
    match width.checked_mul(height) {
        Some(n) if n == len => Ok(()),
        _ => Err(Error::shape(format!(
            "{what} of {width}x{height} needs {} values, got {len}",
            width.saturating_mul(height)
        ))),
    }
}

fn check_finite(data: &[f32], what: &str) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::Data(format!(
            "{what} holds non-finite value {} at index {i}",
            data[i]
        ))),
    }
}

/// Anything with a width and height.
pub trait Dims {
    fn width(&self) -> usize;
    fn height(&self) -> usize;

    fn dims(&self) -> (usize, usize) {
        (self.width(), self.height())
    }

    fn len(&self) -> usize {
        self.width() * self.height()
    }

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

macro_rules! impl_dims {
    ($($ty:ty),*) => {
        $(impl Dims for $ty {
            fn width(&self) -> usize { self.width }
            fn height(&self) -> usize { self.height }
        })*
    };
}

impl_dims!(LabelMap, FlowField, ScalarPlane, LogitVolume, ValidityMask, RgbImage);

/// Fails with a shape error unless both rasters have the same dimensions.
pub fn ensure_same_dims(a: &impl Dims, b: &impl Dims, what: &str) -> Result<()> {
    if a.dims() == b.dims() {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

/// Per-pixel class IDs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u8>,
    class_space: ClassSpace,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, data: Vec<u8>, class_space: ClassSpace) -> Result<Self> {
        check_dims(width, height, data.len(), "label map")?;
        if let Some(&bad) = data.iter().find(|&&v| !class_space.accepts(v)) {
            class_space.check(bad)?;
        }
        Ok(LabelMap {
            width,
            height,
            data,
            class_space,
        })
    }

    /// A map with every pixel set to `fill`.
    pub fn filled(width: usize, height: usize, fill: u8, class_space: ClassSpace) -> Result<Self> {
        class_space.check(fill)?;
        Self::new(width, height, vec![fill; width.saturating_mul(height)], class_space)
    }

    /// Builds a map whose contents are already known to be valid.
    pub(crate) fn from_valid(width: usize, height: usize, data: Vec<u8>, class_space: ClassSpace) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|&v| class_space.accepts(v)));
        LabelMap {
            width,
            height,
            data,
            class_space,
        }
    }

    pub fn class_space(&self) -> ClassSpace {
        self.class_space
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    /// Distinct non-ignore labels present, ascending.
    pub fn classes_present(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &v in &self.data {
            seen[v as usize] = true;
        }
        (0..self.class_space.num_classes())
            .filter(|&c| seen[c as usize])
            .collect()
    }
}

/// Constant label map; see [`LabelMap::filled`].
pub fn make_label_map(width: usize, height: usize, fill: u8, class_space: ClassSpace) -> Result<LabelMap> {
    LabelMap::filled(width, height, fill, class_space)
}

/// Replaces every pixel where `mask` is false with [`IGNORE`].
pub fn apply_mask(labels: &LabelMap, mask: &ValidityMask) -> Result<LabelMap> {
    ensure_same_dims(labels, mask, "apply_mask")?;
    let data = labels
        .data
        .iter()
        .zip(&mask.data)
        .map(|(&v, &ok)| if ok { v } else { IGNORE })
        .collect();
    Ok(LabelMap::from_valid(labels.width, labels.height, data, labels.class_space))
}

/// Dense forward optical flow in pixels. `dx` is rightward, `dy` downward.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    dx: Vec<f32>,
    dy: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, dx: Vec<f32>, dy: Vec<f32>) -> Result<Self> {
        check_dims(width, height, dx.len(), "flow dx")?;
        check_dims(width, height, dy.len(), "flow dy")?;
        check_finite(&dx, "flow dx")?;
        check_finite(&dy, "flow dy")?;
        Ok(FlowField { width, height, dx, dy })
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        let n = width.saturating_mul(height);
        Self::new(width, height, vec![0.0; n], vec![0.0; n])
    }

    /// The same displacement at every pixel.
    pub fn uniform(width: usize, height: usize, dx: f32, dy: f32) -> Result<Self> {
        let n = width.saturating_mul(height);
        Self::new(width, height, vec![dx; n], vec![dy; n])
    }

    pub fn dx(&self) -> &[f32] {
        &self.dx
    }

    pub fn dy(&self) -> &[f32] {
        &self.dy
    }

    pub fn get(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.dx[i], self.dy[i])
    }

    pub fn into_parts(self) -> (Vec<f32>, Vec<f32>) {
        (self.dx, self.dy)
    }
}

/// One real value per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarPlane {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl ScalarPlane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        check_dims(width, height, data.len(), "scalar plane")?;
        check_finite(&data, "scalar plane")?;
        Ok(ScalarPlane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width.saturating_mul(height)])
    }

    pub(crate) fn from_valid(width: usize, height: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        ScalarPlane { width, height, data }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Fails unless every value lies in `[0, 1]`, as confidences and
    /// attention maps must.
    pub fn check_unit_range(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            None => Ok(()),
            Some(i) => Err(Error::Data(format!(
                "{what} value {} at index {i} is outside [0, 1]",
                self.data[i]
            ))),
        }
    }
}

/// Per-pixel class logits, stored pixel-major (`H x W x C`).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVolume {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl LogitVolume {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::shape("logit volume needs at least one channel"));
        }
        check_dims(width, height, data.len() / channels, "logit volume")?;
        if data.len() != width * height * channels {
            return Err(Error::shape(format!(
                "logit volume of {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        check_finite(&data, "logit volume")?;
        Ok(LogitVolume {
            width,
            height,
            channels,
            data,
        })
    }

    /// Stacks planes as channels, in order.
    pub fn from_planes(planes: &[ScalarPlane]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::shape("logit volume needs at least one channel"))?;
        for p in planes {
            ensure_same_dims(first, p, "stacking planes")?;
        }
        let c = planes.len();
        let mut data = vec![0.0; first.len() * c];
        for (ch, p) in planes.iter().enumerate() {
            for (i, &v) in p.data.iter().enumerate() {
                data[i * c + ch] = v;
            }
        }
        Ok(LogitVolume {
            width: first.width,
            height: first.height,
            channels: c,
            data,
        })
    }

    pub(crate) fn from_valid(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        LogitVolume {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The logits of one pixel.
    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub(crate) fn pixel_at(&self, index: usize) -> &[f32] {
        let i = index * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn channel(&self, c: usize) -> ScalarPlane {
        assert!(c < self.channels, "channel {c} out of range");
        let data = self.data.iter().skip(c).step_by(self.channels).copied().collect();
        ScalarPlane::from_valid(self.width, self.height, data)
    }
}

/// Per-pixel validity flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height, data.len(), "validity mask")?;
        Ok(ValidityMask { width, height, data })
    }

    pub fn all_valid(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width.saturating_mul(height)])
    }

    pub(crate) fn from_valid(width: usize, height: usize, data: Vec<bool>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        ValidityMask { width, height, data }
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn all(&self) -> bool {
        self.data.iter().all(|&v| v)
    }
}

/// 8-bit RGB image, passed through class-mix untouched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        check_dims(width, height, data.len(), "image")?;
        Ok(RgbImage { width, height, data })
    }

    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![color; width.saturating_mul(height)])
    }

    pub fn data(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }
}
