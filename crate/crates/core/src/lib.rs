//! Optical-flow label propagation, pseudo-label refinement and temporal
//! consistency metrics for video semantic segmentation.
//!
//! Rasters are row-major with a top-left origin. Label value 255 marks an
//! ignored pixel.

pub mod damath;
pub mod error;
pub mod io;
pub mod metrics;
pub mod mix;
pub mod pipeline;
pub mod raster;
pub mod refine;
pub mod synth;
pub mod warp;

pub use error::{Error, Result};
pub use raster::{
    apply_mask, make_label_map, ClassSpace, Dims, FlowField, LabelMap, LogitVolume, RgbImage, ScalarPlane,
    ValidityMask, IGNORE,
};
