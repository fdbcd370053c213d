//! Pseudo-label refinement from a neighbouring frame.
//!
//! Each strategy takes the current pseudo-label `pl_t` and, depending on the
//! strategy, the neighbouring pseudo-label `pl_tpk`, top-1 confidences for
//! both, the forward flow `t -> t+k`, or the ground truth. Rejected pixels
//! are set to [`IGNORE`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{ensure_same_dims, Dims, FlowField, LabelMap, ScalarPlane, IGNORE};
use crate::warp::{propagate_labels, propagate_plane, Sampling};

/// Which refinement to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Keep pixels where the current and warped neighbouring labels agree.
    Consistency,
    /// Per pixel, keep whichever of the two labels is more confident.
    MaxConfidence,
    /// Replace the label with the warped label of frame `t+k`, `k > 0`.
    WarpForward,
    /// Replace the label with the warped label of frame `t-k`, `k > 0`.
    WarpBackward,
    /// Keep pixels that match the ground truth.
    Oracle,
    /// Pass the pseudo-label through untouched.
    None,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::Consistency,
        Strategy::MaxConfidence,
        Strategy::WarpForward,
        Strategy::WarpBackward,
        Strategy::Oracle,
        Strategy::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Consistency => "consistency",
            Strategy::MaxConfidence => "max_confidence",
            Strategy::WarpForward => "warp_forward",
            Strategy::WarpBackward => "warp_backward",
            Strategy::Oracle => "oracle",
            Strategy::None => "none",
        }
    }

    /// True when the strategy reads a neighbouring frame through flow.
    pub fn uses_flow(self) -> bool {
        matches!(
            self,
            Strategy::Consistency | Strategy::MaxConfidence | Strategy::WarpForward | Strategy::WarpBackward
        )
    }

    pub fn needs_confidence(self) -> bool {
        self == Strategy::MaxConfidence
    }

    /// The signed frame distance the strategy reads for a requested
    /// distance. Warp strategies fix the sign; the others use it as given.
    pub fn signed_distance(self, k: i32) -> i32 {
        match self {
            Strategy::WarpForward => k.abs(),
            Strategy::WarpBackward => -k.abs(),
            _ => k,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown strategy {s:?}")))
    }
}

/// Everything a strategy may read. Only `pl_t` is always required.
#[derive(Debug, Clone, Default)]
pub struct RefineInput<'a> {
    pub pl_t: Option<&'a LabelMap>,
    pub pl_tpk: Option<&'a LabelMap>,
    pub conf_t: Option<&'a ScalarPlane>,
    pub conf_tpk: Option<&'a ScalarPlane>,
    pub flow: Option<&'a FlowField>,
    pub gt_t: Option<&'a LabelMap>,
}

impl<'a> RefineInput<'a> {
    pub fn new(pl_t: &'a LabelMap) -> Self {
        RefineInput {
            pl_t: Some(pl_t),
            ..Default::default()
        }
    }
}

fn need<T>(v: Option<T>, what: &'static str) -> Result<T> {
    v.ok_or(Error::MissingInput(what))
}

/// Applies `strategy` to whatever `input` supplies.
pub fn refine(strategy: Strategy, input: &RefineInput<'_>) -> Result<LabelMap> {
    let pl_t = need(input.pl_t, "pl_t")?;
    match strategy {
        Strategy::Consistency => refine_consistency(
            pl_t,
            need(input.pl_tpk, "pl_tpk")?,
            need(input.flow, "flow")?,
        ),
        Strategy::MaxConfidence => refine_max_confidence(
            pl_t,
            need(input.conf_t, "conf_t")?,
            need(input.pl_tpk, "pl_tpk")?,
            need(input.conf_tpk, "conf_tpk")?,
            need(input.flow, "flow")?,
        ),
        Strategy::WarpForward | Strategy::WarpBackward => {
            let pl_tpk = need(input.pl_tpk, "pl_tpk")?;
            ensure_same_dims(pl_t, pl_tpk, "refine_warp_frame")?;
            refine_warp_frame(pl_tpk, need(input.flow, "flow")?)
        }
        Strategy::Oracle => refine_oracle(pl_t, need(input.gt_t, "gt_t")?),
        Strategy::None => Ok(pl_t.clone()),
    }
}

fn same_space(a: &LabelMap, b: &LabelMap, what: &str) -> Result<()> {
    ensure_same_dims(a, b, what)?;
    if a.class_space() != b.class_space() {
        return Err(Error::shape(format!(
            "{what}: class spaces differ ({} vs {} classes)",
            a.class_space().num_classes(),
            b.class_space().num_classes()
        )));
    }
    Ok(())
}

/// Keeps `pl_t` where it equals the warped `pl_tpk` at a valid warp
/// location; everything else becomes ignore.
pub fn refine_consistency(pl_t: &LabelMap, pl_tpk: &LabelMap, flow: &FlowField) -> Result<LabelMap> {
    same_space(pl_t, pl_tpk, "refine_consistency")?;
    let warped = propagate_labels(pl_tpk, flow)?;
    // Invalid warps carry IGNORE, and IGNORE never counts as agreement.
    let data = pl_t
        .data()
        .iter()
        .zip(warped.payload.data())
        .map(|(&a, &b)| if a == b && a != IGNORE { a } else { IGNORE })
        .collect();
    Ok(LabelMap::from_valid(pl_t.width(), pl_t.height(), data, pl_t.class_space()))
}

/// Per pixel, keeps `pl_t` when `conf_t >= warp(conf_tpk)` and the warped
/// `pl_tpk` otherwise. Where the warp leaves the frame `pl_t` is kept.
pub fn refine_max_confidence(
    pl_t: &LabelMap,
    conf_t: &ScalarPlane,
    pl_tpk: &LabelMap,
    conf_tpk: &ScalarPlane,
    flow: &FlowField,
) -> Result<LabelMap> {
    same_space(pl_t, pl_tpk, "refine_max_confidence")?;
    ensure_same_dims(pl_t, conf_t, "refine_max_confidence conf_t")?;
    ensure_same_dims(pl_t, conf_tpk, "refine_max_confidence conf_tpk")?;
    conf_t.check_unit_range("conf_t")?;
    conf_tpk.check_unit_range("conf_tpk")?;

    let labels = propagate_labels(pl_tpk, flow)?;
    let conf = propagate_plane(conf_tpk, flow, Sampling::Nearest)?;
    let data = (0..pl_t.len())
        .map(|i| {
            let here = pl_t.data()[i];
            if !labels.validity.data()[i] || conf_t.data()[i] >= conf.payload.data()[i] {
                here
            } else {
                labels.payload.data()[i]
            }
        })
        .collect();
    Ok(LabelMap::from_valid(pl_t.width(), pl_t.height(), data, pl_t.class_space()))
}

/// The warped neighbouring label map, with out-of-frame pixels ignored.
/// Forward or backward refinement depends only on which flow is supplied.
pub fn refine_warp_frame(pl_tpk: &LabelMap, flow: &FlowField) -> Result<LabelMap> {
    Ok(propagate_labels(pl_tpk, flow)?.payload)
}

/// Keeps `pl_t` where it matches a non-ignore ground truth.
pub fn refine_oracle(pl_t: &LabelMap, gt_t: &LabelMap) -> Result<LabelMap> {
    same_space(pl_t, gt_t, "refine_oracle")?;
    let data = pl_t
        .data()
        .iter()
        .zip(gt_t.data())
        .map(|(&p, &g)| if p == g && g != IGNORE { p } else { IGNORE })
        .collect();
    Ok(LabelMap::from_valid(pl_t.width(), pl_t.height(), data, pl_t.class_space()))
}

/// Fraction of pixels that are not ignore.
pub fn retained_fraction(refined: &LabelMap) -> f64 {
    retained_count(refined) as f64 / refined.len() as f64
}

pub(crate) fn retained_count(refined: &LabelMap) -> u64 {
    refined.data().iter().filter(|&&v| v != IGNORE).count() as u64
}
