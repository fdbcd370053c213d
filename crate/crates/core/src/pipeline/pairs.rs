use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_flo, DatasetManifest, ManifestRecord};
use crate::raster::{ensure_same_dims, Dims, FlowField};
use crate::warp::nearest_indices;

/// Where the flow `t -> t+k` of a pair comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FlowSource {
    /// A single file holding `t -> t+k`.
    Direct(PathBuf),
    /// Unit-step files `t -> t±1 -> ... -> t+k`, in hop order.
    Composed(Vec<PathBuf>),
}

impl FlowSource {
    pub fn load(&self) -> Result<FlowField> {
        match self {
            FlowSource::Direct(p) => read_flo(p),
            FlowSource::Composed(paths) => {
                let steps = paths.iter().map(read_flo).collect::<Result<Vec<_>>>()?;
                compose_flows(&steps)
            }
        }
    }

    pub fn kind(&self) -> FlowKind {
        match self {
            FlowSource::Direct(_) => FlowKind::Direct,
            FlowSource::Composed(_) => FlowKind::Composed,
        }
    }
}

/// How the flow of a job was obtained, as recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    /// The job read no flow.
    None,
    Direct,
    Composed,
    /// Some pairs used direct flow and some composed flow.
    Mixed,
    /// Flow was needed but no pair had any.
    Absent,
}

impl FlowKind {
    pub fn name(self) -> &'static str {
        match self {
            FlowKind::None => "none",
            FlowKind::Direct => "direct",
            FlowKind::Composed => "composed",
            FlowKind::Mixed => "mixed",
            FlowKind::Absent => "absent",
        }
    }

    /// Aggregate kind over a set of pairs.
    pub fn of<'a>(sources: impl IntoIterator<Item = &'a FlowSource>) -> FlowKind {
        let mut kind = FlowKind::Absent;
        for s in sources {
            kind = match (kind, s.kind()) {
                (FlowKind::Absent, k) => k,
                (a, b) if a == b => a,
                _ => FlowKind::Mixed,
            };
        }
        kind
    }
}

/// Frame `t` and its partner `t + k` in the same clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePair {
    pub clip_id: String,
    pub t: u32,
    pub k: i32,
    pub flow: FlowSource,
    /// Resolved ground-truth label path of frame `t`, if any.
    pub gt_t: Option<PathBuf>,
}

impl FramePair {
    pub fn partner(&self) -> u32 {
        (self.t as i64 + self.k as i64) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    /// Frame `t + k` is not in the clip.
    NoPartner,
    /// Neither a direct flow nor a complete chain of unit flows exists.
    NoFlow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub clip_id: String,
    pub t: u32,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSet {
    pub pairs: Vec<FramePair>,
    pub skipped: Vec<Skip>,
}

impl PairSet {
    pub fn flow_kind(&self) -> FlowKind {
        FlowKind::of(self.pairs.iter().map(|p| &p.flow))
    }
}

/// Pairs every labeled frame with the frame `k` steps away.
pub fn enumerate_pairs(manifest: &DatasetManifest, k: i32) -> Result<PairSet> {
    enumerate_pairs_from(manifest, k, |r| r.label_path.is_some())
}

/// Pairs every record accepted by `anchor` with the frame `k` steps away,
/// in clip-then-frame order. A direct `t -> t+k` flow wins over a chain of
/// unit-step flows.
pub fn enumerate_pairs_from(
    manifest: &DatasetManifest,
    k: i32,
    anchor: impl Fn(&ManifestRecord) -> bool,
) -> Result<PairSet> {
    if k == 0 {
        return Err(Error::Parameter("frame distance k must be nonzero".into()));
    }
    let mut set = PairSet::default();
    for record in manifest.records().iter().filter(|r| anchor(r)) {
        let (clip, t) = (&record.clip_id, record.frame_index);
        let skip = |reason| Skip {
            clip_id: clip.clone(),
            t,
            reason,
        };
        let partner = t as i64 + k as i64;
        if partner < 0 || partner > u32::MAX as i64 || manifest.get(clip, partner as u32).is_none() {
            set.skipped.push(skip(SkipReason::NoPartner));
            continue;
        }
        let Some(flow) = flow_source(manifest, record, k) else {
            set.skipped.push(skip(SkipReason::NoFlow));
            continue;
        };
        set.pairs.push(FramePair {
            clip_id: clip.clone(),
            t,
            k,
            flow,
            gt_t: record.label_path.as_deref().map(|p| manifest.resolve(p)),
        });
    }
    Ok(set)
}

fn flow_source(manifest: &DatasetManifest, record: &ManifestRecord, k: i32) -> Option<FlowSource> {
    if let Some(p) = record.flow_path(k) {
        return Some(FlowSource::Direct(manifest.resolve(p)));
    }
    let step = k.signum();
    let mut chain = Vec::with_capacity(k.unsigned_abs() as usize);
    for hop in 0..k.abs() {
        let frame = record.frame_index as i64 + (hop * step) as i64;
        let r = manifest.get(&record.clip_id, u32::try_from(frame).ok()?)?;
        chain.push(manifest.resolve(r.flow_path(step)?));
    }
    Some(FlowSource::Composed(chain))
}

/// Chains unit-step flows by following each pixel's trajectory with
/// nearest-neighbour lookups. A pixel whose trajectory leaves the frame
/// before the last hop receives a displacement of `-(w + h + 1)` on both
/// axes, which every warp treats as out of bounds.
pub fn compose_flows(steps: &[FlowField]) -> Result<FlowField> {
    let Some(first) = steps.first() else {
        return Err(Error::Parameter("no flow to compose".into()));
    };
    let (w, h) = first.dims();
    let sentinel = -((w + h + 1) as f32);
    let mut dx = first.dx().to_vec();
    let mut dy = first.dy().to_vec();
    let mut lost = vec![false; w * h];
    for next in &steps[1..] {
        ensure_same_dims(first, next, "compose_flows")?;
        let current = FlowField::new(w, h, dx.clone(), dy.clone())?;
        for (i, src) in nearest_indices(&current).into_iter().enumerate() {
            if lost[i] {
                continue;
            }
            match src {
                Some(j) => {
                    dx[i] += next.dx()[j];
                    dy[i] += next.dy()[j];
                }
                None => lost[i] = true,
            }
        }
    }
    for (i, gone) in lost.into_iter().enumerate() {
        if gone {
            dx[i] = sentinel;
            dy[i] = sentinel;
        }
    }
    FlowField::new(w, h, dx, dy)
}
