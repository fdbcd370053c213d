use std::fs;
use std::ops::AddAssign;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{decode_label_png, read_bytes, read_label_png, read_pfm, write_bytes, write_label_png};
use crate::io::{DatasetManifest, ManifestRecord};
use crate::metrics::{
    fmt_pct, fmt_ratio, pl_consistency_eval, pl_pred_consis_confusion, pl_warped_confusion, ConfusionMatrix,
    MetricReport, SCHEMA_VERSION,
};
use crate::raster::{ClassSpace, LabelMap, IGNORE};
use crate::refine::{refine, RefineInput, Strategy};

use super::config::JobConfig;
use super::pairs::{enumerate_pairs, enumerate_pairs_from, FlowKind, FramePair, PairSet, Skip};

/// Share of failed frames above which a refinement job fails.
pub const FAILURE_BUDGET: f64 = 0.10;

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    Ok(pool.install(f))
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn record<'m>(manifest: &'m DatasetManifest, clip_id: &str, t: u32) -> &'m ManifestRecord {
    manifest.get(clip_id, t).expect("pairs only name manifest frames")
}

fn load_gt(manifest: &DatasetManifest, record: &ManifestRecord, space: ClassSpace) -> Result<Option<LabelMap>> {
    record
        .label_path
        .as_deref()
        .map(|p| read_label_png(manifest.resolve(p), space))
        .transpose()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub clip_id: String,
    pub frame_index: u32,
    pub error: String,
}

/// Outcome of a refinement job, saved as `report.json` in the output
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub schema_version: u32,
    pub strategy: Strategy,
    /// Signed distance of the neighbouring frame, zero when none is read.
    pub frame_distance: i32,
    pub seed: u64,
    pub flow: FlowKind,
    pub frames_total: usize,
    pub frames_refined: usize,
    pub frames_failed: usize,
    pub skipped: Vec<Skip>,
    pub failures: Vec<FrameFailure>,
    pub pixels: u64,
    pub retained_pixels: u64,
    pub retained_fraction: Option<f64>,
    /// Retained pixels that have a non-ignore ground truth.
    pub scored_pixels: u64,
    pub retained_correct: u64,
    /// Percentage of scored retained pixels equal to the ground truth.
    pub retained_accuracy: Option<f64>,
}

impl RefineReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    pixels: u64,
    retained: u64,
    scored: u64,
    correct: u64,
}

impl AddAssign for Tally {
    fn add_assign(&mut self, o: Tally) {
        self.pixels += o.pixels;
        self.retained += o.retained;
        self.scored += o.scored;
        self.correct += o.correct;
    }
}

fn tally(refined: &LabelMap, gt: Option<&LabelMap>) -> Tally {
    let mut t = Tally {
        pixels: refined.data().len() as u64,
        ..Tally::default()
    };
    for (i, &v) in refined.data().iter().enumerate() {
        if v == IGNORE {
            continue;
        }
        t.retained += 1;
        if let Some(g) = gt.map(|g| g.data()[i]).filter(|&g| g != IGNORE) {
            t.scored += 1;
            t.correct += u64::from(g == v);
        }
    }
    t
}

struct Unit<'m> {
    record: &'m ManifestRecord,
    pair: Option<FramePair>,
}

fn refine_unit(cfg: &JobConfig, space: ClassSpace, manifest: &DatasetManifest, unit: &Unit<'_>) -> Result<Tally> {
    let r = unit.record;
    let pred = cfg.pred_path(&r.clip_id, r.frame_index);
    let out = cfg.out_path(r).expect("validated output directory");
    let gt = load_gt(manifest, r, space)?;

    if cfg.strategy == Strategy::None {
        let bytes = read_bytes(&pred)?;
        let pl_t = decode_label_png(&bytes, space).map_err(|e| e.at(&pred))?;
        write_bytes(&out, &bytes)?;
        return Ok(tally(&pl_t, gt.as_ref()));
    }

    let pl_t = read_label_png(&pred, space)?;
    let mut input = RefineInput::new(&pl_t);
    input.gt_t = gt.as_ref();
    let (pl_tpk, flow, conf_t, conf_tpk);
    if let Some(pair) = &unit.pair {
        pl_tpk = read_label_png(cfg.pred_path(&pair.clip_id, pair.partner()), space)?;
        flow = pair.flow.load()?;
        input.pl_tpk = Some(&pl_tpk);
        input.flow = Some(&flow);
        if cfg.strategy.needs_confidence() {
            conf_t = read_pfm(cfg.conf_path(&r.clip_id, r.frame_index).expect("validated"))?;
            conf_tpk = read_pfm(cfg.conf_path(&pair.clip_id, pair.partner()).expect("validated"))?;
            input.conf_t = Some(&conf_t);
            input.conf_tpk = Some(&conf_tpk);
        }
    }
    let refined = refine(cfg.strategy, &input)?;
    write_label_png(&refined, &out)?;
    Ok(tally(&refined, gt.as_ref()))
}

/// Refines every eligible frame and writes `<out_dir>/<stem>.png` plus
/// `<out_dir>/report.json`.
///
/// Flow strategies refine every frame whose neighbour at the configured
/// distance exists; `warp_backward` reads the neighbour at `-|k|` and
/// `warp_forward` the one at `+|k|`. `oracle` refines labeled frames and
/// `none` copies every prediction byte for byte.
///
/// Unreadable artifacts fail only their frame. When more than
/// [`FAILURE_BUDGET`] of the frames fail the report is still written and
/// [`Error::FailureBudget`] is returned.
pub fn run_refine_job(cfg: &JobConfig) -> Result<RefineReport> {
    cfg.validate_refine()?;
    let space = cfg.class_space()?;
    let manifest = cfg.load_manifest()?;
    let out_dir = cfg.out_dir.as_deref().expect("validated output directory");
    fs::create_dir_all(out_dir).map_err(|e| Error::from(e).at(out_dir))?;

    let strategy = cfg.strategy;
    let k = match strategy {
        Strategy::WarpForward | Strategy::WarpBackward => strategy.signed_distance(cfg.frame_distance),
        s if s.uses_flow() => cfg.frame_distance,
        _ => 0,
    };
    let (units, skipped, flow) = if strategy.uses_flow() {
        let PairSet { pairs, skipped } = enumerate_pairs_from(&manifest, k, |_| true)?;
        let flow = FlowKind::of(pairs.iter().map(|p| &p.flow));
        let units: Vec<Unit> = pairs
            .into_iter()
            .map(|p| Unit {
                record: record(&manifest, &p.clip_id, p.t),
                pair: Some(p),
            })
            .collect();
        (units, skipped, flow)
    } else {
        let keep = |r: &ManifestRecord| strategy != Strategy::Oracle || r.label_path.is_some();
        let units = manifest
            .records()
            .iter()
            .filter(|r| keep(r))
            .map(|record| Unit { record, pair: None })
            .collect();
        (units, Vec::new(), FlowKind::None)
    };

    log::info!("refining {} frames with {strategy} using {} workers", units.len(), cfg.workers);
    let results: Vec<Result<Tally>> = with_pool(cfg.workers, || {
        units
            .par_iter()
            .map(|u| refine_unit(cfg, space, &manifest, u))
            .collect()
    })?;

    let mut total = Tally::default();
    let mut failures = Vec::new();
    for (unit, result) in units.iter().zip(results) {
        match result {
            Ok(t) => total += t,
            Err(e) => {
                log::warn!("{}: {e}", unit.record.stem());
                failures.push(FrameFailure {
                    clip_id: unit.record.clip_id.clone(),
                    frame_index: unit.record.frame_index,
                    error: e.to_string(),
                });
            }
        }
    }
    let frames_total = units.len();
    let report = RefineReport {
        schema_version: SCHEMA_VERSION,
        strategy,
        frame_distance: k,
        seed: cfg.seed,
        flow,
        frames_total,
        frames_refined: frames_total - failures.len(),
        frames_failed: failures.len(),
        skipped,
        failures,
        pixels: total.pixels,
        retained_pixels: total.retained,
        retained_fraction: ratio(total.retained, total.pixels),
        scored_pixels: total.scored,
        retained_correct: total.correct,
        retained_accuracy: ratio(total.correct, total.scored).map(|r| 100.0 * r),
    };
    write_bytes(&out_dir.join("report.json"), report.to_json()?.as_bytes())?;
    if report.frames_failed as f64 > FAILURE_BUDGET * frames_total as f64 {
        return Err(Error::FailureBudget {
            failed: report.frames_failed,
            total: frames_total,
        });
    }
    Ok(report)
}

/// A mergeable partial evaluation, for sharded runs.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPart {
    pub confusion: ConfusionMatrix,
    pub frames_total: usize,
    /// Stems of labeled frames without a prediction, sorted.
    pub missing: Vec<String>,
}

impl EvalPart {
    pub fn merge(&self, other: &EvalPart) -> Result<EvalPart> {
        let mut missing: Vec<String> = self.missing.iter().chain(&other.missing).cloned().collect();
        missing.sort();
        Ok(EvalPart {
            confusion: self.confusion.merge(&other.confusion)?,
            frames_total: self.frames_total + other.frames_total,
            missing,
        })
    }

    pub fn report(&self, universe: &[u8]) -> EvalReport {
        let coverage_warning = self.missing.len();
        if coverage_warning > 0 {
            log::warn!("{coverage_warning} labeled frames have no prediction");
        }
        EvalReport {
            schema_version: SCHEMA_VERSION,
            frames_total: self.frames_total,
            frames_evaluated: self.frames_total - coverage_warning,
            coverage_warning,
            missing: self.missing.clone(),
            metrics: self.confusion.summarize_over(universe),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub frames_total: usize,
    pub frames_evaluated: usize,
    /// Number of labeled frames left out for lack of a prediction.
    pub coverage_warning: usize,
    pub missing: Vec<String>,
    pub metrics: MetricReport,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> Result<String> {
        self.metrics.to_csv()
    }
}

/// Confusion of predictions against labels over the labeled frames of
/// `manifest`.
pub fn eval_part(manifest: &DatasetManifest, cfg: &JobConfig) -> Result<EvalPart> {
    let space = cfg.class_space()?;
    let labeled: Vec<&ManifestRecord> = manifest.records().iter().filter(|r| r.label_path.is_some()).collect();
    let results: Vec<Result<Option<ConfusionMatrix>>> = with_pool(cfg.workers, || {
        labeled
            .par_iter()
            .map(|r| {
                let pred = cfg.pred_path(&r.clip_id, r.frame_index);
                if !pred.exists() {
                    return Ok(None);
                }
                let pred = read_label_png(&pred, space)?;
                let gt = load_gt(manifest, r, space)?.expect("labeled record");
                let mut m = ConfusionMatrix::new(space);
                m.accumulate(&pred, &gt)?;
                Ok(Some(m))
            })
            .collect()
    })?;
    let mut confusion = ConfusionMatrix::new(space);
    let mut missing = Vec::new();
    for (r, result) in labeled.iter().zip(results) {
        match result? {
            Some(m) => confusion.merge_from(&m)?,
            None => missing.push(r.stem()),
        }
    }
    missing.sort();
    Ok(EvalPart {
        confusion,
        frames_total: labeled.len(),
        missing,
    })
}

/// Scores predictions against manifest labels over the class universe.
pub fn run_eval_job(cfg: &JobConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let manifest = cfg.load_manifest()?;
    Ok(eval_part(&manifest, cfg)?.report(&cfg.universe()?))
}

/// The temporal metric computed by [`run_consis_job`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConsisMetric {
    /// Warped `pl_{t+k}` against `pl_t`, over every frame with a neighbour.
    PredConsis,
    /// Warped `pl_{t+k}` against the labels of frame `t`.
    Warped,
    /// Consistency-filtered `pl_t` against the labels of frame `t`.
    Consistency,
}

impl ConsisMetric {
    pub fn name(self) -> &'static str {
        match self {
            ConsisMetric::PredConsis => "predconsis",
            ConsisMetric::Warped => "warped",
            ConsisMetric::Consistency => "consistency",
        }
    }
}

impl std::str::FromStr for ConsisMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predconsis" | "pred_consis" => Ok(ConsisMetric::PredConsis),
            "warped" => Ok(ConsisMetric::Warped),
            "consistency" => Ok(ConsisMetric::Consistency),
            other => Err(Error::Parameter(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsisReport {
    pub schema_version: u32,
    pub metric: ConsisMetric,
    pub frame_distance: i32,
    pub flow: FlowKind,
    pub pairs: usize,
    pub skipped: usize,
    pub metrics: MetricReport,
}

impl ConsisReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn to_csv(&self) -> Result<String> {
        self.metrics.to_csv()
    }
}

#[derive(Debug, Clone)]
struct PairScore {
    warped: ConfusionMatrix,
    consistency: ConfusionMatrix,
    retained: u64,
    pixels: u64,
}

fn score_pair(
    cfg: &JobConfig,
    space: ClassSpace,
    pair: &FramePair,
    need: impl Fn(ConsisMetric) -> bool,
) -> Result<PairScore> {
    let pl_t = read_label_png(cfg.pred_path(&pair.clip_id, pair.t), space)?;
    let pl_tpk = read_label_png(cfg.pred_path(&pair.clip_id, pair.partner()), space)?;
    let flow = pair.flow.load()?;
    let mut score = PairScore {
        warped: ConfusionMatrix::new(space),
        consistency: ConfusionMatrix::new(space),
        retained: 0,
        pixels: 0,
    };
    if need(ConsisMetric::PredConsis) {
        score.warped = pl_pred_consis_confusion(&pl_t, &pl_tpk, &flow)?;
        return Ok(score);
    }
    let gt_path = pair.gt_t.as_deref().ok_or(Error::MissingInput("gt_t"))?;
    let gt = read_label_png(gt_path, space)?;
    if need(ConsisMetric::Warped) {
        score.warped = pl_warped_confusion(&pl_tpk, &flow, &gt)?;
    }
    if need(ConsisMetric::Consistency) {
        let eval = pl_consistency_eval(&pl_t, &pl_tpk, &flow, &gt)?;
        score.consistency = eval.confusion;
        score.retained = eval.retained;
        score.pixels = eval.pixels;
    }
    Ok(score)
}

/// Scores every pair in order, then sums the scores. The first failing
/// pair, in pair order, fails the whole call.
fn score_pairs(
    cfg: &JobConfig,
    pairs: &[FramePair],
    need: impl Fn(ConsisMetric) -> bool + Sync,
) -> Result<PairScore> {
    let space = cfg.class_space()?;
    let results: Vec<Result<PairScore>> = with_pool(cfg.workers, || {
        pairs.par_iter().map(|p| score_pair(cfg, space, p, &need)).collect()
    })?;
    let mut total = PairScore {
        warped: ConfusionMatrix::new(space),
        consistency: ConfusionMatrix::new(space),
        retained: 0,
        pixels: 0,
    };
    for r in results {
        let s = r?;
        total.warped.merge_from(&s.warped)?;
        total.consistency.merge_from(&s.consistency)?;
        total.retained += s.retained;
        total.pixels += s.pixels;
    }
    Ok(total)
}

/// Aggregates one temporal metric over every pair at `frame_distance`.
pub fn run_consis_job(cfg: &JobConfig, metric: ConsisMetric) -> Result<ConsisReport> {
    cfg.validate()?;
    let manifest = cfg.load_manifest()?;
    let k = cfg.frame_distance;
    let set = match metric {
        ConsisMetric::PredConsis => enumerate_pairs_from(&manifest, k, |_| true)?,
        _ => enumerate_pairs(&manifest, k)?,
    };
    let score = score_pairs(cfg, &set.pairs, |m| m == metric)?;
    let universe = cfg.universe()?;
    let metrics = match metric {
        ConsisMetric::Consistency => {
            let mut m = score.consistency.summarize_over(&universe);
            m.retained_fraction = ratio(score.retained, score.pixels);
            m
        }
        _ => score.warped.summarize_over(&universe),
    };
    Ok(ConsisReport {
        schema_version: SCHEMA_VERSION,
        metric,
        frame_distance: k,
        flow: set.flow_kind(),
        pairs: set.pairs.len(),
        skipped: set.skipped.len(),
        metrics,
    })
}

/// One frame distance of a sweep. Metric fields are empty when no pair
/// could be formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: i32,
    pub pl_warped_miou: Option<f64>,
    pub pl_warped_acc: Option<f64>,
    pub pl_consistency_miou: Option<f64>,
    pub pl_consistency_acc: Option<f64>,
    pub retained_fraction: Option<f64>,
    pub pairs: usize,
    pub flow: FlowKind,
}

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "k",
    "pl_warped_miou",
    "pl_warped_acc",
    "pl_consistency_miou",
    "pl_consistency_acc",
    "retained_fraction",
    "pairs",
    "flow",
];

/// Warped and consistency-filtered pseudo-label quality at each frame
/// distance in `ks`, over the labeled frames.
pub fn frame_distance_sweep(cfg: &JobConfig, ks: &[i32]) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let manifest = cfg.load_manifest()?;
    let universe = cfg.universe()?;
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let set = enumerate_pairs(&manifest, k)?;
        if set.pairs.is_empty() {
            log::warn!("k={k}: no pair has flow, row marked absent");
            rows.push(SweepRow {
                k,
                pl_warped_miou: None,
                pl_warped_acc: None,
                pl_consistency_miou: None,
                pl_consistency_acc: None,
                retained_fraction: None,
                pairs: 0,
                flow: FlowKind::Absent,
            });
            continue;
        }
        let score = score_pairs(cfg, &set.pairs, |m| m != ConsisMetric::PredConsis)?;
        let warped = score.warped.summarize_over(&universe);
        let consistency = score.consistency.summarize_over(&universe);
        rows.push(SweepRow {
            k,
            pl_warped_miou: warped.miou,
            pl_warped_acc: warped.class_avg_acc,
            pl_consistency_miou: consistency.miou,
            pl_consistency_acc: consistency.class_avg_acc,
            retained_fraction: ratio(score.retained, score.pixels),
            pairs: set.pairs.len(),
            flow: set.flow_kind(),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.k.to_string(),
            fmt_pct(r.pl_warped_miou),
            fmt_pct(r.pl_warped_acc),
            fmt_pct(r.pl_consistency_miou),
            fmt_pct(r.pl_consistency_acc),
            fmt_ratio(r.retained_fraction),
            r.pairs.to_string(),
            r.flow.name().to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_report(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::from(e).at(dir))?;
    }
    write_bytes(path, text.as_bytes())
}
