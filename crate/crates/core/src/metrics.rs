//! Confusion-matrix evaluation and temporal pseudo-label metrics.
//!
//! Rows of the confusion matrix are ground truth, columns are predictions.
//! Pixels whose ground truth is ignore are skipped. Pixels whose
//! *prediction* is ignore (refinement rejected them) land in a separate
//! per-class `rejected` counter: they feed the retained fraction but not
//! IoU or accuracy, so filtered pseudo-labels are scored on the pixels
//! they keep.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{apply_mask, ensure_same_dims, ClassSpace, FlowField, LabelMap, IGNORE};
use crate::refine::{refine_consistency, retained_fraction};
use crate::warp::propagate_labels;

/// Version stamped on every serialized report.
pub const SCHEMA_VERSION: u32 = 1;

/// `K x K` pixel counts plus rejected-prediction counts per ground-truth
/// class. Merging is an element-wise integer sum, so any reduction order
/// gives the same bits.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    class_space: ClassSpace,
    counts: Vec<u64>,
    rejected: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(class_space: ClassSpace) -> Self {
        let k = class_space.num_classes() as usize;
        ConfusionMatrix {
            class_space,
            counts: vec![0; k * k],
            rejected: vec![0; k],
        }
    }

    /// Builds a matrix from raw row-major counts.
    pub fn from_counts(class_space: ClassSpace, counts: Vec<u64>, rejected: Vec<u64>) -> Result<Self> {
        let k = class_space.num_classes() as usize;
        if counts.len() != k * k || rejected.len() != k {
            return Err(Error::shape(format!(
                "confusion matrix for {k} classes needs {} counts and {k} rejected, got {} and {}",
                k * k,
                counts.len(),
                rejected.len()
            )));
        }
        Ok(ConfusionMatrix {
            class_space,
            counts,
            rejected,
        })
    }

    pub fn class_space(&self) -> ClassSpace {
        self.class_space
    }

    fn k(&self) -> usize {
        self.class_space.num_classes() as usize
    }

    pub fn get(&self, gt: u8, pred: u8) -> u64 {
        self.counts[gt as usize * self.k() + pred as usize]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn rejected(&self) -> &[u64] {
        &self.rejected
    }

    /// Pixels counted in the matrix proper.
    pub fn evaluated(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.evaluated() == 0 && self.rejected_total() == 0
    }

    /// Adds one prediction/ground-truth pair.
    pub fn accumulate(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        ensure_same_dims(pred, gt, "confusion_accumulate")?;
        if pred.class_space() != self.class_space || gt.class_space() != self.class_space {
            return Err(Error::shape(format!(
                "confusion_accumulate: matrix has {} classes, pred {} and gt {}",
                self.k(),
                pred.class_space().num_classes(),
                gt.class_space().num_classes()
            )));
        }
        let k = self.k();
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if g == IGNORE {
                continue;
            }
            if p == IGNORE {
                self.rejected[g as usize] += 1;
            } else {
                self.counts[g as usize * k + p as usize] += 1;
            }
        }
        Ok(())
    }

    /// Adds `other` into `self`.
    pub fn merge_from(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.class_space != self.class_space {
            return Err(Error::shape(format!(
                "merge: {} vs {} classes",
                self.k(),
                other.k()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        for (a, b) in self.rejected.iter_mut().zip(&other.rejected) {
            *a += b;
        }
        Ok(())
    }

    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix> {
        let mut out = self.clone();
        out.merge_from(other)?;
        Ok(out)
    }

    /// Scores every class of the class space.
    pub fn summarize(&self) -> MetricReport {
        let all: Vec<u8> = (0..self.class_space.num_classes()).collect();
        self.summarize_over(&all)
    }

    /// Scores only the classes in `universe`; entries outside the class
    /// space are skipped. Pixels of other classes still count as false
    /// positives or negatives of the universe classes they touch.
    pub fn summarize_over(&self, universe: &[u8]) -> MetricReport {
        let k = self.k();
        let mut per_class = Vec::new();
        for &c in universe {
            if !self.class_space.is_class(c) {
                continue;
            }
            let c = c as usize;
            let tp = self.counts[c * k + c];
            let row: u64 = self.counts[c * k..(c + 1) * k].iter().sum();
            let col: u64 = (0..k).map(|r| self.counts[r * k + c]).sum();
            let (fneg, fpos) = (row - tp, col - tp);
            let union = tp + fpos + fneg;
            if union == 0 {
                continue;
            }
            per_class.push(ClassScore {
                class: c as u8,
                iou: percent(tp, union),
                acc: (row > 0).then(|| percent(tp, row)),
            });
        }
        let evaluated = self.evaluated();
        let total = evaluated + self.rejected_total();
        MetricReport {
            schema_version: SCHEMA_VERSION,
            miou: mean_percent(per_class.iter().map(|s| s.iou)),
            class_avg_acc: mean_percent(per_class.iter().filter_map(|s| s.acc)),
            per_class,
            retained_fraction: (total > 0).then(|| evaluated as f64 / total as f64),
            pixels_evaluated: evaluated,
        }
    }
}

fn percent(num: u64, den: u64) -> f64 {
    100.0 * num as f64 / den as f64
}

/// Arithmetic mean, `None` for an empty sequence.
pub fn mean_percent(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Folds `pred`/`gt` into `acc` and returns it.
pub fn confusion_accumulate(pred: &LabelMap, gt: &LabelMap, mut acc: ConfusionMatrix) -> Result<ConfusionMatrix> {
    acc.accumulate(pred, gt)?;
    Ok(acc)
}

pub fn merge(a: &ConfusionMatrix, b: &ConfusionMatrix) -> Result<ConfusionMatrix> {
    a.merge(b)
}

pub fn summarize(acc: &ConfusionMatrix) -> MetricReport {
    acc.summarize()
}

/// IoU and accuracy of one class, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub class: u8,
    pub iou: f64,
    /// Absent when the class never occurs in the ground truth.
    pub acc: Option<f64>,
}

/// Summary of one evaluation. Classes with an empty union are left out of
/// both `per_class` and the means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub per_class: Vec<ClassScore>,
    pub miou: Option<f64>,
    pub class_avg_acc: Option<f64>,
    pub retained_fraction: Option<f64>,
    pub pixels_evaluated: u64,
}

/// Column order of [`MetricReport::to_csv`].
pub const REPORT_CSV_HEADER: [&str; 6] = ["row", "class", "iou", "acc", "pixels_evaluated", "retained_fraction"];

pub(crate) fn fmt_pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_default()
}

pub(crate) fn fmt_ratio(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

impl MetricReport {
    /// One `class` row per scored class followed by one `summary` row.
    /// Percentages carry two decimals, ratios four.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(REPORT_CSV_HEADER)?;
        for s in &self.per_class {
            w.write_record([
                "class".to_string(),
                s.class.to_string(),
                format!("{:.2}", s.iou),
                fmt_pct(s.acc),
                String::new(),
                String::new(),
            ])?;
        }
        w.write_record([
            "summary".to_string(),
            String::new(),
            fmt_pct(self.miou),
            fmt_pct(self.class_avg_acc),
            self.pixels_evaluated.to_string(),
            fmt_ratio(self.retained_fraction),
        ])?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Confusion of the warped `pl_tpk` against `pl_t`, with `pl_t` in the
/// ground-truth role. Pixels whose warp leaves the frame are excluded.
pub fn pl_pred_consis_confusion(pl_t: &LabelMap, pl_tpk: &LabelMap, flow: &FlowField) -> Result<ConfusionMatrix> {
    ensure_same_dims(pl_t, pl_tpk, "pl_pred_consis")?;
    let warped = propagate_labels(pl_tpk, flow)?;
    let reference = apply_mask(pl_t, &warped.validity)?;
    confusion_accumulate(&warped.payload, &reference, ConfusionMatrix::new(pl_t.class_space()))
}

/// Temporal predictive consistency of pseudo-labels.
pub fn pl_pred_consis(pl_t: &LabelMap, pl_tpk: &LabelMap, flow: &FlowField) -> Result<MetricReport> {
    Ok(pl_pred_consis_confusion(pl_t, pl_tpk, flow)?.summarize())
}

/// Confusion of the warped `pl_tpk` against the current ground truth.
/// Pixels whose warp leaves the frame are excluded.
pub fn pl_warped_confusion(pl_tpk: &LabelMap, flow: &FlowField, gt_t: &LabelMap) -> Result<ConfusionMatrix> {
    ensure_same_dims(pl_tpk, gt_t, "pl_warped")?;
    let warped = propagate_labels(pl_tpk, flow)?;
    let reference = apply_mask(gt_t, &warped.validity)?;
    confusion_accumulate(&warped.payload, &reference, ConfusionMatrix::new(gt_t.class_space()))
}

/// How well the warped neighbouring prediction matches current ground truth.
pub fn pl_warped(pl_tpk: &LabelMap, flow: &FlowField, gt_t: &LabelMap) -> Result<MetricReport> {
    Ok(pl_warped_confusion(pl_tpk, flow, gt_t)?.summarize())
}

/// The consistency-filtered pseudo-label, its confusion against ground
/// truth, and the filter's retained pixel count.
#[derive(Debug, Clone)]
pub struct ConsistencyEval {
    pub filtered: LabelMap,
    pub confusion: ConfusionMatrix,
    pub retained: u64,
    pub pixels: u64,
}

pub fn pl_consistency_eval(
    pl_t: &LabelMap,
    pl_tpk: &LabelMap,
    flow: &FlowField,
    gt_t: &LabelMap,
) -> Result<ConsistencyEval> {
    ensure_same_dims(pl_t, gt_t, "pl_consistency")?;
    let filtered = refine_consistency(pl_t, pl_tpk, flow)?;
    let confusion = confusion_accumulate(&filtered, gt_t, ConfusionMatrix::new(gt_t.class_space()))?;
    let retained = crate::refine::retained_count(&filtered);
    let pixels = filtered.data().len() as u64;
    Ok(ConsistencyEval {
        filtered,
        confusion,
        retained,
        pixels,
    })
}

/// Accuracy of the pixels that survive consistency filtering. The report's
/// retained fraction is that of the filtered map over all its pixels.
pub fn pl_consistency(pl_t: &LabelMap, pl_tpk: &LabelMap, flow: &FlowField, gt_t: &LabelMap) -> Result<MetricReport> {
    let eval = pl_consistency_eval(pl_t, pl_tpk, flow, gt_t)?;
    let mut report = eval.confusion.summarize();
    report.retained_fraction = Some(retained_fraction(&eval.filtered));
    Ok(report)
}
