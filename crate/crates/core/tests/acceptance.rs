//! One line per acceptance criterion. Runs without the libtest harness so
//! the verdicts are always printed; exits non-zero if any criterion fails.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flowseg::damath::{
    accel_fuse, mic_loss, mrfusion_fuse, rcs_distribution, upsample, video_disc_loss_d, ClassFrequencies,
    FusionWeights,
};
use flowseg::io::{
    decode_flo, decode_label_png, decode_pfm, encode_flo, encode_label_png, encode_pfm, parse_manifest,
    read_flo, read_label_png, read_pfm, DatasetManifest, Domain, ManifestRecord, Split,
};
use flowseg::metrics::ConfusionMatrix;
use flowseg::raster::{ClassSpace, Dims, FlowField, LabelMap, LogitVolume, ScalarPlane, IGNORE};
use flowseg::refine::{refine, refine_consistency, RefineInput, Strategy};
use flowseg::synth::{generate_clip, WorldSpec};
use flowseg::warp::propagate_labels;
use flowseg::Error;

use common::{crossing_world, tree};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($fmt)+));
        }
    };
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- 1

const HRDA: [f64; 11] = [96.4, 88.1, 94.0, 67.6, 75.3, 81.2, 95.0, 96.7, 81.0, 83.7, 95.0];
const NO_MRFUSION: [f64; 11] = [87.6, 83.0, 88.3, 66.1, 72.4, 77.3, 92.6, 94.4, 79.6, 81.3, 93.6];

/// A confusion matrix whose first 11 classes have exactly the given IoUs.
/// Misses go to a twelfth class that is left out of the summary.
fn matrix_with_ious(ious: &[f64; 11]) -> ConfusionMatrix {
    let k = 12;
    let mut counts = vec![0u64; k * k];
    for (c, &iou) in ious.iter().enumerate() {
        let tp = (iou * 10.0).round() as u64;
        counts[c * k + c] = tp;
        counts[c * k + 11] = 1000 - tp;
    }
    ConfusionMatrix::from_counts(ClassSpace::new(12).unwrap(), counts, vec![0; k]).unwrap()
}

fn table_fixture() -> Verdict {
    let start = Instant::now();
    let universe: Vec<u8> = (0..11).collect();
    let mut got = Vec::new();
    for (row, ious, want) in [("HRDA", &HRDA, 86.7), ("No MRFusion", &NO_MRFUSION, 83.3)] {
        let report = matrix_with_ious(ious).summarize_over(&universe);
        for (score, &iou) in report.per_class.iter().zip(ious.iter()) {
            ensure!((score.iou - iou).abs() < 1e-9, "{row}: class {} iou {} != {iou}", score.class, score.iou);
        }
        let miou = report.miou.unwrap();
        ensure!((miou - want).abs() <= 0.05, "{row}: mean {miou:.3} vs {want}");
        got.push(format!("{row} {miou:.3}"));
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(1), "took {elapsed:?}");
    Ok(got.join(", "))
}

// ---------------------------------------------------------------- 2

fn exact_warp() -> Verdict {
    let start = Instant::now();
    let (mut checked, mut mismatches) = (0u64, 0u64);
    for seed in 1..=50 {
        let spec = WorldSpec::random(seed, 128, 10);
        let frames = generate_clip(&spec, 0).map_err(|e| e.to_string())?;
        for t in 0..frames.len() {
            let cur = &frames[t];
            let pairs = [
                (cur.flow_fwd.as_ref(), cur.visible_fwd.as_ref(), t + 1),
                (cur.flow_bwd.as_ref(), cur.visible_bwd.as_ref(), t.wrapping_sub(1)),
            ];
            for (flow, visible, other) in pairs {
                let (Some(flow), Some(visible)) = (flow, visible) else { continue };
                let warped = propagate_labels(&frames[other].labels, flow).map_err(|e| e.to_string())?;
                for i in 0..cur.labels.len() {
                    if visible.data()[i] {
                        checked += 1;
                        if !warped.validity.data()[i] || warped.payload.data()[i] != cur.labels.data()[i] {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(mismatches == 0, "{mismatches} mismatches over {checked} visible pixels");
    ensure!(checked > 0, "no visible pixels checked");
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("50 worlds, {checked} visible pixels, 0 mismatches, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 3

fn random_labels(r: &mut ChaCha8Rng, w: usize, h: usize, k: u8) -> LabelMap {
    let data = (0..w * h)
        .map(|_| if r.random_bool(0.1) { IGNORE } else { r.random_range(0..k) })
        .collect();
    LabelMap::new(w, h, data, ClassSpace::new(k).unwrap()).unwrap()
}

fn random_flow_value(r: &mut ChaCha8Rng) -> f32 {
    match r.random_range(0..3) {
        0 => r.random_range(-5i32..=5) as f32,
        1 => r.random_range(-10i32..=10) as f32 + 0.5,
        _ => r.random_range(-6.0f32..6.0),
    }
}

fn random_flow(r: &mut ChaCha8Rng, w: usize, h: usize) -> FlowField {
    let dx = (0..w * h).map(|_| random_flow_value(r)).collect();
    let dy = (0..w * h).map(|_| random_flow_value(r)).collect();
    FlowField::new(w, h, dx, dy).unwrap()
}

/// Coarse confidences so that ties are common.
fn random_conf(r: &mut ChaCha8Rng, w: usize, h: usize) -> ScalarPlane {
    ScalarPlane::new(w, h, (0..w * h).map(|_| r.random_range(0..=4) as f32 / 4.0).collect()).unwrap()
}

fn round_half_away(v: f64) -> f64 {
    if v < 0.0 {
        -(-v + 0.5).floor()
    } else {
        (v + 0.5).floor()
    }
}

/// Source pixel for `(x, y)` under `flow`, or `None` out of frame.
fn naive_source(flow: &FlowField, x: usize, y: usize) -> Option<(usize, usize)> {
    let (dx, dy) = flow.get(x, y);
    let sx = round_half_away(x as f64 + dx as f64);
    let sy = round_half_away(y as f64 + dy as f64);
    let inside = sx >= 0.0 && sy >= 0.0 && sx < flow.width() as f64 && sy < flow.height() as f64;
    inside.then_some((sx as usize, sy as usize))
}

struct Instance {
    pl_t: LabelMap,
    pl_tpk: LabelMap,
    conf_t: ScalarPlane,
    conf_tpk: ScalarPlane,
    flow: FlowField,
    gt_t: LabelMap,
}

fn naive_refine(strategy: Strategy, s: &Instance) -> Vec<u8> {
    let (w, h) = s.pl_t.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let here = s.pl_t.get(x, y);
            let src = naive_source(&s.flow, x, y);
            let warped = src.map(|(sx, sy)| s.pl_tpk.get(sx, sy));
            out.push(match strategy {
                Strategy::Consistency => match warped {
                    Some(v) if v == here && here != IGNORE => here,
                    _ => IGNORE,
                },
                Strategy::MaxConfidence => match src {
                    Some((sx, sy)) if s.conf_tpk.get(sx, sy) > s.conf_t.get(x, y) => s.pl_tpk.get(sx, sy),
                    _ => here,
                },
                Strategy::WarpForward | Strategy::WarpBackward => warped.unwrap_or(IGNORE),
                Strategy::Oracle => {
                    let g = s.gt_t.get(x, y);
                    if g != IGNORE && g == here {
                        here
                    } else {
                        IGNORE
                    }
                }
                Strategy::None => here,
            });
        }
    }
    out
}

fn refinement() -> Verdict {
    let mut r = rng(3);
    let (mut oracle_kept, mut oracle_correct) = (0u64, 0u64);
    for n in 0..100 {
        let (w, h) = (r.random_range(1..=16), r.random_range(1..=16));
        let k = r.random_range(1..=6);
        let s = Instance {
            pl_t: random_labels(&mut r, w, h, k),
            pl_tpk: random_labels(&mut r, w, h, k),
            conf_t: random_conf(&mut r, w, h),
            conf_tpk: random_conf(&mut r, w, h),
            flow: random_flow(&mut r, w, h),
            gt_t: random_labels(&mut r, w, h, k),
        };
        let input = RefineInput {
            pl_t: Some(&s.pl_t),
            pl_tpk: Some(&s.pl_tpk),
            conf_t: Some(&s.conf_t),
            conf_tpk: Some(&s.conf_tpk),
            flow: Some(&s.flow),
            gt_t: Some(&s.gt_t),
        };
        for strategy in Strategy::ALL {
            let got = refine(strategy, &input).map_err(|e| format!("instance {n}: {e}"))?;
            ensure!(
                got.data() == naive_refine(strategy, &s).as_slice(),
                "instance {n} ({w}x{h}, K={k}): {} differs from the naive oracle",
                strategy.name()
            );
            if strategy == Strategy::Oracle {
                for (&p, &g) in got.data().iter().zip(s.gt_t.data()) {
                    if p != IGNORE {
                        oracle_kept += 1;
                        oracle_correct += u64::from(p == g);
                    }
                }
            }
        }
    }
    ensure!(oracle_kept > 0 && oracle_correct == oracle_kept, "oracle accuracy {oracle_correct}/{oracle_kept}");
    Ok(format!(
        "100 instances x {} strategies bit-exact, oracle accuracy 100% over {oracle_kept} pixels",
        Strategy::ALL.len()
    ))
}

// ---------------------------------------------------------------- 4

struct NaiveScores {
    per_class: Vec<(u8, f64, Option<f64>)>,
    miou: Option<f64>,
    acc: Option<f64>,
    evaluated: u64,
}

fn naive_scores(pairs: &[(LabelMap, LabelMap)], k: u8) -> NaiveScores {
    let mut per_class = Vec::new();
    let mut evaluated = 0u64;
    for (p, g) in pairs {
        evaluated += p.data().iter().zip(g.data()).filter(|&(&p, &g)| p != IGNORE && g != IGNORE).count() as u64;
    }
    for c in 0..k {
        let (mut tp, mut fpos, mut fneg, mut row) = (0u64, 0u64, 0u64, 0u64);
        for (pred, gt) in pairs {
            for y in 0..gt.height() {
                for x in 0..gt.width() {
                    let (p, g) = (pred.get(x, y), gt.get(x, y));
                    if p == IGNORE || g == IGNORE {
                        continue;
                    }
                    match (p == c, g == c) {
                        (true, true) => tp += 1,
                        (true, false) => fpos += 1,
                        (false, true) => fneg += 1,
                        (false, false) => {}
                    }
                    row += u64::from(g == c);
                }
            }
        }
        let union = tp + fpos + fneg;
        if union > 0 {
            let acc = (row > 0).then(|| 100.0 * tp as f64 / row as f64);
            per_class.push((c, 100.0 * tp as f64 / union as f64, acc));
        }
    }
    let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    NaiveScores {
        miou: mean(per_class.iter().map(|s| s.1).collect()),
        acc: mean(per_class.iter().filter_map(|s| s.2).collect()),
        per_class,
        evaluated,
    }
}

fn metric_oracle() -> Verdict {
    let mut r = rng(4);
    for n in 0..100 {
        let k = r.random_range(1..=8);
        let frames = r.random_range(1..=4);
        let pairs: Vec<(LabelMap, LabelMap)> = (0..frames)
            .map(|_| {
                let (w, h) = (r.random_range(1..=8), r.random_range(1..=8));
                (random_labels(&mut r, w, h, k), random_labels(&mut r, w, h, k))
            })
            .collect();
        let space = ClassSpace::new(k).unwrap();
        let mut whole = ConfusionMatrix::new(space);
        for (p, g) in &pairs {
            whole.accumulate(p, g).unwrap();
        }
        let got = whole.summarize();
        let want = naive_scores(&pairs, k);
        let got_classes: Vec<(u8, f64, Option<f64>)> = got.per_class.iter().map(|s| (s.class, s.iou, s.acc)).collect();
        ensure!(got_classes == want.per_class, "case {n}: per-class scores differ");
        ensure!(got.miou == want.miou && got.class_avg_acc == want.acc, "case {n}: means differ");
        ensure!(got.pixels_evaluated == want.evaluated, "case {n}: evaluated pixel count differs");

        // every frame its own shard, merged in reverse order
        let mut merged = ConfusionMatrix::new(space);
        for (p, g) in pairs.iter().rev() {
            let mut shard = ConfusionMatrix::new(space);
            shard.accumulate(p, g).unwrap();
            merged = merged.merge(&shard).unwrap();
        }
        let (a, b) = (merged.summarize(), got);
        ensure!(
            a.to_json().unwrap() == b.to_json().unwrap() && a.to_csv().unwrap() == b.to_csv().unwrap(),
            "case {n}: shard-and-merge report differs"
        );
    }
    Ok("100 random cases exact, shard-and-merge byte-identical".into())
}

// ---------------------------------------------------------------- 5 and 7

fn flowseg(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_flowseg"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("flowseg {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn synth_dataset(dir: &Path, noise: f64) -> Result<(), String> {
    let spec = dir.join("world.json");
    fs::write(&spec, serde_json::to_string(&crossing_world(noise)).unwrap()).unwrap();
    flowseg(&["synth", "--spec", s(&spec), "--out", s(&dir.join("data")), "--seed", "1"])?;
    Ok(())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn frame_distance_trend() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 0.2)?;
    let data = dir.path().join("data");
    let out = flowseg(&[
        "sweep", "--manifest", s(&data.join("manifest.jsonl")), "--pred-dir", s(&data.join("preds")),
        "--num-classes", "6", "--ks", "1,3,6,10", "--format", "csv",
    ])?;
    let mut rdr = csv::Reader::from_reader(out.as_slice());
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = headers.iter().position(|h| h == "pl_warped_miou").ok_or("no pl_warped_miou column")?;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        values.push(rec[col].parse::<f64>().map_err(|e| format!("{:?}: {e}", &rec[col]))?);
    }
    ensure!(values.len() == 4, "expected 4 rows, got {}", values.len());
    ensure!(values.windows(2).all(|w| w[1] <= w[0]), "not non-increasing: {values:?}");
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.2}")).collect();
    Ok(format!("PL-Warped mIoU at k=1,3,6,10: {}", shown.join(", ")))
}

/// Every output of one full round of CLI jobs: stdout of each job plus the
/// files it wrote, keyed by job.
fn cli_round(root: &Path, workers: &str) -> Result<Vec<(String, Vec<u8>)>, String> {
    let data = root.join("data");
    let (m, preds, conf) = (data.join("manifest.jsonl"), data.join("preds"), data.join("conf"));
    let job = |extra: &[&str]| -> Vec<String> {
        let mut v: Vec<String> = [
            "--manifest", s(&m), "--pred-dir", s(&preds), "--num-classes", "6", "--workers", workers, "--seed", "1",
        ]
        .iter()
        .map(|a| a.to_string())
        .collect();
        v.extend(extra.iter().map(|a| a.to_string()));
        v
    };
    let run = |sub: &str, args: Vec<String>| -> Result<Vec<u8>, String> {
        let mut all = vec![sub];
        all.extend(args.iter().map(String::as_str));
        flowseg(&all)
    };

    let mut outputs = Vec::new();
    let synth_dir = root.join("synth");
    let spec = root.join("world.json");
    outputs.push(("synth".into(), flowseg(&["synth", "--spec", s(&spec), "--out", s(&synth_dir), "--seed", "1"])?));
    outputs.push(("synth files".into(), serde_json::to_vec(&tree_digest(&synth_dir)).unwrap()));

    for strategy in Strategy::ALL {
        let out_dir = root.join(format!("refine-{}-{workers}", strategy.name()));
        let stdout = run(
            "refine",
            job(&["--conf-dir", s(&conf), "--strategy", strategy.name(), "--frame-distance", "2", "--out-dir", s(&out_dir)]),
        )?;
        outputs.push((format!("refine {}", strategy.name()), stdout));
        outputs.push((format!("refine {} files", strategy.name()), serde_json::to_vec(&tree_digest(&out_dir)).unwrap()));
        fs::remove_dir_all(&out_dir).unwrap();
    }
    for format in ["csv", "json"] {
        outputs.push((format!("eval {format}"), run("eval", job(&["--format", format]))?));
        outputs.push((format!("sweep {format}"), run("sweep", job(&["--format", format]))?));
        for metric in ["predconsis", "warped", "consistency"] {
            outputs.push((
                format!("consis {metric} {format}"),
                run("consis", job(&["--metric", metric, "--frame-distance", "-3", "--format", format]))?,
            ));
        }
    }
    outputs.push(("rcs".into(), flowseg(&["rcs", "--freqs", "0.6,0.3,0.1", "--temperature", "0.1"])?));
    fs::remove_dir_all(&synth_dir).unwrap();
    Ok(outputs)
}

fn tree_digest(dir: &Path) -> Vec<(String, Vec<u8>)> {
    tree(dir).into_iter().map(|(p, b)| (p.to_string_lossy().into_owned(), b)).collect()
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    synth_dataset(dir.path(), 0.2)?;
    let reference = cli_round(dir.path(), "1")?;
    let mut rounds = 1;
    for _ in 0..2 {
        for workers in ["1", "2", "8"] {
            let got = cli_round(dir.path(), workers)?;
            rounds += 1;
            for ((name, a), (_, b)) in reference.iter().zip(&got) {
                ensure!(a == b, "{name} differs with {workers} workers");
            }
        }
    }
    Ok(format!("{} outputs identical over {rounds} rounds (workers 1, 2, 8; two passes)", reference.len()))
}

// ---------------------------------------------------------------- 6

fn damath_spot_values() -> Verdict {
    let p = rcs_distribution(&ClassFrequencies { freqs: vec![0.9, 0.1], temperature: 1.0 }).unwrap();
    let (a, b) = (0.1f64.exp(), 0.9f64.exp());
    ensure!((p[0] - a / (a + b)).abs() < 1e-12 && (p[1] - b / (a + b)).abs() < 1e-12, "rcs vs softmax: {p:?}");
    ensure!((p[0] - 0.3100).abs() <= 1e-3 && (p[1] - 0.6900).abs() <= 1e-3, "rcs spot: {p:?}");

    let logits = LogitVolume::new(1, 1, 2, vec![0.0, 0.0]).unwrap();
    let label = LabelMap::new(1, 1, vec![0], ClassSpace::new(2).unwrap()).unwrap();
    let mic = mic_loss(&logits, &label, &ScalarPlane::filled(1, 1, 1.0).unwrap()).unwrap();
    ensure!((mic - 2f64.ln()).abs() <= 1e-9, "mic_loss {mic}");

    let half = [ScalarPlane::filled(1, 1, 0.5).unwrap()];
    let ld = video_disc_loss_d(&half, &half).unwrap();
    ensure!((ld - 2.0 * 2f64.ln()).abs() <= 1e-9, "L_D {ld}");

    let mut r = rng(6);
    let ctx = LogitVolume::new(3, 2, 3, (0..18).map(|_| r.random_range(-4.0f32..4.0)).collect()).unwrap();
    let det = LogitVolume::new(6, 4, 3, (0..72).map(|_| r.random_range(-4.0f32..4.0)).collect()).unwrap();
    let zeros = ScalarPlane::filled(3, 2, 0.0).unwrap();
    let ones = ScalarPlane::filled(3, 2, 1.0).unwrap();
    ensure!(mrfusion_fuse(&ctx, &det, &zeros, 2.0).unwrap() == upsample(&ctx, 2.0).unwrap(), "mrfusion a=0");
    ensure!(mrfusion_fuse(&ctx, &det, &ones, 2.0).unwrap() == det, "mrfusion a=1");

    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (w, h, c) = (r.random_range(1..=9), r.random_range(1..=9), r.random_range(1..=4));
        let vol = |r: &mut ChaCha8Rng| {
            LogitVolume::new(w, h, c, (0..w * h * c).map(|_| r.random_range(-3.0f32..3.0)).collect()).unwrap()
        };
        let (cur, other) = (vol(&mut r), vol(&mut r));
        let flow = random_flow(&mut r, w, h);
        let weights: Vec<f32> = (0..2 * c * c).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let bias: Vec<f32> = (0..c).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let fw = FusionWeights::new(c, 2 * c, weights.clone(), Some(bias.clone())).unwrap();
        let got = accel_fuse(&cur, &other, &flow, &fw).unwrap();
        for y in 0..h {
            for x in 0..w {
                let here = cur.pixel(x, y);
                let there = naive_source(&flow, x, y).map_or(here, |(sx, sy)| other.pixel(sx, sy));
                let stacked: Vec<f64> = here.iter().chain(there).map(|&v| v as f64).collect();
                for o in 0..c {
                    let want = bias[o] as f64
                        + (0..2 * c).map(|i| weights[o * 2 * c + i] as f64 * stacked[i]).sum::<f64>();
                    worst = worst.max((got.pixel(x, y)[o] as f64 - want).abs());
                }
            }
        }
    }
    ensure!(worst <= 1e-6, "accel_fuse off by {worst:e}");
    Ok(format!("rcs ({:.4}, {:.4}), mic ln2, L_D 2ln2, mrfusion identities, accel max err {worst:.1e}", p[0], p[1]))
}

// ---------------------------------------------------------------- 8

fn random_record(r: &mut ChaCha8Rng, clip: usize, frame: u32) -> ManifestRecord {
    let split = if r.random_bool(0.5) { Split::Train } else { Split::Val };
    let domain = if r.random_bool(0.5) { Domain::Source } else { Domain::Target };
    let mut rec = ManifestRecord::new(format!("c{clip}"), frame, domain, split);
    rec.image_path = Some(format!("img/{clip}/{frame}.png").into());
    if r.random_bool(0.3) {
        rec.label_path = Some(format!("lbl/{clip}/{frame}.png").into());
    }
    if r.random_bool(0.5) {
        rec.flow_fwd_path = Some(format!("flow/{clip}_{frame}_f.flo").into());
    }
    for _ in 0..r.random_range(0..3) {
        let k = r.random_range(2..12) * if r.random_bool(0.5) { 1 } else { -1 };
        rec.flows.insert(k, format!("flow/{clip}_{frame}_{k}.flo").into());
    }
    rec
}

fn round_trips(r: &mut ChaCha8Rng) -> Result<(), String> {
    for n in 0..1000 {
        let (w, h) = (r.random_range(1..=32), r.random_range(1..=32));

        let flow = FlowField::new(
            w,
            h,
            (0..w * h).map(|_| f32::from_bits(r.random::<u32>() & 0xbfff_ffff)).collect(),
            (0..w * h).map(|_| r.random_range(-500.0f32..500.0)).collect(),
        )
        .unwrap();
        let bytes = encode_flo(&flow).unwrap();
        ensure!(decode_flo(&bytes).unwrap() == flow, "flo round trip {n}");

        let k = r.random_range(1..=254);
        let labels = random_labels(r, w, h, k);
        let png = encode_label_png(&labels).unwrap();
        ensure!(decode_label_png(&png, labels.class_space()).unwrap() == labels, "png round trip {n}");

        let plane = ScalarPlane::new(
            w,
            h,
            (0..w * h).map(|_| f32::from_bits(r.random::<u32>() & 0xbfff_ffff)).collect(),
        )
        .unwrap();
        let back = decode_pfm(&encode_pfm(&plane)).unwrap();
        ensure!(
            back.data().iter().zip(plane.data()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "pfm round trip {n}"
        );

        let records: Vec<ManifestRecord> = (0..r.random_range(0..12))
            .map(|i| {
                let frame = i as u32 * 7 + r.random_range(0..7);
                random_record(r, i % 3, frame)
            })
            .collect();
        let m = DatasetManifest::from_records(records, "/d").unwrap();
        let text = m.to_jsonl().unwrap();
        let back = parse_manifest(&text, "/d").unwrap();
        ensure!(back == m && back.to_jsonl().unwrap() == text, "manifest round trip {n}");
    }
    Ok(())
}

fn flo_header(magic: f32, w: i32, h: i32) -> Vec<u8> {
    let mut b = magic.to_le_bytes().to_vec();
    b.extend(w.to_le_bytes());
    b.extend(h.to_le_bytes());
    b
}

fn png_bytes(color: png::ColorType, depth: png::BitDepth, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = png::Encoder::new(&mut out, 2, 1);
    enc.set_color(color);
    enc.set_depth(depth);
    enc.write_header().unwrap().write_image_data(data).unwrap();
    out
}

#[derive(Debug, PartialEq)]
enum Kind {
    Format,
    Unsupported,
    Length,
    Data,
    InvalidLabel,
    Parse,
    Duplicate,
}

fn kind(err: &Error) -> Option<Kind> {
    Some(match err {
        Error::File { inner, .. } => return kind(inner),
        Error::Format(_) => Kind::Format,
        Error::UnsupportedFormat(_) => Kind::Unsupported,
        Error::Length { .. } => Kind::Length,
        Error::Data(_) => Kind::Data,
        Error::InvalidLabel { .. } => Kind::InvalidLabel,
        Error::Parse { .. } => Kind::Parse,
        Error::Duplicate { .. } => Kind::Duplicate,
        _ => return None,
    })
}

fn corrupted_headers() -> Result<usize, String> {
    use png::{BitDepth, ColorType};
    let magic = 202021.25f32;
    let mut nan = flo_header(magic, 1, 1);
    nan.extend(f32::NAN.to_le_bytes());
    nan.extend(0f32.to_le_bytes());
    let pfm = |header: &str, floats: usize| {
        let mut b = header.as_bytes().to_vec();
        b.extend(vec![0u8; floats * 4]);
        b
    };
    let cases: Vec<(&str, Vec<u8>, Kind)> = vec![
        ("a.flo", flo_header(123.45, 1, 1), Kind::Format),
        ("b.flo", b"PIEZ\x01\0\0\0\x01\0\0\0".to_vec(), Kind::Format),
        ("c.flo", flo_header(magic, 0, 4), Kind::Format),
        ("d.flo", flo_header(magic, 3, -1), Kind::Format),
        ("e.flo", flo_header(magic, 2, 2), Kind::Length),
        ("f.flo", magic.to_le_bytes()[..3].to_vec(), Kind::Length),
        ("g.flo", flo_header(magic, i32::MAX, i32::MAX), Kind::Length),
        ("h.flo", nan, Kind::Data),
        ("a.pfm", pfm("PF\n1 1\n-1.0\n", 3), Kind::Unsupported),
        ("b.pfm", pfm("Pf\n1 1\n1.0\n", 1), Kind::Unsupported),
        ("c.pfm", pfm("P5\n1 1\n-1.0\n", 1), Kind::Format),
        ("d.pfm", pfm("Pf\nx 1\n-1.0\n", 1), Kind::Format),
        ("e.pfm", pfm("Pf\n1 1\nabc\n", 1), Kind::Format),
        ("f.pfm", pfm("Pf\n2 2\n-1.0\n", 3), Kind::Length),
        ("a.png", png_bytes(ColorType::Rgb, BitDepth::Eight, &[0; 6]), Kind::Format),
        ("b.png", png_bytes(ColorType::Grayscale, BitDepth::Sixteen, &[0; 4]), Kind::Format),
        ("c.png", png_bytes(ColorType::GrayscaleAlpha, BitDepth::Eight, &[0; 4]), Kind::Format),
        ("d.png", png_bytes(ColorType::Grayscale, BitDepth::Eight, &[3, 200]), Kind::InvalidLabel),
        ("a.jsonl", b"{\"clip_id\": \"c\", \"frame_index\": 1,\n".to_vec(), Kind::Parse),
        (
            "b.jsonl",
            b"{\"clip_id\":\"c\",\"frame_index\":1,\"image_path\":\"x\",\"domain\":\"target\",\"split\":\"val\"}\n\
              {\"clip_id\":\"c\",\"frame_index\":1,\"image_path\":\"y\",\"domain\":\"target\",\"split\":\"val\"}\n"
                .to_vec(),
            Kind::Duplicate,
        ),
    ];
    let dir = tempfile::tempdir().unwrap();
    let k19 = ClassSpace::new(19).unwrap();
    for (name, bytes, want) in &cases {
        let path = dir.path().join(name);
        fs::write(&path, bytes).unwrap();
        let err = match path.extension().and_then(|e| e.to_str()) {
            Some("flo") => read_flo(&path).err(),
            Some("pfm") => read_pfm(&path).err(),
            Some("png") => read_label_png(&path, k19).err(),
            _ => flowseg::io::load_manifest(&path).err(),
        };
        let got = err.as_ref().and_then(kind);
        ensure!(got.as_ref() == Some(want), "{name}: expected {want:?}, got {err:?}");
    }
    Ok(cases.len())
}

fn io_round_trips() -> Verdict {
    round_trips(&mut rng(8))?;
    let n = corrupted_headers()?;
    Ok(format!("1000 round trips per format bit-exact, {n} corrupted files raised their typed errors"))
}

// ---------------------------------------------------------------- 9

fn throughput() -> Verdict {
    let (w, h) = (2048, 1024);
    let k = ClassSpace::new(19).unwrap();
    let pl_t = LabelMap::new(w, h, (0..w * h).map(|i| ((i / 37 + i / w) % 19) as u8).collect(), k).unwrap();
    let pl_tpk = LabelMap::new(w, h, (0..w * h).map(|i| ((i / 41 + i / w) % 19) as u8).collect(), k).unwrap();
    let dx = (0..w * h).map(|i| ((i % w) as f32 * 0.013).sin() * 6.0).collect();
    let dy = (0..w * h).map(|i| ((i / w) as f32 * 0.021).cos() * 4.0).collect();
    let flow = FlowField::new(w, h, dx, dy).unwrap();

    let mut best = Duration::MAX;
    for _ in 0..5 {
        let start = Instant::now();
        let out = refine_consistency(&pl_t, &pl_tpk, &flow).unwrap();
        best = best.min(start.elapsed());
        std::hint::black_box(out);
    }
    ensure!(best < Duration::from_millis(100), "best of 5 runs took {best:.2?}");
    Ok(format!("2048x1024 consistency refinement in {best:.2?} (best of 5, one thread)"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("table fixture means", table_fixture),
        ("exact-warp oracle", exact_warp),
        ("refinement vs naive oracle", refinement),
        ("metric oracle and shard merge", metric_oracle),
        ("frame-distance trend", frame_distance_trend),
        ("damath spot values", damath_spot_values),
        ("CLI determinism", determinism),
        ("I/O round trips and typed errors", io_round_trips),
        ("refinement throughput", throughput),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let verdict = panic::catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panicked".into())));
        match verdict {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
