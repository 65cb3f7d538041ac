//! Centre-distance detection metrics: AP over distance thresholds, true-positive
//! errors and the composite `NDS'` score.
//!
//! Matching, AP interpolation and clipping follow the nuScenes convention.
//! `NDS'` uses three error terms, so it is normalized by 8 rather than 10.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::boxes::{wrap_angle, Box3D, GroundTruthBox};

pub const DISTANCE_THRESHOLDS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
/// Threshold at which true-positive errors are measured.
pub const TP_THRESHOLD: f64 = 2.0;
pub const MIN_RECALL: f64 = 0.1;
pub const MIN_PRECISION: f64 = 0.1;
pub const RECALL_POINTS: usize = 101;
/// Translation error normalizer in metres.
pub const ATE_NORM: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(prediction index, gt index, centre distance)` in processing order.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

fn center_distance(p: &Box3D, g: &GroundTruthBox) -> f64 {
    (p.x - g.x).hypot(p.y - g.y)
}

/// Prediction indices by descending confidence, index order on ties.
fn confidence_order(preds: &[Box3D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    order
}

/// Greedy matching: by descending confidence, each prediction claims the
/// nearest unclaimed ground truth whose centre distance is strictly below `d`.
pub fn match_boxes(preds: &[Box3D], gts: &[GroundTruthBox], d: f64) -> MatchResult {
    let mut claimed = vec![false; gts.len()];
    let mut pairs = Vec::new();
    let mut unmatched_preds = Vec::new();
    for pi in confidence_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gts.iter().enumerate() {
            if claimed[gi] {
                continue;
            }
            let dist = center_distance(&preds[pi], g);
            if best.map_or(true, |(_, bd)| dist < bd) {
                best = Some((gi, dist));
            }
        }
        match best {
            Some((gi, dist)) if dist < d => {
                claimed[gi] = true;
                pairs.push((pi, gi, dist));
            }
            _ => unmatched_preds.push(pi),
        }
    }
    let unmatched_gts = (0..gts.len()).filter(|&g| !claimed[g]).collect();
    MatchResult {
        pairs,
        unmatched_preds,
        unmatched_gts,
    }
}

/// `numpy.interp(x, xp, fp, right=0)` for non-decreasing `xp`.
fn interp_right_zero(x: f64, xp: &[f64], fp: &[f64]) -> f64 {
    let last = xp.len() - 1;
    if x > xp[last] {
        return 0.0;
    }
    if x < xp[0] {
        return fp[0];
    }
    if x == xp[last] {
        return fp[last];
    }
    let j = xp.partition_point(|&v| v <= x) - 1;
    let slope = (fp[j + 1] - fp[j]) / (xp[j + 1] - xp[j]);
    slope * (x - xp[j]) + fp[j]
}

/// AP from true/false-positive flags sorted by descending confidence.
pub fn average_precision_from_flags(is_tp: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || is_tp.is_empty() {
        return 0.0;
    }
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut rec = Vec::with_capacity(is_tp.len());
    let mut prec = Vec::with_capacity(is_tp.len());
    for &hit in is_tp {
        if hit {
            tp += 1.0;
        } else {
            fp += 1.0;
        }
        rec.push(tp / n_gt as f64);
        prec.push(tp / (tp + fp));
    }
    let first = (100.0 * MIN_RECALL).round() as usize + 1;
    let kept: Vec<f64> = (first..RECALL_POINTS)
        .map(|i| {
            let r = i as f64 / (RECALL_POINTS - 1) as f64;
            (interp_right_zero(r, &rec, &prec) - MIN_PRECISION).max(0.0)
        })
        .collect();
    (kept.iter().sum::<f64>() / kept.len() as f64 / (1.0 - MIN_PRECISION)).min(1.0)
}

/// One evaluated frame: ego-frame predictions and ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEval {
    pub preds: Vec<Box3D>,
    pub gts: Vec<GroundTruthBox>,
}

/// AP at threshold `d` accumulated over frames.
pub fn average_precision(frames: &[FrameEval], d: f64) -> f64 {
    let mut scored: Vec<(f64, usize, usize, bool)> = Vec::new();
    let mut n_gt = 0;
    for (fi, f) in frames.iter().enumerate() {
        n_gt += f.gts.len();
        let m = match_boxes(&f.preds, &f.gts, d);
        for &(pi, _, _) in &m.pairs {
            scored.push((f.preds[pi].score, fi, pi, true));
        }
        for &pi in &m.unmatched_preds {
            scored.push((f.preds[pi].score, fi, pi, false));
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let flags: Vec<bool> = scored.iter().map(|s| s.3).collect();
    average_precision_from_flags(&flags, n_gt)
}

/// `1 - IoU` of two boxes after aligning centres and yaw.
pub fn scale_error(p: &Box3D, g: &GroundTruthBox) -> f64 {
    let inter = p.w.min(g.w) * p.l.min(g.l) * p.h.min(g.h);
    let union = p.w * p.l * p.h + g.w * g.l * g.h - inter;
    if union <= 0.0 {
        return 1.0;
    }
    1.0 - inter / union
}

/// Absolute yaw difference wrapped to `[0, pi]`.
pub fn orientation_error(p: &Box3D, g: &GroundTruthBox) -> f64 {
    wrap_angle(p.yaw - g.yaw).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TpErrors {
    /// `None` when there are no true positives.
    pub ate: Option<f64>,
    pub ase: Option<f64>,
    pub aoe: Option<f64>,
    pub count: usize,
}

/// Mean translation, scale and orientation errors over the matches at
/// [`TP_THRESHOLD`].
pub fn tp_errors(frames: &[FrameEval]) -> TpErrors {
    let (mut ate, mut ase, mut aoe, mut n) = (0.0, 0.0, 0.0, 0usize);
    for f in frames {
        let m = match_boxes(&f.preds, &f.gts, TP_THRESHOLD);
        for &(pi, gi, dist) in &m.pairs {
            let (p, g) = (&f.preds[pi], &f.gts[gi]);
            ate += dist;
            ase += scale_error(p, g);
            aoe += orientation_error(p, g);
            n += 1;
        }
    }
    if n == 0 {
        return TpErrors::default();
    }
    let k = n as f64;
    TpErrors {
        ate: Some(ate / k),
        ase: Some(ase / k),
        aoe: Some(aoe / k),
        count: n,
    }
}

/// `NDS' = (5 mAP + sum(1 - min(1, e))) / 8` over normalized errors
/// `(ATE / 4 m, ASE, AOE / pi)`; a missing error counts as 1.
pub fn nds(map: f64, errors: &TpErrors) -> f64 {
    let norm = [
        errors.ate.map(|e| e / ATE_NORM),
        errors.ase,
        errors.aoe.map(|e| e / PI),
    ];
    nds_from_normalized(map, norm.map(|e| e.unwrap_or(1.0)))
}

pub fn nds_from_normalized(map: f64, normalized: [f64; 3]) -> f64 {
    let tp: f64 = normalized.iter().map(|e| 1.0 - e.min(1.0)).sum();
    (5.0 * map + tp) / 8.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub map: f64,
    pub nds: f64,
    pub ap: [f64; 4],
    pub errors: TpErrors,
    pub frames: usize,
    pub predictions: usize,
    pub ground_truth: usize,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.6}"))
}

impl EvalReport {
    pub fn evaluate(frames: &[FrameEval]) -> Self {
        let ap = DISTANCE_THRESHOLDS.map(|d| average_precision(frames, d));
        let map = ap.iter().sum::<f64>() / ap.len() as f64;
        let errors = tp_errors(frames);
        EvalReport {
            map,
            nds: nds(map, &errors),
            ap,
            errors,
            frames: frames.len(),
            predictions: frames.iter().map(|f| f.preds.len()).sum(),
            ground_truth: frames.iter().map(|f| f.gts.len()).sum(),
        }
    }

    /// One `key=value` pair per line.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "map={:.6}", self.map);
        let _ = writeln!(s, "nds={:.6}", self.nds);
        for (d, ap) in DISTANCE_THRESHOLDS.iter().zip(self.ap) {
            let _ = writeln!(s, "ap@{d}={ap:.6}");
        }
        let _ = writeln!(s, "mate={}", opt(self.errors.ate));
        let _ = writeln!(s, "mase={}", opt(self.errors.ase));
        let _ = writeln!(s, "maoe={}", opt(self.errors.aoe));
        let _ = writeln!(s, "true_positives={}", self.errors.count);
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "predictions={}", self.predictions);
        let _ = writeln!(s, "ground_truth={}", self.ground_truth);
        s
    }

    pub const CSV_HEADER: &'static str =
        "map,nds,ap_0.5,ap_1,ap_2,ap_4,mate,mase,maoe,true_positives,frames,predictions,ground_truth";

    pub fn csv_fields(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{},{},{},{}",
            self.map,
            self.nds,
            self.ap[0],
            self.ap[1],
            self.ap[2],
            self.ap[3],
            opt(self.errors.ate),
            opt(self.errors.ase),
            opt(self.errors.aoe),
            self.errors.count,
            self.frames,
            self.predictions,
            self.ground_truth
        )
    }
}
