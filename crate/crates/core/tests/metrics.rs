use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use skyfuse::boxes::{Box3D, GroundTruthBox};
use skyfuse::metrics::{
    average_precision, average_precision_from_flags, match_boxes, nds, nds_from_normalized, scale_error, tp_errors,
    EvalReport, FrameEval, TpErrors,
};

fn gt(x: f64, y: f64) -> GroundTruthBox {
    GroundTruthBox { x, y, z: 1.5, w: 2.0, h: 1.5, l: 4.5, yaw: 0.0, object_id: 0 }
}

fn pred(x: f64, y: f64, score: f64) -> Box3D {
    Box3D { x, y, z: 1.5, w: 2.0, h: 1.5, l: 4.5, yaw: 0.0, score }
}

/// Reference values from numpy: cumulative precision/recall,
/// `np.interp(linspace(0, 1, 101), rec, prec, right=0)`, points from index 11,
/// minus 0.1 clipped at 0, mean, divided by 0.9.
#[test]
fn ap_matches_numpy_reference() {
    let cases: [(&[u8], usize, f64); 5] = [
        (&[1, 0, 1], 2, 0.7376543209876544),
        (&[0, 1, 0, 1, 1, 0, 0, 1], 6, 0.25390005878894767),
        (&[1, 0, 0, 0, 0, 0, 0, 0, 0, 1], 3, 0.2781893004115227),
        (&[0, 0, 0, 1], 1, 0.05648148148148148),
        (&[1, 1, 0, 1, 0, 0, 1, 1, 0, 1, 0, 0, 0, 1], 12, 0.31311463844797177),
    ];
    for (flags, n_gt, expect) in cases {
        let flags: Vec<bool> = flags.iter().map(|&f| f == 1).collect();
        assert_abs_diff_eq!(average_precision_from_flags(&flags, n_gt), expect, epsilon = 1e-12);
    }
    // numpy gives 1.0000000000000004 here; AP is capped
    assert_eq!(average_precision_from_flags(&[true; 4], 4), 1.0);
    assert_eq!(average_precision_from_flags(&[], 3), 0.0);
    assert_eq!(average_precision_from_flags(&[true], 0), 0.0);
}

#[test]
fn distance_threshold_is_strict() {
    let frames = [FrameEval { preds: vec![pred(1.0, 0.0, 0.9)], gts: vec![gt(0.0, 0.0)] }];
    assert_eq!(average_precision(&frames, 1.0), 0.0);
    assert_eq!(average_precision(&frames, 1.0 + 1e-9), 1.0);
}

#[test]
fn tp_errors_and_nds_on_a_worked_case() {
    let mut p = pred(0.3, 0.4, 0.8);
    p.w = 1.0;
    p.yaw = 0.5;
    let frames = [FrameEval { preds: vec![p, pred(30.0, 0.0, 0.5)], gts: vec![gt(0.0, 0.0)] }];
    let e = tp_errors(&frames);
    assert_eq!(e.count, 1);
    assert_abs_diff_eq!(e.ate.unwrap(), 0.5, epsilon = 1e-12);
    // prediction volume 1 x 4.5 x 1.5 sits inside 2 x 4.5 x 1.5
    assert_abs_diff_eq!(e.ase.unwrap(), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(e.aoe.unwrap(), 0.5, epsilon = 1e-12);
    assert_abs_diff_eq!(scale_error(&pred(0.0, 0.0, 1.0), &gt(5.0, 5.0)), 0.0, epsilon = 1e-15);

    let report = EvalReport::evaluate(&frames);
    let expect = (5.0 * report.map + (1.0 - 0.5 / 4.0) + 0.5 + (1.0 - 0.5 / std::f64::consts::PI)) / 8.0;
    assert_abs_diff_eq!(report.nds, expect, epsilon = 1e-12);
    assert_eq!(report.predictions, 2);
    assert_eq!(report.ground_truth, 1);
}

#[test]
fn missing_errors_count_as_worst() {
    assert_abs_diff_eq!(nds(0.4, &TpErrors::default()), 5.0 * 0.4 / 8.0, epsilon = 1e-15);
    assert_abs_diff_eq!(nds_from_normalized(1.0, [0.0, 0.0, 0.0]), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(nds_from_normalized(0.5, [2.0, 3.0, 1.5]), 2.5 / 8.0, epsilon = 1e-15);
    let empty = EvalReport::evaluate(&[]);
    assert!(empty.csv_fields().contains("nan"));
    assert_eq!(EvalReport::CSV_HEADER.split(',').count(), empty.csv_fields().split(',').count());
}

/// Greedy matching oracle written as an explicit search over all unclaimed pairs.
fn oracle_match(preds: &[Box3D], gts: &[GroundTruthBox], d: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
    let mut taken = vec![false; gts.len()];
    let mut out = Vec::new();
    for pi in order {
        let nearest = (0..gts.len())
            .filter(|&g| !taken[g])
            .map(|g| (g, ((preds[pi].x - gts[g].x).powi(2) + (preds[pi].y - gts[g].y).powi(2)).sqrt()))
            .fold(None, |best: Option<(usize, f64)>, (g, dist)| match best {
                Some((_, bd)) if bd <= dist => best,
                _ => Some((g, dist)),
            });
        if let Some((g, dist)) = nearest {
            if dist < d {
                taken[g] = true;
                out.push((pi, g));
            }
        }
    }
    out
}

/// AP oracle: precision envelope sampled with a linear scan instead of a binary search.
fn oracle_ap(flags: &[bool], n_gt: usize) -> f64 {
    if n_gt == 0 || flags.is_empty() {
        return 0.0;
    }
    let (mut rec, mut prec) = (Vec::new(), Vec::new());
    let mut tp = 0usize;
    for (i, &f) in flags.iter().enumerate() {
        tp += f as usize;
        rec.push(tp as f64 / n_gt as f64);
        prec.push(tp as f64 / (i + 1) as f64);
    }
    let mut acc = 0.0;
    for k in 11..=100 {
        let r = k as f64 / 100.0;
        let p = if r > *rec.last().unwrap() {
            0.0
        } else if r < rec[0] {
            prec[0]
        } else {
            let mut j = 0;
            while j + 1 < rec.len() && rec[j + 1] <= r {
                j += 1;
            }
            if j + 1 == rec.len() {
                prec[j]
            } else {
                prec[j] + (prec[j + 1] - prec[j]) * (r - rec[j]) / (rec[j + 1] - rec[j])
            }
        };
        acc += (p - 0.1).max(0.0);
    }
    (acc / 90.0 / 0.9).min(1.0)
}

fn scene() -> impl Strategy<Value = (Vec<Box3D>, Vec<GroundTruthBox>)> {
    let preds = prop::collection::vec((-8.0f64..8.0, -8.0f64..8.0, 0.0f64..1.0), 0..15)
        .prop_map(|v| v.into_iter().map(|(x, y, s)| pred(x, y, s)).collect());
    let gts = prop::collection::vec((-8.0f64..8.0, -8.0f64..8.0), 0..12)
        .prop_map(|v| v.into_iter().map(|(x, y)| gt(x, y)).collect());
    (preds, gts)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matching_agrees_with_oracle((preds, gts) in scene(), d in 0.1f64..5.0) {
        let m = match_boxes(&preds, &gts, d);
        let got: Vec<(usize, usize)> = m.pairs.iter().map(|&(p, g, _)| (p, g)).collect();
        prop_assert_eq!(&got, &oracle_match(&preds, &gts, d));
        prop_assert_eq!(m.pairs.len() + m.unmatched_preds.len(), preds.len());
        prop_assert_eq!(m.pairs.len() + m.unmatched_gts.len(), gts.len());
        for &(_, _, dist) in &m.pairs {
            prop_assert!(dist < d);
        }
    }

    #[test]
    fn ap_agrees_with_oracle(flags in prop::collection::vec(any::<bool>(), 0..60), extra in 0usize..10) {
        let n_gt = flags.iter().filter(|&&f| f).count() + extra;
        let ap = average_precision_from_flags(&flags, n_gt);
        prop_assert!((ap - oracle_ap(&flags, n_gt)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ap));
    }

    #[test]
    fn metric_invariants((preds, gts) in scene(), shift in (-50.0f64..50.0, -50.0f64..50.0)) {
        let frames = [FrameEval { preds: preds.clone(), gts: gts.clone() }];
        let base = EvalReport::evaluate(&frames);
        prop_assert!((0.0..=1.0).contains(&base.map) && (0.0..=1.0).contains(&base.nds));
        // AP never decreases with a looser threshold
        for w in base.ap.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        // translating everything together leaves the metrics unchanged
        let moved = [FrameEval {
            preds: preds.iter().map(|p| p.translated(shift.0, shift.1, 0.0)).collect(),
            gts: gts.iter().map(|g| GroundTruthBox { x: g.x + shift.0, y: g.y + shift.1, ..*g }).collect(),
        }];
        let after = EvalReport::evaluate(&moved);
        prop_assert!((after.map - base.map).abs() < 1e-9);
        // perfect predictions score 1
        let perfect = [FrameEval { preds: gts.iter().map(|g| Box3D::from_gt(g, 0.9)).collect(), gts: gts.clone() }];
        if !gts.is_empty() {
            prop_assert_eq!(EvalReport::evaluate(&perfect).map, 1.0);
        }
    }
}
