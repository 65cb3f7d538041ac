//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero when any criterion fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, UnitQuaternion, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use skyfuse::boxes::{Box3D, GroundTruthBox};
use skyfuse::comms::{
    self, demand_map, select_shared, uncertainty_map, CommPolicy, DetectionMessage, PolicyKind,
    ProjectedPoint, ShareItem, WireBox, BOX_BYTES, HEADER_BYTES, POINT_BYTES,
};
use skyfuse::fusion::{build_bobev, build_vpe, fuse, refine_features, BOBEV_CHANNELS};
use skyfuse::geometry::{pixel_ray, project, ray_ground_intersect, BevCell, CameraRig, CellLookup, GridSpec, WorldPoint};
use skyfuse::grid::{BevGrid, ScalarMap};
use skyfuse::head::{sample_loss, HeadParams, HeadTargets, TrainConfig, TrainSample};
use skyfuse::scene::AgentObservation;
use skyfuse::sim::{self, SweepAxis};
use skyfuse::{SimConfig, Strategy, StrategyKind};

type Outcome = Result<String, String>;

fn benchmark_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join("benchmark.toml")
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- geometry

fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let v = Vector4::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(v / n));
            return *q.to_rotation_matrix().matrix();
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let h = 1.5;
    let (mut pairs, mut worst) = (0usize, 0.0f64);
    while pairs < 10_000 {
        let (w, hh) = (rng.gen_range(64..2048u32), rng.gen_range(64..2048u32));
        let rig = CameraRig::new(
            rng.gen_range(100.0..2000.0),
            rng.gen_range(100.0..2000.0),
            rng.gen_range(0.0..w as f64),
            rng.gen_range(0.0..hh as f64),
            random_rotation(&mut rng),
            Vector3::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0), rng.gen_range(5.0..150.0)),
            w,
            hh,
        )
        .map_err(|e| e.to_string())?;
        // ground point inside the frustum: back-project a random in-image pixel
        let (u0, v0) = (rng.gen_range(0.0..w as f64), rng.gen_range(0.0..hh as f64));
        let (o, d) = pixel_ray(&rig, u0, v0);
        let Some(p) = ray_ground_intersect(o, d, h) else { continue };
        if (p.0 - rig.translation()).norm() > 1000.0 {
            continue;
        }
        let p = WorldPoint::new(p.0.x, p.0.y, h);
        let (u, v) = project(&rig, p).ok_or("in-frustum point failed to project")?;
        let (o, d) = pixel_ray(&rig, u, v);
        let q = ray_ground_intersect(o, d, h).ok_or("reprojected ray missed the plane")?;
        worst = worst.max((q.0 - p.0).norm());
        pairs += 1;
    }
    let t = start.elapsed();
    check(
        worst < 1e-9 && t < Duration::from_secs(5),
        format!("{pairs} pairs, max error {worst:.3e} m, {:.2} s", t.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- comms

fn random_map(rng: &mut impl Rng, h: usize, w: usize) -> ScalarMap {
    ScalarMap::from_vec(h, w, (0..h * w).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn bare_observation(spec: &GridSpec, score: ScalarMap, visibility: ScalarMap) -> AgentObservation {
    AgentObservation {
        agent_id: 1,
        origin: Vector3::new(3.0, -2.0, 50.0),
        rigs: Vec::new(),
        dets_2d: Vec::new(),
        dets_3d: Vec::new(),
        det_sources: Vec::new(),
        score_map: score,
        visibility,
        features: BevGrid::for_spec(spec, 1),
    }
}

/// Items tagged by a unique score so a message can be mapped back to indices.
fn random_items(rng: &mut impl Rng, spec: &GridSpec, n: usize) -> Vec<ShareItem> {
    (0..n)
        .map(|i| {
            let cell = BevCell::new(rng.gen_range(0..spec.height()), rng.gen_range(0..spec.width()));
            let tag = (i + 1) as f64 / 4096.0;
            if rng.gen_bool(0.5) {
                let [x, y] = spec.cell_center(cell);
                ShareItem::Box {
                    cell,
                    det: Box3D { x, y, z: 1.5, w: 2.0, h: 1.5, l: 4.5, yaw: 0.3, score: tag },
                }
            } else {
                ShareItem::Point {
                    cell,
                    point: ProjectedPoint { x: 1.0, y: 2.0, score: tag as f32 },
                }
            }
        })
        .collect()
}

fn selected_indices(msg: &DetectionMessage) -> BTreeSet<usize> {
    let from_tag = |s: f32| (s as f64 * 4096.0).round() as usize - 1;
    msg.boxes_3d
        .iter()
        .map(|b| from_tag(b.score))
        .chain(msg.points_2d.iter().map(|p| from_tag(p.score)))
        .collect()
}

fn background_set(msg: &DetectionMessage) -> BTreeSet<(u32, u32)> {
    msg.background.iter().map(|b| (b.x.to_bits(), b.y.to_bits())).collect()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let phi = rng.gen_range(0.0..1.0);
        let (si, sj) = (random_map(&mut rng, 64, 64), random_map(&mut rng, 64, 64));
        let (ui, uj) = (uncertainty_map(&si, phi), uncertainty_map(&sj, phi));
        let r = demand_map(&ui, &uj).map_err(|e| e.to_string())?;
        for k in 0..64 * 64 {
            let oi = 1.0 - (si.values()[k] - phi).abs();
            let oj = 1.0 - (sj.values()[k] - phi).abs();
            if ui.values()[k] != oi || uj.values()[k] != oj || r.values()[k] != oi * (1.0 - oj) {
                mismatches += 1;
            }
        }
    }

    let spec = GridSpec::centered(8.0, 1.0).unwrap();
    let (mut set_mismatch, mut closure_violations) = (0usize, 0usize);
    for _ in 0..1000 {
        let n = rng.gen_range(0..60);
        let items = random_items(&mut rng, &spec, n);
        let (h, w) = (spec.height(), spec.width());
        let demand = random_map(&mut rng, h, w);
        let ego_u = random_map(&mut rng, h, w);
        let vis = ScalarMap::from_vec(h, w, (0..h * w).map(|_| f64::from(rng.gen_bool(0.8) as u8)).collect()).unwrap();
        let obs = bare_observation(&spec, random_map(&mut rng, h, w), vis);
        let mut policy = CommPolicy {
            demand_threshold: rng.gen_range(0.0..1.0),
            background_priority: rng.gen_bool(0.5),
            ..CommPolicy::default()
        };
        let sel = select_shared(&obs, &items, &demand, &ego_u, &policy, &spec, 0, 0);
        let oracle: BTreeSet<usize> = (0..items.len())
            .filter(|&i| demand.get(items[i].cell()) > policy.demand_threshold)
            .collect();
        let bg_oracle: BTreeSet<(u32, u32)> = if policy.background_priority {
            (0..h * w)
                .filter(|&k| {
                    let s = obs.score_map.values()[k];
                    1.0 - (s - policy.detection_threshold).abs() < policy.background_max_uncertainty
                        && s < policy.detection_threshold
                        && obs.visibility.values()[k] > 0.0
                        && ego_u.values()[k] >= policy.background_min_ego_uncertainty
                        && demand.values()[k] > policy.demand_threshold
                })
                .map(|k| {
                    let [x, y] = spec.cell_center(spec.cell_at(k));
                    (((x + obs.origin.x) as f32).to_bits(), ((y + obs.origin.y) as f32).to_bits())
                })
                .collect()
        } else {
            BTreeSet::new()
        };
        if selected_indices(&sel.message) != oracle || background_set(&sel.message) != bg_oracle {
            set_mismatch += 1;
        }

        let lower = rng.gen_range(0.0..=policy.demand_threshold);
        let high_items = selected_indices(&sel.message);
        let high_bg = background_set(&sel.message);
        policy.demand_threshold = lower;
        let low = select_shared(&obs, &items, &demand, &ego_u, &policy, &spec, 0, 0);
        if !high_items.is_subset(&selected_indices(&low.message)) || !high_bg.is_subset(&background_set(&low.message)) {
            closure_violations += 1;
        }
    }
    check(
        mismatches == 0 && set_mismatch == 0 && closure_violations == 0,
        format!(
            "elementwise mismatches {mismatches}, selection mismatches {set_mismatch}/1000, closure violations {closure_violations}/1000"
        ),
    )
}

// ---------------------------------------------------------------- wire

fn f(rng: &mut impl Rng) -> f32 {
    rng.gen_range(-1000.0f32..1000.0)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut len_bad, mut trip_bad, mut log_bad) = (0usize, 0usize, 0usize);
    for _ in 0..1000 {
        let mut msg = DetectionMessage::empty(rng.gen(), rng.gen(), rng.gen(), [rng.gen(), rng.gen(), rng.gen()]);
        let k = rng.gen_range(0..300);
        let k3 = rng.gen_range(0..120);
        for _ in 0..k {
            msg.points_2d.push(ProjectedPoint { x: f(&mut rng), y: f(&mut rng), score: rng.gen() });
        }
        for _ in 0..k3 {
            msg.boxes_3d.push(WireBox::from_array(std::array::from_fn(|_| f(&mut rng))));
        }
        let bytes = comms::encode(&msg).map_err(|e| e.to_string())?;
        let detection = k * 12 + k3 * 32;
        if msg.detection_bytes() != detection || bytes.len() != HEADER_BYTES + detection {
            len_bad += 1;
        }
        if POINT_BYTES != 3 * 32 / 8 || BOX_BYTES != 8 * 32 / 8 {
            len_bad += 1;
        }
        let formula = (k * 3 * 32 / 8 + k3 * 8 * 32 / 8) as f64;
        match comms::comm_volume_log2(&msg) {
            Some(v) if v == formula.log2() => {}
            None if formula == 0.0 => {}
            _ => log_bad += 1,
        }
        match comms::decode(&bytes) {
            Ok(back) if back == msg => {}
            _ => trip_bad += 1,
        }
    }
    check(
        len_bad == 0 && trip_bad == 0 && log_bad == 0,
        format!("length mismatches {len_bad}, log2 mismatches {log_bad}, round-trip failures {trip_bad} of 1000"),
    )
}

// ---------------------------------------------------------------- fusion

fn oracle_cell(spec: &GridSpec, x: f64, y: f64) -> Option<usize> {
    let col = ((x - spec.extent_min()[0]) / spec.resolution()).floor();
    let row = ((y - spec.extent_min()[1]) / spec.resolution()).floor();
    if col < 0.0 || row < 0.0 || col >= spec.width() as f64 || row >= spec.height() as f64 {
        None
    } else {
        Some(row as usize * spec.width() + col as usize)
    }
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut vpe_bad, mut bobev_bad, mut fuse_bad, mut slice_bad, mut zero_bad) = (0, 0, 0, 0, 0);
    for _ in 0..1000 {
        let res = [0.25, 0.5, 1.0, 2.0][rng.gen_range(0..4)];
        let (wc, hc) = (rng.gen_range(1..20), rng.gen_range(1..20));
        let x0 = rng.gen_range(-10..0) as f64 * res;
        let y0 = rng.gen_range(-10..0) as f64 * res;
        let spec = GridSpec::new([x0, y0], [x0 + wc as f64 * res, y0 + hc as f64 * res], res).unwrap();
        let n = spec.cell_count();
        let c = rng.gen_range(1..6);
        let features = BevGrid::from_vec(hc, wc, c, (0..n * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let q: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();

        let np = rng.gen_range(0..40);
        let mut raw_points = Vec::with_capacity(np);
        let mut points = Vec::with_capacity(np);
        for _ in 0..np {
            let x = rng.gen_range(x0 - 2.0..x0 + wc as f64 * res + 2.0);
            let y = rng.gen_range(y0 - 2.0..y0 + hc as f64 * res + 2.0);
            let s = rng.gen_range(1..=8) as f64 / 8.0;
            let lookup = match oracle_cell(&spec, x, y) {
                Some(i) => CellLookup::Inside(spec.cell_at(i)),
                None => CellLookup::OutOfRange,
            };
            raw_points.push((x, y, s));
            points.push((lookup, s));
        }
        let vpe = build_vpe(&points, &q, &spec);
        let mut oracle_vpe = vec![0.0; n * c];
        for cell in 0..n {
            let best = raw_points
                .iter()
                .filter(|(x, y, _)| oracle_cell(&spec, *x, *y) == Some(cell))
                .map(|p| p.2)
                .fold(0.0f64, f64::max);
            if best > 0.0 {
                for k in 0..c {
                    oracle_vpe[cell * c + k] = best * q[k];
                }
            }
        }
        let skipped = raw_points.iter().filter(|(x, y, _)| oracle_cell(&spec, *x, *y).is_none()).count();
        if vpe.grid.values() != oracle_vpe.as_slice() || vpe.skipped != skipped {
            vpe_bad += 1;
        }

        let nb = rng.gen_range(0..25);
        let boxes: Vec<Box3D> = (0..nb)
            .map(|_| Box3D {
                x: rng.gen_range(x0 - 2.0..x0 + wc as f64 * res + 2.0),
                y: rng.gen_range(y0 - 2.0..y0 + hc as f64 * res + 2.0),
                z: 1.5,
                w: rng.gen_range(0.5..3.0),
                h: rng.gen_range(0.5..3.0),
                l: rng.gen_range(0.5..6.0),
                yaw: rng.gen_range(-3.0..3.0),
                score: rng.gen_range(1..=4) as f64 / 4.0,
            })
            .collect();
        let bobev = build_bobev(&boxes, &spec);
        let mut oracle_b = vec![0.0; n * BOBEV_CHANNELS];
        for cell in 0..n {
            let mut winner: Option<&Box3D> = None;
            for b in boxes.iter().filter(|b| oracle_cell(&spec, b.x, b.y) == Some(cell)) {
                if winner.map_or(true, |w| b.score > w.score) {
                    winner = Some(b);
                }
            }
            if let Some(b) = winner {
                oracle_b[cell * 5..cell * 5 + 5].copy_from_slice(&[b.w, b.h, b.l, b.yaw, b.score]);
            }
        }
        if bobev.grid.values() != oracle_b.as_slice() {
            bobev_bad += 1;
        }

        let refined = refine_features(&features, &vpe.grid).map_err(|e| e.to_string())?;
        let fused = fuse(&refined, &bobev.grid).map_err(|e| e.to_string())?;
        let mut fuse_ok = fused.channels() == c + 5;
        for cell in 0..n {
            for k in 0..c {
                fuse_ok &= fused.values()[cell * (c + 5) + k] == features.values()[cell * c + k] + oracle_vpe[cell * c + k];
            }
            for k in 0..5 {
                fuse_ok &= fused.values()[cell * (c + 5) + c + k] == oracle_b[cell * 5 + k];
            }
        }
        if !fuse_ok {
            fuse_bad += 1;
        }
        if fused.slice_channels(0, c) != refined || fused.slice_channels(c, c + 5) != bobev.grid {
            slice_bad += 1;
        }

        let empty_vpe = build_vpe(&[], &q, &spec);
        let empty_bobev = build_bobev(&[], &spec);
        let alone = fuse(&refine_features(&features, &empty_vpe.grid).unwrap(), &empty_bobev.grid).unwrap();
        let mut augmented = vec![0.0; n * (c + 5)];
        for cell in 0..n {
            augmented[cell * (c + 5)..cell * (c + 5) + c].copy_from_slice(features.cell(cell));
        }
        if alone.values() != augmented.as_slice() {
            zero_bad += 1;
        }
    }
    check(
        vpe_bad + bobev_bad + fuse_bad + slice_bad + zero_bad == 0,
        format!(
            "mismatches of 1000: vpe {vpe_bad}, bobev {bobev_bad}, fuse {fuse_bad}, slice recovery {slice_bad}, zero-message {zero_bad}"
        ),
    )
}

// ---------------------------------------------------------------- gradients

fn random_instance(rng: &mut impl Rng) -> (TrainSample, HeadParams) {
    let spec = GridSpec::centered(4.0, 1.0).unwrap();
    let n = spec.cell_count();
    let c = rng.gen_range(2..7);
    let features = BevGrid::from_vec(8, 8, c, (0..n * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let vpe: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.2..1.0) } else { 0.0 }).collect();
    let mut bobev = BevGrid::for_spec(&spec, BOBEV_CHANNELS);
    for cell in 0..n {
        if rng.gen_bool(0.2) {
            let v = [rng.gen_range(1.0..3.0), rng.gen_range(1.0..2.0), rng.gen_range(2.0..5.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.2..1.0)];
            bobev.cell_mut(cell).copy_from_slice(&v);
        }
    }
    let gts: Vec<GroundTruthBox> = (0..rng.gen_range(1..4))
        .map(|i| GroundTruthBox {
            x: rng.gen_range(-3.9..3.9),
            y: rng.gen_range(-3.9..3.9),
            z: 1.5,
            w: rng.gen_range(1.0..2.5),
            h: rng.gen_range(1.0..2.0),
            l: rng.gen_range(2.0..5.0),
            yaw: rng.gen_range(-3.0..3.0),
            object_id: i,
        })
        .collect();
    let sample = TrainSample {
        features: Arc::new(features),
        vpe_confidence: Arc::new(vpe),
        bobev: Arc::new(bobev),
        targets: HeadTargets::render(&gts, &spec),
    };
    let mut flat = HeadParams::zeros(c).flatten();
    for v in flat.iter_mut() {
        *v = rng.gen_range(-0.3..0.3);
    }
    (sample, HeadParams::from_flat(c, &flat).unwrap())
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = TrainConfig::default();
    let step = 1e-5;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for _ in 0..50 {
        let (sample, params) = random_instance(&mut rng);
        let c = params.feature_channels();
        let (_, grad) = sample_loss(&sample, &params, &cfg, true);
        let analytic = grad.ok_or("no gradient returned")?.flatten();
        let flat = params.flatten();
        for i in 0..flat.len() {
            let eval = |delta: f64| {
                let mut p = flat.clone();
                p[i] += delta;
                sample_loss(&sample, &HeadParams::from_flat(c, &p).unwrap(), &cfg, false).0
            };
            let numeric = (eval(step) - eval(-step)) / (2.0 * step);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
            checked += 1;
        }
    }
    let t = start.elapsed();
    check(
        worst < 1e-4 && t < Duration::from_secs(60),
        format!("{checked} parameters over 50 instances, max relative error {worst:.3e}, {:.2} s", t.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- benchmark

struct Bench {
    cfg: SimConfig,
    no_fusion: Arc<HeadParams>,
    lif_full: Arc<HeadParams>,
}

fn strategy(bench: &Bench, kind: StrategyKind, policy: CommPolicy) -> Result<Strategy, String> {
    let head = match kind {
        StrategyKind::NoFusion => Some(bench.no_fusion.clone()),
        StrategyKind::LifFull => Some(bench.lif_full.clone()),
        _ => None,
    };
    Strategy::new(kind, policy, head).map_err(|e| e.to_string())
}

fn criterion_6(bench: &mut Option<Bench>) -> Outcome {
    let start = Instant::now();
    let cfg = SimConfig::load(&benchmark_path()).map_err(|e| e.to_string())?;
    let heads = sim::train_heads(&cfg, &[StrategyKind::NoFusion, StrategyKind::LifFull], 1).map_err(|e| e.to_string())?;
    let converged = heads.iter().all(|h| {
        let t = &h.loss_trace;
        t.last().unwrap() < t.first().unwrap()
    });
    let b = Bench {
        no_fusion: Arc::new(heads[0].params.clone()),
        lif_full: Arc::new(heads[1].params.clone()),
        cfg,
    };
    let runs = [StrategyKind::NoFusion, StrategyKind::LateFusion, StrategyKind::LifFull]
        .into_iter()
        .map(|k| Ok((k.as_str().to_string(), strategy(&b, k, b.cfg.policy.clone())?)))
        .collect::<Result<Vec<_>, String>>()?;
    let s = sim::run_suite(&b.cfg, &runs, 1).map_err(|e| e.to_string())?;
    let (none, late, full) = (s[0].eval.map, s[1].eval.map, s[2].eval.map);
    let t = start.elapsed();
    *bench = Some(b);
    check(
        converged && full >= none + 0.05 && late >= none + 0.03 && t < Duration::from_secs(600),
        format!(
            "mAP no-fusion {none:.4}, late-fusion {late:.4}, lif-full {full:.4}; training loss decreased: {converged}; {:.1} s",
            t.as_secs_f64()
        ),
    )
}

fn criterion_7(bench: &Bench) -> Outcome {
    let values = [1.0, 0.8, 0.5, 0.2, 0.0];
    let base = strategy(bench, StrategyKind::LifFull, bench.cfg.policy.clone())?;
    let points = sim::sweep(&bench.cfg, &base, SweepAxis::DemandThreshold, &values, 1).map_err(|e| e.to_string())?;
    let maps: Vec<f64> = points.iter().map(|p| p.summary.eval.map).collect();
    let ok = maps.windows(2).all(|w| w[1] >= w[0] - 0.01);
    let curve: Vec<String> = values.iter().zip(&maps).map(|(v, m)| format!("{v}:{m:.4}")).collect();
    check(ok, format!("phi_dem:mAP {}", curve.join(" ")))
}

fn criterion_8(bench: &Bench) -> Outcome {
    let budgets = [128.0, 512.0, 2048.0, 8192.0];
    let uncertainty = CommPolicy {
        kind: PolicyKind::Uncertainty,
        demand_threshold: 0.1,
        background_priority: true,
        ..bench.cfg.policy.clone()
    };
    let objectness = CommPolicy {
        kind: PolicyKind::Objectness,
        objectness_threshold: 0.0,
        background_priority: false,
        ..bench.cfg.policy.clone()
    };
    let mut last = Vec::new();
    for policy in [uncertainty, objectness] {
        let base = strategy(bench, StrategyKind::LifFull, policy)?;
        let points = sim::sweep(&bench.cfg, &base, SweepAxis::BudgetBytes, &budgets, 1).map_err(|e| e.to_string())?;
        last.push(points.last().unwrap().summary.clone());
    }
    let (u, o) = (&last[0], &last[1]);
    check(
        u.eval.map >= o.eval.map - 0.005 && u.ambiguous_per_byte() < o.ambiguous_per_byte(),
        format!(
            "budget 8192: mAP uncertainty {:.4} vs objectness {:.4}; ambiguous/byte {:.3e} ({} / {}) vs {:.3e} ({} / {})",
            u.eval.map,
            o.eval.map,
            u.ambiguous_per_byte(),
            u.ambiguous_items,
            u.payload_bytes,
            o.ambiguous_per_byte(),
            o.ambiguous_items,
            o.payload_bytes
        ),
    )
}

fn cli_report(threads: usize, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_skyfuse"))
        .arg("report")
        .arg("--scenario")
        .arg(benchmark_path())
        .arg("--threads")
        .arg(threads.to_string())
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    Ok(())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("t1"), dir.path().join("t8"));
    cli_report(1, &a)?;
    cli_report(8, &b)?;
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv") || n.ends_with(".bin"))
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for n in &names {
        if std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok() {
            differing.push(n.clone());
        }
    }
    check(
        names.iter().any(|n| n == "report.csv") && differing.is_empty(),
        format!("compared {} ({}), differing: {:?}", names.len(), names.join(" "), differing),
    )
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id} {tag} {name}: {detail}");
    };
    report(1, "geometry round trip", criterion_1());
    report(2, "communication algebra", criterion_2());
    report(3, "bandwidth bit-exactness", criterion_3());
    report(4, "fusion correctness", criterion_4());
    report(5, "gradient check", criterion_5());
    let mut bench = None;
    report(6, "trend reproduction", criterion_6(&mut bench));
    match &bench {
        Some(b) => {
            report(7, "trade-off curve shape", criterion_7(b));
            report(8, "policy comparison", criterion_8(b));
        }
        None => {
            report(7, "trade-off curve shape", Err("benchmark heads unavailable".into()));
            report(8, "policy comparison", Err("benchmark heads unavailable".into()));
        }
    }
    report(9, "determinism across thread counts", criterion_9());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
