use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::Vector3;
use proptest::prelude::*;

use skyfuse::boxes::{wrap_angle, Box3D, GroundTruthBox};
use skyfuse::fusion::{build_bobev, build_vpe, dedupe_received, fuse, refine_features};
use skyfuse::geometry::{
    ego_to_bev, ego_to_world, pixel_to_ground, project, world_to_ego, CameraRig, CellLookup, EgoPoint, GridSpec,
    WorldPoint,
};
use skyfuse::grid::BevGrid;
use skyfuse::metrics::orientation_error;

#[test]
fn invalid_rigs_and_grids_are_rejected() {
    let flip = nalgebra::Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
    let err = CameraRig::new(500.0, 500.0, 0.0, 0.0, flip, Vector3::zeros(), 10, 10).unwrap_err();
    assert_eq!(err.kind(), "invalid_rig");
    assert!(CameraRig::new(0.0, 500.0, 0.0, 0.0, nalgebra::Matrix3::identity(), Vector3::zeros(), 10, 10).is_err());
    assert!(GridSpec::new([0.0, 0.0], [1.0, 1.05], 0.1).is_err());
    assert!(GridSpec::centered(10.0, 0.0).is_err());
    assert!(GridSpec::new([1.0, 0.0], [0.0, 1.0], 0.5).is_err());
}

#[test]
fn grid_edges_are_half_open() {
    let spec = GridSpec::centered(2.0, 1.0).unwrap();
    assert_eq!(ego_to_bev(EgoPoint::new(-2.0, -2.0, 0.0), &spec).cell().map(|c| (c.row, c.col)), Some((0, 0)));
    assert_eq!(ego_to_bev(EgoPoint::new(2.0, 0.0, 0.0), &spec), CellLookup::OutOfRange);
    assert_eq!(ego_to_bev(EgoPoint::new(0.0, 2.0, 0.0), &spec), CellLookup::OutOfRange);
    let c = ego_to_bev(EgoPoint::new(1.999, -0.5, 0.0), &spec).cell().unwrap();
    assert_eq!((c.row, c.col), (1, 3));
}

#[test]
fn points_behind_the_camera_do_not_project() {
    let rig = CameraRig::looking(400.0, 400.0, 640, 480, Vector3::new(0.0, 0.0, 30.0), 0.0, PI / 2.0).unwrap();
    assert!(project(&rig, WorldPoint::new(0.0, 0.0, 40.0)).is_none());
    // a downward ray from a level camera never reaches a plane above it
    let level = CameraRig::looking(400.0, 400.0, 640, 480, Vector3::new(0.0, 0.0, 1.0), 0.0, 0.0).unwrap();
    assert!(pixel_to_ground(&level, 320.0, 400.0, 1.5).is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn bev_lookup_is_translation_equivariant(
        x in -19.9f64..19.9, y in -19.9f64..19.9,
        shift in (-5i32..5, -5i32..5),
    ) {
        let res = 0.5;
        let spec = GridSpec::centered(20.0, res).unwrap();
        let origin = Vector3::new(7.25, -3.5, 30.0);
        let world = ego_to_world(EgoPoint::new(x, y, 1.5), &origin);
        let back = world_to_ego(world, &origin);
        prop_assert!((back.0 - Vector3::new(x, y, 1.5)).norm() < 1e-12);
        // moving the ego by whole cells moves the cell by the same count
        let moved = origin + Vector3::new(shift.0 as f64 * res, shift.1 as f64 * res, 0.0);
        let a = ego_to_bev(world_to_ego(world, &origin), &spec).cell();
        let b = ego_to_bev(world_to_ego(world, &moved), &spec).cell();
        if let (Some(a), Some(b)) = (a, b) {
            let dr = a.row as i64 - b.row as i64;
            let dc = a.col as i64 - b.col as i64;
            // floating error may push a point sitting on an edge by one cell
            prop_assert!((dr - shift.1 as i64).abs() <= 1 && (dc - shift.0 as i64).abs() <= 1);
        }
    }

    #[test]
    fn cell_centres_quantize_to_their_cell(row in 0usize..40, col in 0usize..30) {
        let spec = GridSpec::new([-6.0, -10.0], [9.0, 10.0], 0.5).unwrap();
        let cell = skyfuse::geometry::BevCell::new(row, col);
        let [x, y] = spec.cell_center(cell);
        prop_assert_eq!(spec.locate_xy(x, y), Some(cell));
        prop_assert_eq!(spec.cell_at(spec.index(cell)), cell);
    }

    #[test]
    fn nadir_camera_round_trip(
        u in 0.0f64..640.0, v in 0.0f64..480.0,
        pos in (-50.0f64..50.0, -50.0f64..50.0, 10.0f64..120.0),
        yaw in -PI..PI, pitch in 0.3f64..(PI / 2.0),
    ) {
        let rig = CameraRig::looking(450.0, 450.0, 640, 480, Vector3::new(pos.0, pos.1, pos.2), yaw, pitch).unwrap();
        if let Some(p) = pixel_to_ground(&rig, u, v, 1.5) {
            prop_assert!((p.0.z - 1.5).abs() < 1e-9);
            let (pu, pv) = project(&rig, p).unwrap();
            prop_assert!((pu - u).abs() < 1e-6 && (pv - v).abs() < 1e-6);
        }
    }

    #[test]
    fn yaw_error_is_periodic(a in -10.0f64..10.0, b in -10.0f64..10.0, k in -3i32..3) {
        let gt = GroundTruthBox { x: 0.0, y: 0.0, z: 1.5, w: 2.0, h: 1.5, l: 4.0, yaw: b, object_id: 0 };
        let p = Box3D { x: 0.0, y: 0.0, z: 1.5, w: 2.0, h: 1.5, l: 4.0, yaw: a, score: 1.0 };
        let shifted = Box3D { yaw: a + 2.0 * PI * k as f64, ..p };
        let e = orientation_error(&p, &gt);
        prop_assert!((0.0..=PI + 1e-12).contains(&e));
        prop_assert!((e - orientation_error(&shifted, &gt)).abs() < 1e-9);
        let w = wrap_angle(a);
        prop_assert!(w > -PI - 1e-12 && w <= PI + 1e-12);
        let turns = (w - a) / (2.0 * PI);
        prop_assert!((turns - turns.round()).abs() < 1e-9);
    }

    #[test]
    fn vpe_is_linear_in_q_and_sparse(
        pts in prop::collection::vec((-6.0f64..6.0, -6.0f64..6.0, 0.01f64..1.0), 0..30),
        q in prop::collection::vec(-2.0f64..2.0, 3),
        scale in -3.0f64..3.0,
    ) {
        let spec = GridSpec::centered(5.0, 1.0).unwrap();
        let lookups: Vec<_> = pts.iter().map(|&(x, y, s)| (ego_to_bev(EgoPoint::new(x, y, 0.0), &spec), s)).collect();
        let base = build_vpe(&lookups, &q, &spec);
        let scaled_q: Vec<f64> = q.iter().map(|v| v * scale).collect();
        let scaled = build_vpe(&lookups, &scaled_q, &spec);
        for (a, b) in base.grid.values().iter().zip(scaled.grid.values()) {
            prop_assert!((a * scale - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let occupied: std::collections::BTreeSet<_> = lookups.iter().filter_map(|(l, _)| l.cell()).collect();
        prop_assert!(base.grid.count_nonzero_cells() <= occupied.len());
        prop_assert_eq!(base.skipped, lookups.len() - lookups.iter().filter(|(l, _)| l.cell().is_some()).count());
    }

    #[test]
    fn refine_is_additive_and_fusion_slices_back(
        f in prop::collection::vec(-5.0f64..5.0, 100 * 2),
        e1 in prop::collection::vec(-5.0f64..5.0, 100 * 2),
        e2 in prop::collection::vec(-5.0f64..5.0, 100 * 2),
        boxes in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.0f64..1.0), 0..10),
    ) {
        let spec = GridSpec::centered(5.0, 1.0).unwrap();
        let f = BevGrid::from_vec(10, 10, 2, f).unwrap();
        let e1 = BevGrid::from_vec(10, 10, 2, e1).unwrap();
        let e2 = BevGrid::from_vec(10, 10, 2, e2).unwrap();
        let sum = BevGrid::from_vec(10, 10, 2, e1.values().iter().zip(e2.values()).map(|(a, b)| a + b).collect()).unwrap();
        let two_step = refine_features(&refine_features(&f, &e1).unwrap(), &e2).unwrap();
        let one_step = refine_features(&f, &sum).unwrap();
        for (a, b) in two_step.values().iter().zip(one_step.values()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let boxes: Vec<Box3D> = boxes
            .iter()
            .map(|&(x, y, s)| Box3D { x, y, z: 1.5, w: 1.8, h: 1.5, l: 4.2, yaw: 0.1, score: s })
            .collect();
        let bobev = build_bobev(&boxes, &spec).grid;
        let fused = fuse(&one_step, &bobev).unwrap();
        prop_assert_eq!(fused.slice_channels(0, 2), one_step);
        prop_assert_eq!(fused.slice_channels(2, 7), bobev);
    }

    #[test]
    fn dedupe_keeps_separated_strongest_boxes(
        raw in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0, 0.0f64..1.0), 0..25),
        radius in 0.1f64..3.0,
    ) {
        let boxes: Vec<Box3D> = raw
            .iter()
            .map(|&(x, y, s)| Box3D { x, y, z: 1.5, w: 2.0, h: 1.5, l: 4.0, yaw: 0.0, score: s })
            .collect();
        let kept = dedupe_received(&boxes, radius);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() >= radius - 1e-12);
            }
        }
        // every dropped box has a kept neighbour at least as confident
        for b in &boxes {
            if !kept.contains(b) {
                prop_assert!(kept.iter().any(|k| k.score >= b.score
                    && ((k.x - b.x).powi(2) + (k.y - b.y).powi(2)) < radius * radius));
            }
        }
        if let Some(top) = boxes.iter().map(|b| b.score).reduce(f64::max) {
            prop_assert_eq!(kept[0].score, top);
        }
    }
}

#[test]
fn mismatched_planes_do_not_fuse() {
    let a = BevGrid::zeros(4, 4, 2);
    let b = BevGrid::zeros(4, 5, 5);
    assert_eq!(fuse(&a, &b).unwrap_err().kind(), "dimension_mismatch");
    assert!(refine_features(&a, &BevGrid::zeros(4, 4, 3)).is_err());
    assert_abs_diff_eq!(wrap_angle(3.0 * PI), PI, epsilon = 1e-12);
}
