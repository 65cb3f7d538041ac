//! Late-intermediate fusion of received detections into the ego BEV grid.
//!
//! Received 2D points become a confidence-weighted positional embedding added
//! onto the ego features; received 3D boxes are rasterized into a 5-channel
//! `(w, h, l, yaw, score)` grid at their centre cells; the two are
//! concatenated channel-wise.

use crate::boxes::Box3D;
use crate::error::{Error, Result};
use crate::geometry::{CellLookup, GridSpec};
use crate::grid::BevGrid;

pub const BOBEV_CHANNELS: usize = 5;

/// Default centre radius for merging duplicate received boxes.
pub const DEFAULT_DEDUPE_RADIUS: f64 = 1.0;

/// A rasterized grid and the number of inputs that fell outside it.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub grid: BevGrid,
    pub skipped: usize,
}

/// Confidence of the strongest point per cell; out-of-range points are counted.
pub fn strongest_per_cell(points: &[(CellLookup, f64)], spec: &GridSpec) -> (Vec<f64>, usize) {
    let mut best = vec![0.0f64; spec.cell_count()];
    let mut skipped = 0;
    for &(lookup, conf) in points {
        match lookup {
            CellLookup::Inside(cell) => {
                let slot = &mut best[spec.index(cell)];
                *slot = slot.max(conf);
            }
            CellLookup::OutOfRange => skipped += 1,
        }
    }
    (best, skipped)
}

/// Confidence-weighted positional embedding: `s * Q` at every cell holding a
/// projected point (strongest point wins), zero elsewhere.
pub fn build_vpe(points: &[(CellLookup, f64)], q: &[f64], spec: &GridSpec) -> Raster {
    let mut grid = BevGrid::for_spec(spec, q.len());
    let (best, skipped) = strongest_per_cell(points, spec);
    for (idx, &s) in best.iter().enumerate() {
        if s != 0.0 {
            for (v, qc) in grid.cell_mut(idx).iter_mut().zip(q) {
                *v = s * qc;
            }
        }
    }
    Raster { grid, skipped }
}

/// `F' = F + VPE'`.
pub fn refine_features(features: &BevGrid, vpe: &BevGrid) -> Result<BevGrid> {
    features.ensure_same_plane(vpe)?;
    if features.channels() != vpe.channels() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature channels vs {} embedding channels",
            features.channels(),
            vpe.channels()
        )));
    }
    let mut out = features.clone();
    for (o, v) in out.values_mut().iter_mut().zip(vpe.values()) {
        *o += v;
    }
    Ok(out)
}

/// Writes `(w, h, l, yaw, score)` of each ego-frame box at its centre cell.
/// When two boxes share a cell the higher score is kept (first on ties).
pub fn build_bobev(boxes: &[Box3D], spec: &GridSpec) -> Raster {
    let mut grid = BevGrid::for_spec(spec, BOBEV_CHANNELS);
    let mut skipped = 0;
    let mut occupied = vec![false; spec.cell_count()];
    for b in boxes {
        let Some(cell) = spec.locate_xy(b.x, b.y) else {
            skipped += 1;
            continue;
        };
        let idx = spec.index(cell);
        let slot = grid.cell_mut(idx);
        if occupied[idx] && slot[4] >= b.score {
            continue;
        }
        occupied[idx] = true;
        slot.copy_from_slice(&[b.w, b.h, b.l, b.yaw, b.score]);
    }
    Raster { grid, skipped }
}

/// Channel-wise concatenation, `F'` first.
pub fn fuse(refined: &BevGrid, bobev: &BevGrid) -> Result<BevGrid> {
    refined.ensure_same_plane(bobev)?;
    let (ca, cb) = (refined.channels(), bobev.channels());
    let mut out = BevGrid::zeros(refined.height(), refined.width(), ca + cb);
    for idx in 0..refined.cell_count() {
        let cell = out.cell_mut(idx);
        cell[..ca].copy_from_slice(refined.cell(idx));
        cell[ca..].copy_from_slice(bobev.cell(idx));
    }
    Ok(out)
}

/// Greedy suppression by descending score: a box is dropped when its BEV
/// centre lies within `radius` of an already kept box.
pub fn dedupe_received(boxes: &[Box3D], radius: f64) -> Vec<Box3D> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));
    let r2 = radius * radius;
    let mut kept: Vec<Box3D> = Vec::new();
    for i in order {
        let b = boxes[i];
        let close = kept.iter().any(|k| {
            let (dx, dy) = (k.x - b.x, k.y - b.y);
            dx * dx + dy * dy < r2
        });
        if !close {
            kept.push(b);
        }
    }
    kept
}
