//! Pinhole camera model, pixel rays, ground-plane intersection and the
//! world → ego → BEV-cell chain.
//!
//! Camera axes follow the usual computer-vision convention: X right, Y down,
//! Z forward along the optical axis. A rig stores the camera-to-world
//! rotation `R` and the camera origin `T` in world coordinates, so a point in
//! camera coordinates maps to `R * p_c + T`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Default assumed object plane height in meters.
pub const DEFAULT_OBJECT_HEIGHT: f64 = 1.5;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint(pub Vector3<f64>);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoPoint(pub Vector3<f64>);

impl WorldPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        WorldPoint(Vector3::new(x, y, z))
    }
}

impl EgoPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        EgoPoint(Vector3::new(x, y, z))
    }
}

/// Integer BEV cell. `row` indexes the y axis, `col` the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BevCell {
    pub row: usize,
    pub col: usize,
}

impl BevCell {
    pub fn new(row: usize, col: usize) -> Self {
        BevCell { row, col }
    }
}

/// Result of quantizing an ego point onto a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellLookup {
    Inside(BevCell),
    OutOfRange,
}

impl CellLookup {
    pub fn cell(self) -> Option<BevCell> {
        match self {
            CellLookup::Inside(c) => Some(c),
            CellLookup::OutOfRange => None,
        }
    }
}

/// Extent and resolution of an ego-centred BEV grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    extent_min: [f64; 2],
    extent_max: [f64; 2],
    resolution: f64,
    width: usize,
    height: usize,
}

impl GridSpec {
    /// Builds a grid over `[min, max]` in x and y. The extent must be an exact
    /// integer multiple of `resolution` along both axes.
    pub fn new(extent_min: [f64; 2], extent_max: [f64; 2], resolution: f64) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        let mut dims = [0usize; 2];
        for axis in 0..2 {
            let span = extent_max[axis] - extent_min[axis];
            if !(span.is_finite() && span > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "empty extent on axis {axis}: [{}, {}]",
                    extent_min[axis], extent_max[axis]
                )));
            }
            let cells = span / resolution;
            let rounded = cells.round();
            if (cells - rounded).abs() > 1e-6 * rounded.max(1.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent {span} on axis {axis} is not a multiple of resolution {resolution}"
                )));
            }
            dims[axis] = rounded as usize;
        }
        Ok(GridSpec {
            extent_min,
            extent_max,
            resolution,
            width: dims[0],
            height: dims[1],
        })
    }

    /// Square grid centred on the ego origin.
    pub fn centered(half_extent: f64, resolution: f64) -> Result<Self> {
        GridSpec::new(
            [-half_extent, -half_extent],
            [half_extent, half_extent],
            resolution,
        )
    }

    pub fn extent_min(&self) -> [f64; 2] {
        self.extent_min
    }

    pub fn extent_max(&self) -> [f64; 2] {
        self.extent_max
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    /// Cells along x.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Cells along y.
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    /// Row-major flat index.
    pub fn index(&self, cell: BevCell) -> usize {
        cell.row * self.width + cell.col
    }

    pub fn cell_at(&self, index: usize) -> BevCell {
        BevCell::new(index / self.width, index % self.width)
    }

    /// Ego-frame (x, y) of the cell centre.
    pub fn cell_center(&self, cell: BevCell) -> [f64; 2] {
        [
            self.extent_min[0] + (cell.col as f64 + 0.5) * self.resolution,
            self.extent_min[1] + (cell.row as f64 + 0.5) * self.resolution,
        ]
    }

    /// Quantizes an (x, y) ego position; `None` outside the extent.
    pub fn locate_xy(&self, x: f64, y: f64) -> Option<BevCell> {
        let fx = ((x - self.extent_min[0]) / self.resolution).floor();
        let fy = ((y - self.extent_min[1]) / self.resolution).floor();
        if !(fx >= 0.0 && fy >= 0.0) {
            return None;
        }
        let (col, row) = (fx as usize, fy as usize);
        if col >= self.width || row >= self.height {
            return None;
        }
        Some(BevCell::new(row, col))
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::centered(102.4, 0.8).expect("default grid is valid")
    }
}

/// Intrinsics and pose of a single camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraRig {
    /// Validates focal lengths and that `rotation` is a proper rotation.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
        image_w: u32,
        image_h: u32,
    ) -> Result<Self> {
        if !(fx > 0.0 && fy > 0.0 && fx.is_finite() && fy.is_finite()) {
            return Err(Error::InvalidRig(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if !(gram_err <= ORTHONORMAL_TOL) {
            return Err(Error::InvalidRig(format!(
                "rotation is not orthonormal (max |R^T R - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(Error::InvalidRig(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRig("non-finite translation".into()));
        }
        Ok(CameraRig {
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            image_w,
            image_h,
        })
    }

    /// Camera at `position` whose optical axis points along heading `yaw`
    /// (radians from world +x, counter-clockwise) tilted `pitch` radians below
    /// the horizon. `pitch = pi/2` is a nadir view.
    pub fn looking(
        fx: f64,
        fy: f64,
        image_w: u32,
        image_h: u32,
        position: Vector3<f64>,
        yaw: f64,
        pitch: f64,
    ) -> Result<Self> {
        let rotation = heading_rotation(yaw, pitch);
        CameraRig::new(
            fx,
            fy,
            image_w as f64 / 2.0,
            image_h as f64 / 2.0,
            rotation,
            position,
            image_w,
            image_h,
        )
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// Same intrinsics and orientation, camera origin moved to `position`.
    pub fn with_translation(&self, position: Vector3<f64>) -> Self {
        CameraRig {
            translation: position,
            ..self.clone()
        }
    }

    pub fn contains_pixel(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.image_w as f64 && v < self.image_h as f64
    }
}

/// Camera-to-world rotation with columns (right, down, forward).
pub fn heading_rotation(yaw: f64, pitch: f64) -> Matrix3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let forward = Vector3::new(cp * cy, cp * sy, -sp);
    let right = Vector3::new(sy, -cy, 0.0);
    let down = forward.cross(&right);
    Matrix3::from_columns(&[right, down, forward])
}

/// World-frame ray through pixel `(u, v)`: `origin + r * dir` for `r > 0`.
/// `dir` is not normalized; its camera-frame z component is 1.
pub fn pixel_ray(rig: &CameraRig, u: f64, v: f64) -> (WorldPoint, Vector3<f64>) {
    let cam_dir = Vector3::new((u - rig.cx) / rig.fx, (v - rig.cy) / rig.fy, 1.0);
    (WorldPoint(rig.translation), rig.rotation * cam_dir)
}

/// Intersects a ray with the horizontal plane `z = h`. Returns `None` for rays
/// parallel to the plane or when the plane lies behind the origin.
pub fn ray_ground_intersect(origin: WorldPoint, dir: Vector3<f64>, h: f64) -> Option<WorldPoint> {
    if dir.z == 0.0 {
        return None;
    }
    let r = (h - origin.0.z) / dir.z;
    if !(r > 0.0) {
        return None;
    }
    Some(WorldPoint(origin.0 + dir * r))
}

/// Forward projection of a world point to pixel coordinates. `None` when the
/// point is at or behind the camera plane. Image bounds are not checked.
pub fn project(rig: &CameraRig, p: WorldPoint) -> Option<(f64, f64)> {
    let pc = rig.rotation.transpose() * (p.0 - rig.translation);
    if pc.z <= 0.0 {
        return None;
    }
    Some((rig.fx * pc.x / pc.z + rig.cx, rig.fy * pc.y / pc.z + rig.cy))
}

/// Pixel back-projected onto the object plane at height `h`.
pub fn pixel_to_ground(rig: &CameraRig, u: f64, v: f64, h: f64) -> Option<WorldPoint> {
    let (origin, dir) = pixel_ray(rig, u, v);
    ray_ground_intersect(origin, dir, h)
}

/// Ego and world frames share axis directions; only a translation separates them.
pub fn world_to_ego(p: WorldPoint, ego_origin: &Vector3<f64>) -> EgoPoint {
    EgoPoint(p.0 - ego_origin)
}

pub fn ego_to_world(p: EgoPoint, ego_origin: &Vector3<f64>) -> WorldPoint {
    WorldPoint(p.0 + ego_origin)
}

/// Quantizes an ego point onto the grid, ignoring z. Points outside the
/// extent are reported, never clamped.
pub fn ego_to_bev(p: EgoPoint, spec: &GridSpec) -> CellLookup {
    match spec.locate_xy(p.0.x, p.0.y) {
        Some(cell) => CellLookup::Inside(cell),
        None => CellLookup::OutOfRange,
    }
}
