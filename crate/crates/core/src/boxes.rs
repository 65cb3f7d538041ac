//! Box records and BEV footprint geometry.
//!
//! Size convention: `w` is the lateral extent, `l` the extent along the
//! heading `yaw`, `h` the vertical extent.

use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundTruthBox {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub h: f64,
    pub l: f64,
    pub yaw: f64,
    pub object_id: u32,
}

/// Image-space detection: centre, size and confidence, all in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box2D {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

/// 3D detection `[x, y, z, w, h, l, yaw, score]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub h: f64,
    pub l: f64,
    pub yaw: f64,
    pub score: f64,
}

impl Box3D {
    pub fn from_gt(gt: &GroundTruthBox, score: f64) -> Self {
        Box3D {
            x: gt.x,
            y: gt.y,
            z: gt.z,
            w: gt.w,
            h: gt.h,
            l: gt.l,
            yaw: gt.yaw,
            score,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64, dz: f64) -> Self {
        Box3D {
            x: self.x + dx,
            y: self.y + dy,
            z: self.z + dz,
            ..*self
        }
    }

    pub fn as_array(&self) -> [f64; 8] {
        [
            self.x, self.y, self.z, self.w, self.h, self.l, self.yaw, self.score,
        ]
    }

    pub fn footprint(&self) -> [[f64; 2]; 4] {
        footprint_corners(self.x, self.y, self.w, self.l, self.yaw)
    }

    /// The eight 3D corners.
    pub fn corners(&self) -> [[f64; 3]; 8] {
        let fp = self.footprint();
        let mut out = [[0.0; 3]; 8];
        for (i, c) in fp.iter().enumerate() {
            out[i] = [c[0], c[1], self.z - self.h / 2.0];
            out[i + 4] = [c[0], c[1], self.z + self.h / 2.0];
        }
        out
    }
}

impl GroundTruthBox {
    pub fn footprint(&self) -> [[f64; 2]; 4] {
        footprint_corners(self.x, self.y, self.w, self.l, self.yaw)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Counter-clockwise footprint corners.
pub fn footprint_corners(x: f64, y: f64, w: f64, l: f64, yaw: f64) -> [[f64; 2]; 4] {
    let (s, c) = yaw.sin_cos();
    let (hl, hw) = (l / 2.0, w / 2.0);
    let local = [[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]];
    local.map(|[a, b]| [x + a * c - b * s, y + a * s + b * c])
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        acc += x0 * y1 - x1 * y0;
    }
    acc.abs() / 2.0
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Sutherland–Hodgman clip of `subject` against the convex CCW polygon `clip`.
fn clip_convex(subject: &[[f64; 2]], clip: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut output: Vec<[f64; 2]> = subject.to_vec();
    for i in 0..clip.len() {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % clip.len()];
        let input = std::mem::take(&mut output);
        for j in 0..input.len() {
            let p = input[j];
            let q = input[(j + 1) % input.len()];
            let p_in = cross(a, b, p) >= 0.0;
            let q_in = cross(a, b, q) >= 0.0;
            if p_in {
                output.push(p);
            }
            if p_in != q_in {
                let (dp, dq) = (cross(a, b, p), cross(a, b, q));
                let t = dp / (dp - dq);
                output.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
    }
    output
}

/// IoU of two rotated rectangles in the ground plane.
pub fn rotated_iou(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> f64 {
    let inter = polygon_area(&clip_convex(a, b));
    let union = polygon_area(a) + polygon_area(b) - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}
