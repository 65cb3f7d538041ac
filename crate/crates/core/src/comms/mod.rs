//! Deciding what each agent sends, and what it costs.
//!
//! The uncertainty-driven policy gates a sender's detections by the demand
//! map `R_ij = U_i * (1 - U_j)` with `U = 1 - |S - phi|`: positions where the
//! receiver is unsure and the sender is sure. The objectness baseline ranks by
//! the sender's score map alone. Both produce a [`DetectionMessage`], whose
//! byte cost is `12 K + 32 K3` for `K` projected 2D points and `K3` 3D boxes.

pub mod wire;

use nalgebra::Vector3;

use crate::boxes::Box3D;
use crate::error::Result;
use crate::geometry::{pixel_to_ground, BevCell, GridSpec};
use crate::grid::ScalarMap;
use crate::scene::AgentObservation;

pub use wire::{decode, encode, BACKGROUND_BYTES, BOX_BYTES, HEADER_BYTES, POINT_BYTES};

/// Detection threshold used when none is configured.
pub const DEFAULT_DETECTION_THRESHOLD: f64 = 0.15;

/// `U = 1 - |S - phi|`, elementwise.
pub fn uncertainty_map(score: &ScalarMap, phi: f64) -> ScalarMap {
    let mut out = score.clone();
    for v in out.values_mut() {
        *v = 1.0 - (*v - phi).abs();
    }
    out
}

/// `R_ij = U_i * (1 - U_j)`, elementwise.
pub fn demand_map(ego_uncertainty: &ScalarMap, sender_uncertainty: &ScalarMap) -> Result<ScalarMap> {
    ego_uncertainty.ensure_same_dims(sender_uncertainty)?;
    let mut out = ego_uncertainty.clone();
    for (r, uj) in out.values_mut().iter_mut().zip(sender_uncertainty.values()) {
        *r *= 1.0 - uj;
    }
    Ok(out)
}

/// Re-expresses a map owned by an agent at `from_origin` on the grid of an
/// agent at `to_origin` (same spec, translation only, nearest cell). Cells
/// with no source fall back to `fill`.
pub fn resample_translated(
    map: &ScalarMap,
    spec: &GridSpec,
    from_origin: &Vector3<f64>,
    to_origin: &Vector3<f64>,
    fill: f64,
) -> ScalarMap {
    let shift = to_origin - from_origin;
    let mut out = ScalarMap::filled(spec.height(), spec.width(), fill);
    for idx in 0..spec.cell_count() {
        let [x, y] = spec.cell_center(spec.cell_at(idx));
        if let Some(src) = spec.locate_xy(x + shift.x, y + shift.y) {
            out.values_mut()[idx] = map.get(src);
        }
    }
    out
}

/// Bytes of a score map shipped as float32 in the metadata pre-round.
pub fn score_map_bytes(spec: &GridSpec) -> usize {
    spec.cell_count() * 4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    Uncertainty,
    Objectness,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommPolicy {
    pub kind: PolicyKind,
    /// `phi_i`, the detection threshold in the uncertainty map.
    pub detection_threshold: f64,
    /// `phi_dem`: an item is eligible when the demand at its cell exceeds this.
    pub demand_threshold: f64,
    /// Objectness baseline: an item is eligible when `S_j` at its cell exceeds this.
    pub objectness_threshold: f64,
    pub budget_bytes: Option<usize>,
    pub background_priority: bool,
    /// Sender cells count as certain background when `U_j` is below this and `S_j < phi_i`.
    pub background_max_uncertainty: f64,
    /// Receiver cells need at least this uncertainty to ask for background assertions.
    pub background_min_ego_uncertainty: f64,
    pub send_2d: bool,
    pub send_3d: bool,
}

impl Default for CommPolicy {
    fn default() -> Self {
        CommPolicy {
            kind: PolicyKind::Uncertainty,
            detection_threshold: DEFAULT_DETECTION_THRESHOLD,
            demand_threshold: 0.0,
            objectness_threshold: 0.0,
            budget_bytes: None,
            background_priority: false,
            background_max_uncertainty: 0.9,
            background_min_ego_uncertainty: 0.9,
            send_2d: true,
            send_3d: true,
        }
    }
}

impl CommPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("detection_threshold", self.detection_threshold),
            ("demand_threshold", self.demand_threshold),
            ("objectness_threshold", self.objectness_threshold),
            ("background_max_uncertainty", self.background_max_uncertainty),
            ("background_min_ego_uncertainty", self.background_min_ego_uncertainty),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(crate::error::Error::InvalidConfig(format!(
                    "{name} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPoint {
    pub x: f32,
    pub y: f32,
    pub score: f32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireBox {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub w: f32,
    pub h: f32,
    pub l: f32,
    pub yaw: f32,
    pub score: f32,
}

impl WireBox {
    pub fn from_box(b: &Box3D) -> Self {
        WireBox {
            x: b.x as f32,
            y: b.y as f32,
            z: b.z as f32,
            w: b.w as f32,
            h: b.h as f32,
            l: b.l as f32,
            yaw: b.yaw as f32,
            score: b.score as f32,
        }
    }

    pub fn to_box(&self) -> Box3D {
        Box3D {
            x: self.x as f64,
            y: self.y as f64,
            z: self.z as f64,
            w: self.w as f64,
            h: self.h as f64,
            l: self.l as f64,
            yaw: self.yaw as f64,
            score: self.score as f64,
        }
    }

    pub fn as_array(&self) -> [f32; 8] {
        [
            self.x, self.y, self.z, self.w, self.h, self.l, self.yaw, self.score,
        ]
    }

    pub fn from_array(a: [f32; 8]) -> Self {
        WireBox {
            x: a[0],
            y: a[1],
            z: a[2],
            w: a[3],
            h: a[4],
            l: a[5],
            yaw: a[6],
            score: a[7],
        }
    }
}

/// A sender's claim that a world position holds no object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundAssertion {
    pub x: f32,
    pub y: f32,
    pub certainty: f32,
}

/// The only payload exchanged between agents.
///
/// `points_2d` and `background` are in world coordinates; `boxes_3d` are in
/// the sender's ego frame, whose world origin is `sender_origin`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMessage {
    pub sender_id: u32,
    pub receiver_id: u32,
    pub timestamp: u64,
    pub sender_origin: [f64; 3],
    pub points_2d: Vec<ProjectedPoint>,
    pub boxes_3d: Vec<WireBox>,
    pub background: Vec<BackgroundAssertion>,
}

impl DetectionMessage {
    pub fn empty(sender_id: u32, receiver_id: u32, timestamp: u64, sender_origin: [f64; 3]) -> Self {
        DetectionMessage {
            sender_id,
            receiver_id,
            timestamp,
            sender_origin,
            points_2d: Vec::new(),
            boxes_3d: Vec::new(),
            background: Vec::new(),
        }
    }

    /// `12 K + 32 K3`: bytes of the detection section.
    pub fn detection_bytes(&self) -> usize {
        self.points_2d.len() * POINT_BYTES + self.boxes_3d.len() * BOX_BYTES
    }

    /// Everything after the fixed header: detections plus background records.
    pub fn payload_bytes(&self) -> usize {
        self.detection_bytes() + self.background.len() * BACKGROUND_BYTES
    }

    pub fn is_empty(&self) -> bool {
        self.points_2d.is_empty() && self.boxes_3d.is_empty() && self.background.is_empty()
    }

    pub fn item_count(&self) -> usize {
        self.points_2d.len() + self.boxes_3d.len() + self.background.len()
    }
}

/// `log2` of the payload size, or `None` for an empty channel.
pub fn comm_volume_log2(msg: &DetectionMessage) -> Option<f64> {
    log2_bytes(msg.payload_bytes())
}

pub fn log2_bytes(bytes: usize) -> Option<f64> {
    if bytes == 0 {
        None
    } else {
        Some((bytes as f64).log2())
    }
}

/// One transmittable detection together with the sender-frame cell that gates it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShareItem {
    Point {
        cell: BevCell,
        point: ProjectedPoint,
    },
    Box {
        cell: BevCell,
        det: Box3D,
    },
}

impl ShareItem {
    pub fn cell(&self) -> BevCell {
        match self {
            ShareItem::Point { cell, .. } | ShareItem::Box { cell, .. } => *cell,
        }
    }

    pub fn bytes(&self) -> usize {
        match self {
            ShareItem::Point { .. } => POINT_BYTES,
            ShareItem::Box { .. } => BOX_BYTES,
        }
    }
}

/// Every detection the sender could transmit, in a fixed order: 3D boxes in
/// detection order, then 2D points camera by camera. 2D centres are lifted
/// onto the plane `z = plane_height` through the capturing camera. Items
/// whose centre falls outside the sender's grid are dropped.
pub fn share_candidates(
    obs: &AgentObservation,
    spec: &GridSpec,
    plane_height: f64,
    send_2d: bool,
    send_3d: bool,
) -> Vec<ShareItem> {
    let mut items = Vec::new();
    if send_3d {
        for det in &obs.dets_3d {
            if let Some(cell) = spec.locate_xy(det.x, det.y) {
                items.push(ShareItem::Box { cell, det: *det });
            }
        }
    }
    if send_2d {
        for (rig, dets) in obs.rigs.iter().zip(&obs.dets_2d) {
            for d in dets {
                let Some(world) = pixel_to_ground(rig, d.x, d.y, plane_height) else {
                    continue;
                };
                let (ex, ey) = (world.0.x - obs.origin.x, world.0.y - obs.origin.y);
                if let Some(cell) = spec.locate_xy(ex, ey) {
                    items.push(ShareItem::Point {
                        cell,
                        point: ProjectedPoint {
                            x: world.0.x as f32,
                            y: world.0.y as f32,
                            score: d.score as f32,
                        },
                    });
                }
            }
        }
    }
    items
}

/// Outcome of a selection: the message plus the sender-frame cells of the
/// detection items it carries (in message order, boxes first).
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub message: DetectionMessage,
    pub item_cells: Vec<BevCell>,
}

/// Ranks by `key` descending, ties by row-major cell then candidate order,
/// keeps items with `key > threshold`, and admits them until the budget
/// would be exceeded.
fn rank_and_admit(
    items: &[ShareItem],
    key: &ScalarMap,
    threshold: f64,
    budget: Option<usize>,
    spec: &GridSpec,
) -> (Vec<usize>, usize) {
    let mut eligible: Vec<(usize, f64)> = items
        .iter()
        .enumerate()
        .map(|(i, it)| (i, key.get(it.cell())))
        .filter(|&(_, k)| k > threshold)
        .collect();
    eligible.sort_by(|a, b| {
        b.1.total_cmp(&a.1)
            .then_with(|| spec.index(items[a.0].cell()).cmp(&spec.index(items[b.0].cell())))
            .then_with(|| a.0.cmp(&b.0))
    });
    let mut used = 0usize;
    let mut admitted = Vec::new();
    for (i, _) in eligible {
        let cost = items[i].bytes();
        if let Some(b) = budget {
            if used + cost > b {
                break;
            }
        }
        used += cost;
        admitted.push(i);
    }
    (admitted, used)
}

fn assemble(
    obs: &AgentObservation,
    receiver_id: usize,
    timestamp: u64,
    items: &[ShareItem],
    admitted: &[usize],
) -> Selection {
    let mut message = DetectionMessage::empty(
        obs.agent_id as u32,
        receiver_id as u32,
        timestamp,
        [obs.origin.x, obs.origin.y, obs.origin.z],
    );
    let mut box_cells = Vec::new();
    let mut point_cells = Vec::new();
    for &i in admitted {
        match items[i] {
            ShareItem::Box { cell, det } => {
                message.boxes_3d.push(WireBox::from_box(&det));
                box_cells.push(cell);
            }
            ShareItem::Point { cell, point } => {
                message.points_2d.push(point);
                point_cells.push(cell);
            }
        }
    }
    box_cells.extend(point_cells);
    Selection {
        message,
        item_cells: box_cells,
    }
}

/// Uncertainty-driven selection on the sender side.
///
/// `demand` is `R_ij` and `ego_uncertainty` is `U_i`, both already expressed
/// on the sender's grid. Detection items are eligible when `R_ij > phi_dem`.
/// With `background_priority`, cells the sender is sure are empty
/// (`U_j < background_max_uncertainty`, `S_j < phi_i`, visible to the sender)
/// and the receiver is unsure about (`U_i >= background_min_ego_uncertainty`)
/// are appended as background assertions, ranked the same way, while budget
/// remains.
#[allow(clippy::too_many_arguments)]
pub fn select_shared(
    obs: &AgentObservation,
    items: &[ShareItem],
    demand: &ScalarMap,
    ego_uncertainty: &ScalarMap,
    policy: &CommPolicy,
    spec: &GridSpec,
    receiver_id: usize,
    timestamp: u64,
) -> Selection {
    let (admitted, used) = rank_and_admit(
        items,
        demand,
        policy.demand_threshold,
        policy.budget_bytes,
        spec,
    );
    let mut sel = assemble(obs, receiver_id, timestamp, items, &admitted);

    let exhausted = admitted.len()
        < items
            .iter()
            .filter(|it| demand.get(it.cell()) > policy.demand_threshold)
            .count();
    if policy.background_priority && !exhausted {
        let sender_uncertainty = uncertainty_map(&obs.score_map, policy.detection_threshold);
        let mut cells: Vec<(usize, f64)> = (0..spec.cell_count())
            .filter(|&idx| {
                let s_j = obs.score_map.values()[idx];
                sender_uncertainty.values()[idx] < policy.background_max_uncertainty
                    && s_j < policy.detection_threshold
                    && obs.visibility.values()[idx] > 0.0
                    && ego_uncertainty.values()[idx] >= policy.background_min_ego_uncertainty
                    && demand.values()[idx] > policy.demand_threshold
            })
            .map(|idx| (idx, demand.values()[idx]))
            .collect();
        cells.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut used = used;
        for (idx, _) in cells {
            if let Some(b) = policy.budget_bytes {
                if used + BACKGROUND_BYTES > b {
                    break;
                }
            }
            used += BACKGROUND_BYTES;
            let [cx, cy] = spec.cell_center(spec.cell_at(idx));
            let s_j = obs.score_map.values()[idx];
            sel.message.background.push(BackgroundAssertion {
                x: (cx + obs.origin.x) as f32,
                y: (cy + obs.origin.y) as f32,
                certainty: ((policy.detection_threshold - s_j) / policy.detection_threshold) as f32,
            });
        }
    }
    sel
}

/// Objectness-driven baseline: ranks and thresholds by the sender's own
/// score map, ignoring the receiver.
pub fn objectness_select(
    obs: &AgentObservation,
    items: &[ShareItem],
    threshold: f64,
    budget_bytes: Option<usize>,
    spec: &GridSpec,
    receiver_id: usize,
    timestamp: u64,
) -> Selection {
    let (admitted, _) = rank_and_admit(items, &obs.score_map, threshold, budget_bytes, spec);
    assemble(obs, receiver_id, timestamp, items, &admitted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uncertainty_examples() {
        let phi = 0.15;
        let at_phi = uncertainty_map(&ScalarMap::filled(3, 3, phi), phi);
        assert!(at_phi.values().iter().all(|&u| u == 1.0));
        let one = uncertainty_map(&ScalarMap::filled(1, 1, 1.0), phi);
        assert_abs_diff_eq!(one.values()[0], 0.15, epsilon = 1e-15);
        let zero = uncertainty_map(&ScalarMap::filled(1, 1, 0.0), phi);
        assert_abs_diff_eq!(zero.values()[0], 0.85, epsilon = 1e-15);
    }

    #[test]
    fn demand_examples() {
        let ones = ScalarMap::filled(4, 4, 1.0);
        let zeros = ScalarMap::zeros(4, 4);
        assert!(demand_map(&ones, &ones).unwrap().values().iter().all(|&r| r == 0.0));
        assert!(demand_map(&ones, &zeros).unwrap().values().iter().all(|&r| r == 1.0));
        assert!(demand_map(&ones, &ScalarMap::zeros(4, 5)).is_err());
    }

    #[test]
    fn volume_examples() {
        let mut msg = DetectionMessage::empty(0, 1, 0, [0.0; 3]);
        assert_eq!(msg.payload_bytes(), 0);
        assert_eq!(comm_volume_log2(&msg), None);
        msg.boxes_3d.push(WireBox::from_array([0.0; 8]));
        assert_eq!(msg.payload_bytes(), 32);
        assert_eq!(comm_volume_log2(&msg), Some(5.0));
        let p = ProjectedPoint {
            x: 0.0,
            y: 0.0,
            score: 0.5,
        };
        let mut big = DetectionMessage::empty(0, 1, 0, [0.0; 3]);
        big.points_2d = vec![p; 10];
        big.boxes_3d = vec![WireBox::from_array([0.0; 8]); 20];
        assert_eq!(big.payload_bytes(), 760);
        assert_abs_diff_eq!(comm_volume_log2(&big).unwrap(), 9.569855608330949, epsilon = 1e-12);
    }

    #[test]
    fn resample_shifts_by_whole_cells() {
        let spec = GridSpec::new([-2.0, -2.0], [2.0, 2.0], 1.0).unwrap();
        let mut m = ScalarMap::for_spec(&spec);
        m.set(BevCell::new(2, 2), 7.0);
        // source agent one meter east of target: its cell (2,2) sits at target (2,3)
        let out = resample_translated(
            &m,
            &spec,
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::zeros(),
            -1.0,
        );
        assert_eq!(out.get(BevCell::new(2, 3)), 7.0);
        assert_eq!(out.get(BevCell::new(2, 0)), -1.0);
    }
}
