//! Synthetic single-frame scenes and a seeded stand-in for the per-agent
//! 2D/3D detectors and BEV encoder.

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::boxes::{rotated_iou, wrap_angle, Box2D, Box3D, GroundTruthBox};
use crate::error::{Error, Result};
use crate::geometry::{ego_to_bev, project, world_to_ego, CameraRig, GridSpec, WorldPoint};
use crate::grid::{BevGrid, ScalarMap};

/// Seed of the fixed encoder kernels. Shared by every agent, like a common backbone.
const ENCODER_KERNEL_SEED: u64 = 0x0b5e_7a11_c0de_f00d;

/// SplitMix64 finalizer, used to derive independent stream seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Camera placement relative to the UAV body.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraMount {
    pub yaw_offset: f64,
    pub pitch: f64,
    pub fx: f64,
    pub fy: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraMount {
    pub fn nadir(fx: f64, fy: f64, image_w: u32, image_h: u32) -> Self {
        CameraMount {
            yaw_offset: 0.0,
            pitch: PI / 2.0,
            fx,
            fy,
            image_w,
            image_h,
        }
    }

    /// Bottom camera plus four oblique cameras facing front, left, back and right.
    pub fn five_view(fx: f64, fy: f64, image_w: u32, image_h: u32, oblique_pitch: f64) -> Vec<Self> {
        let mut mounts = vec![CameraMount::nadir(fx, fy, image_w, image_h)];
        for k in 0..4 {
            mounts.push(CameraMount {
                yaw_offset: k as f64 * PI / 2.0,
                pitch: oblique_pitch,
                fx,
                fy,
                image_w,
                image_h,
            });
        }
        mounts
    }
}

/// Angular interval `[start, start + width)` measured from world +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub start: f64,
    pub width: f64,
}

impl Sector {
    pub fn contains(&self, angle: f64) -> bool {
        (angle - self.start).rem_euclid(2.0 * PI) < self.width
    }
}

/// Region an agent can observe, in its ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityMask {
    pub max_range: f64,
    pub occluded: Vec<Sector>,
}

impl VisibilityMask {
    pub fn unlimited() -> Self {
        VisibilityMask {
            max_range: f64::INFINITY,
            occluded: Vec::new(),
        }
    }

    pub fn sees(&self, ex: f64, ey: f64) -> bool {
        let r = ex.hypot(ey);
        if r > self.max_range {
            return false;
        }
        if r == 0.0 {
            return true;
        }
        let angle = ey.atan2(ex);
        !self.occluded.iter().any(|s| s.contains(angle))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub agent_count: usize,
    /// Agents are sampled uniformly in `[-agent_spread, agent_spread]^2`.
    pub agent_spread: f64,
    pub altitude_range: (f64, f64),
    /// Fixed agent ground positions; overrides sampling when set.
    pub agent_positions: Option<Vec<[f64; 2]>>,
    pub box_count: usize,
    /// Box centres are sampled uniformly in `[-box_spread, box_spread]^2`.
    pub box_spread: f64,
    /// Mean `(w, h, l)` in meters.
    pub size_mean: [f64; 3],
    /// Uniform jitter half-width applied to each size component.
    pub size_jitter: f64,
    pub iou_cap: f64,
    pub object_height: f64,
    pub placement_attempts: usize,
    pub cameras: Vec<CameraMount>,
    pub visibility_range: f64,
    pub occluded_sectors: usize,
    pub sector_width: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            agent_count: 5,
            agent_spread: 15.0,
            altitude_range: (40.0, 60.0),
            agent_positions: None,
            box_count: 30,
            box_spread: 32.0,
            size_mean: [2.0, 1.5, 4.5],
            size_jitter: 0.3,
            iou_cap: 0.0,
            object_height: crate::geometry::DEFAULT_OBJECT_HEIGHT,
            placement_attempts: 200,
            cameras: CameraMount::five_view(300.0, 300.0, 704, 256, PI / 4.0),
            visibility_range: 35.0,
            occluded_sectors: 2,
            sector_width: PI / 3.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self, spec: &GridSpec) -> Result<()> {
        if self.agent_count == 0 {
            return Err(Error::InvalidConfig("agent_count must be >= 1".into()));
        }
        if let Some(p) = &self.agent_positions {
            if p.len() != self.agent_count {
                return Err(Error::InvalidConfig(format!(
                    "{} agent positions for {} agents",
                    p.len(),
                    self.agent_count
                )));
            }
        }
        let half = spec
            .extent_max()
            .iter()
            .chain(spec.extent_min().iter())
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min);
        if self.box_spread > half || self.agent_spread > half {
            return Err(Error::InvalidConfig(format!(
                "spread (boxes {}, agents {}) exceeds grid half-extent {half}",
                self.box_spread, self.agent_spread
            )));
        }
        let (lo, hi) = self.altitude_range;
        if !(lo > self.object_height && hi >= lo) {
            return Err(Error::InvalidConfig(format!(
                "altitude range ({lo}, {hi}) must lie above the object plane"
            )));
        }
        if self.size_mean.iter().any(|&s| s - self.size_jitter <= 0.0) {
            return Err(Error::InvalidConfig("box sizes must stay positive".into()));
        }
        if !(0.0..=1.0).contains(&self.iou_cap) {
            return Err(Error::InvalidConfig("iou_cap must be in [0, 1]".into()));
        }
        if self.cameras.is_empty() {
            return Err(Error::InvalidConfig("at least one camera is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    /// Ego-frame origin in world coordinates (the point on the ground below the UAV).
    pub origin: Vector3<f64>,
    pub altitude: f64,
    pub heading: f64,
    pub visibility: VisibilityMask,
    pub rigs: Vec<CameraRig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub seed: u64,
    pub object_height: f64,
    pub boxes: Vec<GroundTruthBox>,
    pub agents: Vec<AgentState>,
}

/// Samples ground-truth boxes and agent poses. Deterministic in `seed`.
pub fn generate_scene(config: &SceneConfig, spec: &GridSpec, seed: u64) -> Result<Scene> {
    config.validate(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5ce7e));

    let mut boxes: Vec<GroundTruthBox> = Vec::with_capacity(config.box_count);
    for id in 0..config.box_count {
        let mut placed = false;
        for _ in 0..config.placement_attempts.max(1) {
            let candidate = GroundTruthBox {
                x: rng.gen_range(-config.box_spread..=config.box_spread),
                y: rng.gen_range(-config.box_spread..=config.box_spread),
                z: config.object_height,
                w: config.size_mean[0] + rng.gen_range(-1.0..=1.0) * config.size_jitter,
                h: config.size_mean[1] + rng.gen_range(-1.0..=1.0) * config.size_jitter,
                l: config.size_mean[2] + rng.gen_range(-1.0..=1.0) * config.size_jitter,
                yaw: wrap_angle(rng.gen_range(-PI..PI)),
                object_id: id as u32,
            };
            let fp = candidate.footprint();
            let ok = boxes
                .iter()
                .all(|b| rotated_iou(&fp, &b.footprint()) <= config.iou_cap);
            if ok {
                boxes.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Placement {
                requested: config.box_count,
                placed: boxes.len(),
                iou_cap: config.iou_cap,
            });
        }
    }

    let mut agents = Vec::with_capacity(config.agent_count);
    for id in 0..config.agent_count {
        let [x, y] = match &config.agent_positions {
            Some(p) => p[id],
            None => [
                rng.gen_range(-config.agent_spread..=config.agent_spread),
                rng.gen_range(-config.agent_spread..=config.agent_spread),
            ],
        };
        let (lo, hi) = config.altitude_range;
        let altitude = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        let heading = rng.gen_range(-PI..PI);
        let occluded = (0..config.occluded_sectors)
            .map(|_| Sector {
                start: rng.gen_range(-PI..PI),
                width: config.sector_width,
            })
            .collect();
        let origin = Vector3::new(x, y, 0.0);
        let position = Vector3::new(x, y, altitude);
        let rigs = config
            .cameras
            .iter()
            .map(|m| {
                CameraRig::looking(
                    m.fx,
                    m.fy,
                    m.image_w,
                    m.image_h,
                    position,
                    heading + m.yaw_offset,
                    m.pitch,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        agents.push(AgentState {
            id,
            origin,
            altitude,
            heading,
            visibility: VisibilityMask {
                max_range: config.visibility_range,
                occluded,
            },
            rigs,
        });
    }

    Ok(Scene {
        seed,
        object_height: config.object_height,
        boxes,
        agents,
    })
}

/// Score ranges for true and false detections. True detections are scored
/// uniformly in `true_range`, false positives in `false_range`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceCalibration {
    pub true_range: (f64, f64),
    pub false_range: (f64, f64),
}

impl ConfidenceCalibration {
    pub fn fixed(true_score: f64, false_score: f64) -> Self {
        ConfidenceCalibration {
            true_range: (true_score, true_score),
            false_range: (false_score, false_score),
        }
    }

    fn sample(range: (f64, f64), rng: &mut impl Rng) -> f64 {
        let (lo, hi) = range;
        if hi > lo {
            rng.gen_range(lo..=hi)
        } else {
            lo
        }
    }
}

impl Default for ConfidenceCalibration {
    fn default() -> Self {
        ConfidenceCalibration {
            true_range: (0.45, 0.95),
            false_range: (0.1, 0.4),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorProfile {
    pub miss_rate: f64,
    pub false_positive_rate_per_cell: f64,
    pub center_noise_sigma: f64,
    pub size_noise_sigma: f64,
    pub yaw_noise_sigma: f64,
    pub calibration: ConfidenceCalibration,
    /// Overrides the visibility sampled with the scene.
    pub occlusion_mask: Option<VisibilityMask>,
    pub seed: u64,
}

impl DetectorProfile {
    /// No misses, no false positives, no noise, confidence 1.
    pub fn noiseless() -> Self {
        DetectorProfile {
            miss_rate: 0.0,
            false_positive_rate_per_cell: 0.0,
            center_noise_sigma: 0.0,
            size_noise_sigma: 0.0,
            yaw_noise_sigma: 0.0,
            calibration: ConfidenceCalibration::fixed(1.0, 0.0),
            occlusion_mask: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} = {v} is outside [0, 1]")))
            }
        };
        unit("miss_rate", self.miss_rate)?;
        unit("false_positive_rate_per_cell", self.false_positive_rate_per_cell)?;
        for (name, v) in [
            ("center_noise_sigma", self.center_noise_sigma),
            ("size_noise_sigma", self.size_noise_sigma),
            ("yaw_noise_sigma", self.yaw_noise_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} = {v} must be >= 0")));
            }
        }
        let c = self.calibration;
        for (lo, hi) in [c.true_range, c.false_range] {
            unit("calibration bound", lo)?;
            unit("calibration bound", hi)?;
            if lo > hi {
                return Err(Error::InvalidConfig("calibration range is inverted".into()));
            }
        }
        Ok(())
    }
}

impl Default for DetectorProfile {
    fn default() -> Self {
        DetectorProfile {
            miss_rate: 0.15,
            false_positive_rate_per_cell: 2e-4,
            center_noise_sigma: 0.25,
            size_noise_sigma: 0.1,
            yaw_noise_sigma: 0.05,
            calibration: ConfidenceCalibration::default(),
            occlusion_mask: None,
            seed: 0,
        }
    }
}

/// Fixed-rule stand-in for the BEV backbone: channel 0 carries the score map,
/// channels `1..C` are fixed 3x3 filters of it, all plus seeded Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub channels: usize,
    /// Score splat sigma as a fraction of `sqrt(w * l)`, in meters.
    pub splat_scale: f64,
    pub feature_noise_sigma: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            channels: 16,
            splat_scale: 0.25,
            feature_noise_sigma: 0.02,
        }
    }
}

impl EncoderConfig {
    /// Row-major 3x3 kernels, one per channel. Kernel 0 is the identity.
    pub fn kernels(&self) -> Vec<[f64; 9]> {
        let mut rng = ChaCha8Rng::seed_from_u64(ENCODER_KERNEL_SEED);
        let normal = Normal::new(0.0, 1.0 / 3.0).expect("valid sigma");
        (0..self.channels)
            .map(|k| {
                if k == 0 {
                    let mut id = [0.0; 9];
                    id[4] = 1.0;
                    id
                } else {
                    std::array::from_fn(|_| normal.sample(&mut rng))
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentObservation {
    pub agent_id: usize,
    /// `T_ego2w`.
    pub origin: Vector3<f64>,
    pub rigs: Vec<CameraRig>,
    /// Per-camera 2D detections, indexed like `rigs`.
    pub dets_2d: Vec<Vec<Box2D>>,
    /// 3D detections in the agent's ego frame.
    pub dets_3d: Vec<Box3D>,
    /// Ground-truth object behind each 3D detection; `None` for false positives.
    pub det_sources: Vec<Option<u32>>,
    pub score_map: ScalarMap,
    /// 1 where the agent can observe, 0 elsewhere.
    pub visibility: ScalarMap,
    pub features: BevGrid,
}

fn sees_with_cameras(rigs: &[CameraRig], p: WorldPoint) -> bool {
    rigs.iter().any(|rig| match project(rig, p) {
        Some((u, v)) => rig.contains_pixel(u, v),
        None => false,
    })
}

/// Image-space box of a 3D box as seen by `rig`, if its centre is in view.
fn image_box(rig: &CameraRig, b: &Box3D) -> Option<Box2D> {
    let (u, v) = project(rig, WorldPoint::new(b.x, b.y, b.z))?;
    if !rig.contains_pixel(u, v) {
        return None;
    }
    let (mut umin, mut umax, mut vmin, mut vmax) = (u, u, v, v);
    for c in b.corners() {
        if let Some((cu, cv)) = project(rig, WorldPoint::new(c[0], c[1], c[2])) {
            umin = umin.min(cu);
            umax = umax.max(cu);
            vmin = vmin.min(cv);
            vmax = vmax.max(cv);
        }
    }
    Some(Box2D {
        x: u,
        y: v,
        w: (umax - umin).max(1.0),
        h: (vmax - vmin).max(1.0),
        score: b.score,
    })
}

/// Max-combines a Gaussian splat with peak `peak` centred on `center` (cell units).
pub(crate) fn splat_gaussian(map: &mut ScalarMap, row: usize, col: usize, peak: f64, sigma_cells: f64) {
    let sigma = sigma_cells.max(0.5);
    let radius = (3.0 * sigma).ceil() as isize;
    let (h, w) = (map.height() as isize, map.width() as isize);
    let (r0, c0) = (row as isize, col as isize);
    let denom = 2.0 * sigma * sigma;
    let width = map.width();
    let values = map.values_mut();
    for dr in -radius..=radius {
        let r = r0 + dr;
        if r < 0 || r >= h {
            continue;
        }
        for dc in -radius..=radius {
            let c = c0 + dc;
            if c < 0 || c >= w {
                continue;
            }
            let v = peak * (-((dr * dr + dc * dc) as f64) / denom).exp();
            let slot = &mut values[r as usize * width + c as usize];
            if v > *slot {
                *slot = v;
            }
        }
    }
}

/// Applies the fixed encoder to a score map.
pub fn encode_features(
    score: &ScalarMap,
    encoder: &EncoderConfig,
    rng: &mut impl Rng,
) -> BevGrid {
    let (h, w) = score.dims();
    let c = encoder.channels;
    let kernels = encoder.kernels();
    let mut out = BevGrid::zeros(h, w, c);
    let s = score.values();
    let noise = Normal::new(0.0, encoder.feature_noise_sigma.max(0.0)).expect("valid sigma");
    for r in 0..h {
        for col in 0..w {
            let mut patch = [0.0; 9];
            for dr in 0..3 {
                for dc in 0..3 {
                    let rr = r as isize + dr as isize - 1;
                    let cc = col as isize + dc as isize - 1;
                    if rr >= 0 && cc >= 0 && (rr as usize) < h && (cc as usize) < w {
                        patch[dr * 3 + dc] = s[rr as usize * w + cc as usize];
                    }
                }
            }
            let cell = out.cell_mut(r * w + col);
            for (k, kernel) in kernels.iter().enumerate() {
                let mut acc: f64 = kernel.iter().zip(patch.iter()).map(|(a, b)| a * b).sum();
                if encoder.feature_noise_sigma > 0.0 {
                    acc += noise.sample(rng);
                }
                cell[k] = acc;
            }
        }
    }
    out
}

/// Emulates one agent's perception of `scene`.
pub fn observe(
    scene: &Scene,
    agent_id: usize,
    profile: &DetectorProfile,
    spec: &GridSpec,
    encoder: &EncoderConfig,
) -> Result<AgentObservation> {
    profile.validate()?;
    let agent = scene.agents.get(agent_id).ok_or_else(|| {
        Error::InvalidConfig(format!("agent {agent_id} not in scene"))
    })?;
    if spec.locate_xy(0.0, 0.0).is_none() {
        return Err(Error::InvalidGrid("grid does not contain the ego origin".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(
        scene.seed ^ profile.seed,
        agent_id as u64 + 1,
    ));
    let visibility = profile
        .occlusion_mask
        .clone()
        .unwrap_or_else(|| agent.visibility.clone());
    let origin = agent.origin;
    let std_normal = Normal::new(0.0, 1.0).expect("valid sigma");

    let mut world_dets: Vec<Box3D> = Vec::new();
    let mut det_sources = Vec::new();
    for gt in &scene.boxes {
        let (ex, ey) = (gt.x - origin.x, gt.y - origin.y);
        if !visibility.sees(ex, ey)
            || !sees_with_cameras(&agent.rigs, WorldPoint::new(gt.x, gt.y, gt.z))
        {
            continue;
        }
        if rng.gen::<f64>() < profile.miss_rate {
            continue;
        }
        let mut g = |sigma: f64| sigma * std_normal.sample(&mut rng);
        let dx = g(profile.center_noise_sigma);
        let dy = g(profile.center_noise_sigma);
        let dw = g(profile.size_noise_sigma);
        let dh = g(profile.size_noise_sigma);
        let dl = g(profile.size_noise_sigma);
        let dyaw = g(profile.yaw_noise_sigma);
        let score = ConfidenceCalibration::sample(profile.calibration.true_range, &mut rng);
        world_dets.push(Box3D {
            x: gt.x + dx,
            y: gt.y + dy,
            z: gt.z,
            w: (gt.w + dw).max(0.1),
            h: (gt.h + dh).max(0.1),
            l: (gt.l + dl).max(0.1),
            yaw: wrap_angle(gt.yaw + dyaw),
            score,
        });
        det_sources.push(Some(gt.object_id));
    }

    let mut vis_map = ScalarMap::for_spec(spec);
    for idx in 0..spec.cell_count() {
        let [cx, cy] = spec.cell_center(spec.cell_at(idx));
        if visibility.sees(cx, cy) {
            vis_map.values_mut()[idx] = 1.0;
        }
    }

    if profile.false_positive_rate_per_cell > 0.0 {
        let mean_size = if scene.boxes.is_empty() {
            [2.0, 1.5, 4.5]
        } else {
            let n = scene.boxes.len() as f64;
            scene.boxes.iter().fold([0.0; 3], |acc, b| {
                [acc[0] + b.w / n, acc[1] + b.h / n, acc[2] + b.l / n]
            })
        };
        for idx in 0..spec.cell_count() {
            if vis_map.values()[idx] == 0.0 {
                continue;
            }
            if rng.gen::<f64>() >= profile.false_positive_rate_per_cell {
                continue;
            }
            let [cx, cy] = spec.cell_center(spec.cell_at(idx));
            let half = spec.resolution() / 2.0;
            let x = origin.x + cx + rng.gen_range(-half..half);
            let y = origin.y + cy + rng.gen_range(-half..half);
            let yaw = rng.gen_range(-PI..PI);
            let score = ConfidenceCalibration::sample(profile.calibration.false_range, &mut rng);
            world_dets.push(Box3D {
                x,
                y,
                z: scene.object_height,
                w: mean_size[0],
                h: mean_size[1],
                l: mean_size[2],
                yaw: wrap_angle(yaw),
                score,
            });
            det_sources.push(None);
        }
    }

    let dets_2d = agent
        .rigs
        .iter()
        .map(|rig| world_dets.iter().filter_map(|b| image_box(rig, b)).collect())
        .collect();

    let dets_3d: Vec<Box3D> = world_dets
        .iter()
        .map(|b| b.translated(-origin.x, -origin.y, -origin.z))
        .collect();

    let mut score_map = ScalarMap::for_spec(spec);
    for b in &dets_3d {
        let ego = world_to_ego(WorldPoint::new(b.x, b.y, b.z), &Vector3::zeros());
        if let Some(cell) = ego_to_bev(ego, spec).cell() {
            let sigma = encoder.splat_scale * (b.w * b.l).sqrt() / spec.resolution();
            splat_gaussian(&mut score_map, cell.row, cell.col, b.score, sigma);
        }
    }

    let features = encode_features(&score_map, encoder, &mut rng);
    Ok(AgentObservation {
        agent_id,
        origin,
        rigs: agent.rigs.clone(),
        dets_2d,
        dets_3d,
        det_sources,
        score_map,
        visibility: vis_map,
        features,
    })
}
