//! TOML scenario files.
//!
//! Every table and key is optional; omitted values take the library defaults.
//! Unknown keys are rejected. `schema_version` must equal
//! [`SCHEMA_VERSION`] when present.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//! frames = 200
//! train_frames = 64
//!
//! [grid]
//! half_extent = 38.4
//! resolution = 0.6
//!
//! [scene]
//! agents = 5
//! boxes = 30
//! [scene.camera]
//! layout = "five_view"   # or "nadir"
//! fx = 300.0
//!
//! [detector]
//! miss_rate = 0.15
//! [[detector.override]]
//! agent = 2
//! miss_rate = 0.4
//!
//! [policy]
//! kind = "uncertainty"   # or "objectness"
//! demand_threshold = 0.0
//!
//! [train]
//! epochs = 150
//! demand_thresholds = [0.0, 0.5, 1.0]
//! ```

use std::f64::consts::PI;
use std::path::Path;

use serde::Deserialize;

use crate::comms::{CommPolicy, PolicyKind};
use crate::error::{Error, Result};
use crate::geometry::GridSpec;
use crate::head::{DecodeConfig, Optimizer, TrainConfig};
use crate::scene::{
    mix_seed, CameraMount, ConfidenceCalibration, DetectorProfile, EncoderConfig, SceneConfig,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentOverride {
    pub agent: usize,
    pub miss_rate: Option<f64>,
    pub false_positive_rate_per_cell: Option<f64>,
    pub center_noise_sigma: Option<f64>,
}

/// Fully resolved simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub frames: usize,
    pub train_frames: usize,
    pub grid: GridSpec,
    pub scene: SceneConfig,
    pub detector: DetectorProfile,
    pub overrides: Vec<AgentOverride>,
    pub encoder: EncoderConfig,
    pub policy: CommPolicy,
    pub train: TrainConfig,
    /// Demand thresholds cycled over training frames; empty means the policy's.
    pub train_demand_thresholds: Vec<f64>,
    pub decode: DecodeConfig,
    pub dedupe_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 7,
            frames: 200,
            train_frames: 64,
            grid: GridSpec::centered(38.4, 0.6).expect("valid default grid"),
            scene: SceneConfig::default(),
            detector: DetectorProfile::default(),
            overrides: Vec::new(),
            encoder: EncoderConfig::default(),
            policy: CommPolicy::default(),
            train: TrainConfig::default(),
            train_demand_thresholds: vec![0.0, 0.2, 0.5, 1.0],
            decode: DecodeConfig::default(),
            dedupe_radius: crate::fusion::DEFAULT_DEDUPE_RADIUS,
        }
    }
}

impl SimConfig {
    /// Detector profile of one agent, with its own noise seed.
    pub fn profile_for(&self, agent: usize) -> DetectorProfile {
        let mut p = self.detector.clone();
        p.seed = mix_seed(self.detector.seed, agent as u64 + 101);
        for o in self.overrides.iter().filter(|o| o.agent == agent) {
            if let Some(v) = o.miss_rate {
                p.miss_rate = v;
            }
            if let Some(v) = o.false_positive_rate_per_cell {
                p.false_positive_rate_per_cell = v;
            }
            if let Some(v) = o.center_noise_sigma {
                p.center_noise_sigma = v;
            }
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate(&self.grid)?;
        self.detector.validate()?;
        for o in &self.overrides {
            if o.agent >= self.scene.agent_count {
                return Err(Error::InvalidConfig(format!(
                    "override for agent {} but only {} agents",
                    o.agent, self.scene.agent_count
                )));
            }
            self.profile_for(o.agent).validate()?;
        }
        self.policy.validate()?;
        self.train.validate()?;
        if self.encoder.channels == 0 {
            return Err(Error::InvalidConfig("encoder needs at least one channel".into()));
        }
        if self.train_demand_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidConfig("training demand thresholds must lie in [0, 1]".into()));
        }
        if !(self.dedupe_radius >= 0.0) {
            return Err(Error::InvalidConfig("dedupe_radius must be >= 0".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| Error::Scenario(e.message().to_string()))?;
        file.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        SimConfig::from_toml_str(&text)
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScenarioFile {
    schema_version: Option<u32>,
    seed: Option<u64>,
    frames: Option<usize>,
    train_frames: Option<usize>,
    grid: GridSection,
    scene: SceneSection,
    detector: DetectorSection,
    encoder: EncoderSection,
    policy: PolicySection,
    train: TrainSection,
    decode: DecodeSection,
    fusion: FusionSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GridSection {
    half_extent: Option<f64>,
    resolution: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SceneSection {
    agents: Option<usize>,
    agent_spread: Option<f64>,
    altitude_min: Option<f64>,
    altitude_max: Option<f64>,
    agent_positions: Option<Vec<[f64; 2]>>,
    boxes: Option<usize>,
    box_spread: Option<f64>,
    size_mean: Option<[f64; 3]>,
    size_jitter: Option<f64>,
    iou_cap: Option<f64>,
    object_height: Option<f64>,
    placement_attempts: Option<usize>,
    visibility_range: Option<f64>,
    occluded_sectors: Option<usize>,
    sector_width_deg: Option<f64>,
    camera: CameraSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CameraSection {
    layout: Option<String>,
    fx: Option<f64>,
    fy: Option<f64>,
    image_w: Option<u32>,
    image_h: Option<u32>,
    oblique_pitch_deg: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DetectorSection {
    miss_rate: Option<f64>,
    false_positive_rate_per_cell: Option<f64>,
    center_noise_sigma: Option<f64>,
    size_noise_sigma: Option<f64>,
    yaw_noise_sigma: Option<f64>,
    true_score_range: Option<[f64; 2]>,
    false_score_range: Option<[f64; 2]>,
    seed: Option<u64>,
    #[serde(rename = "override")]
    overrides: Vec<OverrideSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideSection {
    agent: usize,
    miss_rate: Option<f64>,
    false_positive_rate_per_cell: Option<f64>,
    center_noise_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EncoderSection {
    channels: Option<usize>,
    splat_scale: Option<f64>,
    feature_noise_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct PolicySection {
    kind: Option<String>,
    detection_threshold: Option<f64>,
    demand_threshold: Option<f64>,
    objectness_threshold: Option<f64>,
    budget_bytes: Option<usize>,
    background_priority: Option<bool>,
    background_max_uncertainty: Option<f64>,
    background_min_ego_uncertainty: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSection {
    learning_rate: Option<f64>,
    epochs: Option<usize>,
    focal_alpha: Option<f64>,
    focal_beta: Option<f64>,
    lambda_cls: Option<f64>,
    lambda_reg: Option<f64>,
    seed: Option<u64>,
    optimizer: Option<String>,
    demand_thresholds: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct DecodeSection {
    peak_threshold: Option<f64>,
    suppress_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FusionSection {
    dedupe_radius: Option<f64>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

pub fn parse_policy_kind(s: &str) -> Result<PolicyKind> {
    match s {
        "uncertainty" => Ok(PolicyKind::Uncertainty),
        "objectness" => Ok(PolicyKind::Objectness),
        other => Err(Error::Scenario(format!("unknown policy kind {other:?}"))),
    }
}

impl ScenarioFile {
    fn resolve(self) -> Result<SimConfig> {
        if let Some(v) = self.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::Scenario(format!(
                    "schema_version {v} is not supported (expected {SCHEMA_VERSION})"
                )));
            }
        }
        let mut cfg = SimConfig::default();
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.frames, self.frames);
        set(&mut cfg.train_frames, self.train_frames);

        let half = self.grid.half_extent.unwrap_or(cfg.grid.extent_max()[0]);
        let res = self.grid.resolution.unwrap_or(cfg.grid.resolution());
        cfg.grid = GridSpec::centered(half, res)?;

        let s = self.scene;
        let sc = &mut cfg.scene;
        set(&mut sc.agent_count, s.agents);
        set(&mut sc.agent_spread, s.agent_spread);
        set(&mut sc.altitude_range.0, s.altitude_min);
        set(&mut sc.altitude_range.1, s.altitude_max);
        if s.agent_positions.is_some() {
            sc.agent_positions = s.agent_positions;
        }
        set(&mut sc.box_count, s.boxes);
        set(&mut sc.box_spread, s.box_spread);
        set(&mut sc.size_mean, s.size_mean);
        set(&mut sc.size_jitter, s.size_jitter);
        set(&mut sc.iou_cap, s.iou_cap);
        set(&mut sc.object_height, s.object_height);
        set(&mut sc.placement_attempts, s.placement_attempts);
        set(&mut sc.visibility_range, s.visibility_range);
        set(&mut sc.occluded_sectors, s.occluded_sectors);
        if let Some(deg) = s.sector_width_deg {
            sc.sector_width = deg.to_radians();
        }
        let cam = s.camera;
        let fx = cam.fx.unwrap_or(300.0);
        let fy = cam.fy.unwrap_or(fx);
        let (w, h) = (cam.image_w.unwrap_or(704), cam.image_h.unwrap_or(256));
        sc.cameras = match cam.layout.as_deref().unwrap_or("five_view") {
            "five_view" => CameraMount::five_view(
                fx,
                fy,
                w,
                h,
                cam.oblique_pitch_deg.map_or(PI / 4.0, f64::to_radians),
            ),
            "nadir" => vec![CameraMount::nadir(fx, fy, w, h)],
            other => return Err(Error::Scenario(format!("unknown camera layout {other:?}"))),
        };

        let d = self.detector;
        let det = &mut cfg.detector;
        set(&mut det.miss_rate, d.miss_rate);
        set(&mut det.false_positive_rate_per_cell, d.false_positive_rate_per_cell);
        set(&mut det.center_noise_sigma, d.center_noise_sigma);
        set(&mut det.size_noise_sigma, d.size_noise_sigma);
        set(&mut det.yaw_noise_sigma, d.yaw_noise_sigma);
        set(&mut det.seed, d.seed);
        let mut cal = ConfidenceCalibration::default();
        if let Some([lo, hi]) = d.true_score_range {
            cal.true_range = (lo, hi);
        }
        if let Some([lo, hi]) = d.false_score_range {
            cal.false_range = (lo, hi);
        }
        det.calibration = cal;
        cfg.overrides = d
            .overrides
            .into_iter()
            .map(|o| AgentOverride {
                agent: o.agent,
                miss_rate: o.miss_rate,
                false_positive_rate_per_cell: o.false_positive_rate_per_cell,
                center_noise_sigma: o.center_noise_sigma,
            })
            .collect();

        set(&mut cfg.encoder.channels, self.encoder.channels);
        set(&mut cfg.encoder.splat_scale, self.encoder.splat_scale);
        set(&mut cfg.encoder.feature_noise_sigma, self.encoder.feature_noise_sigma);

        let p = self.policy;
        if let Some(kind) = p.kind {
            cfg.policy.kind = parse_policy_kind(&kind)?;
        }
        set(&mut cfg.policy.detection_threshold, p.detection_threshold);
        set(&mut cfg.policy.demand_threshold, p.demand_threshold);
        set(&mut cfg.policy.objectness_threshold, p.objectness_threshold);
        if p.budget_bytes.is_some() {
            cfg.policy.budget_bytes = p.budget_bytes;
        }
        set(&mut cfg.policy.background_priority, p.background_priority);
        set(&mut cfg.policy.background_max_uncertainty, p.background_max_uncertainty);
        set(&mut cfg.policy.background_min_ego_uncertainty, p.background_min_ego_uncertainty);

        let t = self.train;
        set(&mut cfg.train.learning_rate, t.learning_rate);
        set(&mut cfg.train.epochs, t.epochs);
        set(&mut cfg.train.focal_alpha, t.focal_alpha);
        set(&mut cfg.train.focal_beta, t.focal_beta);
        set(&mut cfg.train.lambda_cls, t.lambda_cls);
        set(&mut cfg.train.lambda_reg, t.lambda_reg);
        set(&mut cfg.train.seed, t.seed);
        if let Some(opt) = t.optimizer {
            cfg.train.optimizer = match opt.as_str() {
                "adam" => Optimizer::Adam,
                "sgd" => Optimizer::Sgd,
                other => return Err(Error::Scenario(format!("unknown optimizer {other:?}"))),
            };
        }
        set(&mut cfg.train_demand_thresholds, t.demand_thresholds);

        set(&mut cfg.decode.peak_threshold, self.decode.peak_threshold);
        if let Some(r) = self.decode.suppress_radius {
            cfg.decode.suppress_radius = (r > 0.0).then_some(r);
        }
        cfg.decode.plane_height = cfg.scene.object_height;
        set(&mut cfg.dedupe_radius, self.fusion.dedupe_radius);

        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(SimConfig::from_toml_str("").unwrap(), SimConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let cfg = SimConfig::from_toml_str(
            "schema_version = 1\nframes = 3\n[grid]\nhalf_extent = 40.0\nresolution = 0.8\n\
             [policy]\nkind = \"objectness\"\nbudget_bytes = 640\n\
             [[detector.override]]\nagent = 1\nmiss_rate = 0.5\n",
        )
        .unwrap();
        assert_eq!(cfg.frames, 3);
        assert_eq!(cfg.grid.width(), 100);
        assert_eq!(cfg.policy.kind, PolicyKind::Objectness);
        assert_eq!(cfg.policy.budget_bytes, Some(640));
        assert_eq!(cfg.profile_for(1).miss_rate, 0.5);
        assert_eq!(cfg.profile_for(0).miss_rate, 0.15);
        assert_ne!(cfg.profile_for(0).seed, cfg.profile_for(1).seed);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "schema_version = 2",
            "unknown_key = 1",
            "[policy]\nkind = \"psychic\"",
            "[detector]\nmiss_rate = 2.0",
            "[[detector.override]]\nagent = 9",
            "frames = \"many\"",
        ] {
            let err = SimConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err.kind(), "scenario" | "invalid_config"), "{text}: {err}");
        }
    }
}
