//! Frame pipeline, strategy suites, training and sweeps.
//!
//! A frame is: generate scene, observe with every agent, exchange messages
//! with the ego (score-map pre-round, demand, selection, wire round trip),
//! fuse, decode, evaluate. The ego is `frame mod agent_count`. Every frame
//! draws from its own seed, frames run on a rayon pool and results are reduced
//! in frame order, so outputs do not depend on the worker count.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;

use crate::boxes::{Box3D, GroundTruthBox};
use crate::comms::{
    self, demand_map, objectness_select, resample_translated, score_map_bytes, select_shared,
    share_candidates, uncertainty_map, wire, CommPolicy, DetectionMessage, PolicyKind,
};
use crate::error::{Error, Result};
use crate::fusion::{build_bobev, build_vpe, dedupe_received, fuse, refine_features, strongest_per_cell};
use crate::geometry::{BevCell, CellLookup, GridSpec};
use crate::grid::BevGrid;
use crate::head::{self, HeadParams, HeadTargets, TrainOutcome, TrainSample};
use crate::metrics::{EvalReport, FrameEval};
use crate::scenario::SimConfig;
use crate::scene::{generate_scene, mix_seed, observe, AgentObservation, Scene};

const EVAL_SALT: u64 = 0x6576_616c;
const TRAIN_SALT: u64 = 0x7472_6169_6e;

/// Half-width of the score band around `phi_i` that counts as ambiguous.
pub const AMBIGUITY_BAND: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum StrategyKind {
    NoFusion,
    LateFusion,
    LifBase,
    LifFull,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::NoFusion,
        StrategyKind::LateFusion,
        StrategyKind::LifBase,
        StrategyKind::LifFull,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::NoFusion => "no-fusion",
            StrategyKind::LateFusion => "late-fusion",
            StrategyKind::LifBase => "lif-base",
            StrategyKind::LifFull => "lif-full",
        }
    }

    pub fn needs_head(self) -> bool {
        self != StrategyKind::LateFusion
    }

    pub fn communicates(self) -> bool {
        self != StrategyKind::NoFusion
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown strategy {s:?}")))
    }
}

/// A fusion strategy with its channel policy and, for grid strategies, a head.
#[derive(Debug, Clone)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub policy: CommPolicy,
    pub head: Option<Arc<HeadParams>>,
}

impl Strategy {
    pub fn new(kind: StrategyKind, policy: CommPolicy, head: Option<Arc<HeadParams>>) -> Result<Self> {
        if kind.needs_head() && head.is_none() {
            return Err(Error::InvalidConfig(format!(
                "strategy {} needs trained head parameters",
                kind.as_str()
            )));
        }
        policy.validate()?;
        Ok(Strategy { kind, policy, head })
    }

    /// Policy actually applied on the channel.
    fn effective_policy(&self) -> CommPolicy {
        let mut p = self.policy.clone();
        match self.kind {
            StrategyKind::NoFusion => {}
            StrategyKind::LateFusion => {
                p.kind = PolicyKind::Objectness;
                p.objectness_threshold = 0.0;
                p.send_2d = false;
                p.send_3d = true;
            }
            StrategyKind::LifBase => {
                p.send_2d = false;
                p.send_3d = true;
            }
            StrategyKind::LifFull => {
                p.send_2d = true;
                p.send_3d = true;
            }
        }
        p
    }
}

/// Everything observed in one frame before communication.
#[derive(Debug, Clone)]
pub struct FrameContext {
    pub frame: usize,
    pub ego: usize,
    pub scene: Scene,
    pub observations: Vec<AgentObservation>,
    /// Ground truth in the ego frame, restricted to the ego grid.
    pub ego_gts: Vec<GroundTruthBox>,
}

fn frame_seed(cfg: &SimConfig, salt: u64, frame: usize) -> u64 {
    mix_seed(mix_seed(cfg.seed, salt), frame as u64)
}

fn build_context(cfg: &SimConfig, salt: u64, frame: usize) -> Result<FrameContext> {
    let scene = generate_scene(&cfg.scene, &cfg.grid, frame_seed(cfg, salt, frame))?;
    let ego = frame % cfg.scene.agent_count;
    let observations = (0..cfg.scene.agent_count)
        .map(|a| observe(&scene, a, &cfg.profile_for(a), &cfg.grid, &cfg.encoder))
        .collect::<Result<Vec<_>>>()?;
    let origin = scene.agents[ego].origin;
    let ego_gts = scene
        .boxes
        .iter()
        .map(|b| GroundTruthBox {
            x: b.x - origin.x,
            y: b.y - origin.y,
            z: b.z - origin.z,
            ..*b
        })
        .filter(|b| cfg.grid.locate_xy(b.x, b.y).is_some())
        .collect();
    Ok(FrameContext {
        frame,
        ego,
        scene,
        observations,
        ego_gts,
    })
}

/// Scene and observations of evaluation frame `frame`.
pub fn eval_context(cfg: &SimConfig, frame: usize) -> Result<FrameContext> {
    build_context(cfg, EVAL_SALT, frame).map_err(|e| e.in_frame(frame))
}

/// Scene and observations of training frame `frame`; disjoint from evaluation.
pub fn train_context(cfg: &SimConfig, frame: usize) -> Result<FrameContext> {
    build_context(cfg, TRAIN_SALT, frame).map_err(|e| e.in_frame(frame))
}

/// Messages delivered to the ego in one frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exchange {
    /// Decoded from the wire, in sender order.
    pub messages: Vec<DetectionMessage>,
    pub preround_bytes: usize,
    /// Detection items whose sender score lies within the ambiguity band.
    pub ambiguous_items: usize,
}

impl Exchange {
    pub fn payload_bytes(&self) -> usize {
        self.messages.iter().map(|m| m.payload_bytes()).sum()
    }
}

/// Runs the sender side of every non-ego agent under `policy`.
pub fn exchange(ctx: &FrameContext, cfg: &SimConfig, policy: &CommPolicy) -> Result<Exchange> {
    let spec = &cfg.grid;
    let ego_obs = &ctx.observations[ctx.ego];
    let phi = policy.detection_threshold;
    let ego_u = uncertainty_map(&ego_obs.score_map, phi);
    let mut out = Exchange::default();
    for sender in &ctx.observations {
        if sender.agent_id == ctx.ego {
            continue;
        }
        let items = share_candidates(
            sender,
            spec,
            cfg.scene.object_height,
            policy.send_2d,
            policy.send_3d,
        );
        let sel = match policy.kind {
            PolicyKind::Uncertainty => {
                out.preround_bytes += score_map_bytes(spec);
                let ego_u_here = resample_translated(&ego_u, spec, &ego_obs.origin, &sender.origin, 0.0);
                let sender_u = uncertainty_map(&sender.score_map, phi);
                let demand = demand_map(&ego_u_here, &sender_u)?;
                select_shared(
                    sender,
                    &items,
                    &demand,
                    &ego_u_here,
                    policy,
                    spec,
                    ctx.ego,
                    ctx.frame as u64,
                )
            }
            PolicyKind::Objectness => objectness_select(
                sender,
                &items,
                policy.objectness_threshold,
                policy.budget_bytes,
                spec,
                ctx.ego,
                ctx.frame as u64,
            ),
        };
        out.ambiguous_items += sel
            .item_cells
            .iter()
            .filter(|&&c| (sender.score_map.get(c) - phi).abs() <= AMBIGUITY_BAND)
            .count();
        let bytes = wire::encode(&sel.message)?;
        out.messages.push(wire::decode(&bytes)?);
    }
    Ok(out)
}

/// Received content expressed in the ego frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Received {
    pub points: Vec<(CellLookup, f64)>,
    /// Deduplicated received boxes.
    pub boxes: Vec<Box3D>,
    /// Strongest background certainty per ego cell. Cells within one cell of
    /// a received point or box are left out: detections win over assertions.
    pub background: Vec<(BevCell, f64)>,
}

pub fn receive(messages: &[DetectionMessage], ego_origin: [f64; 3], spec: &GridSpec, dedupe_radius: f64) -> Received {
    let mut points = Vec::new();
    let mut boxes = Vec::new();
    let mut bg: Vec<f64> = Vec::new();
    for m in messages {
        for p in &m.points_2d {
            let (x, y) = (p.x as f64 - ego_origin[0], p.y as f64 - ego_origin[1]);
            let lookup = match spec.locate_xy(x, y) {
                Some(c) => CellLookup::Inside(c),
                None => CellLookup::OutOfRange,
            };
            points.push((lookup, p.score as f64));
        }
        let (dx, dy, dz) = (
            m.sender_origin[0] - ego_origin[0],
            m.sender_origin[1] - ego_origin[1],
            m.sender_origin[2] - ego_origin[2],
        );
        for b in &m.boxes_3d {
            boxes.push(b.to_box().translated(dx, dy, dz));
        }
        for a in &m.background {
            if let Some(c) = spec.locate_xy(a.x as f64 - ego_origin[0], a.y as f64 - ego_origin[1]) {
                if bg.is_empty() {
                    bg = vec![0.0; spec.cell_count()];
                }
                let slot = &mut bg[spec.index(c)];
                *slot = slot.max(a.certainty as f64);
            }
        }
    }
    let boxes = dedupe_received(&boxes, dedupe_radius);
    let mut background = Vec::new();
    if !bg.is_empty() {
        let mut evidence = vec![false; spec.cell_count()];
        let occupied = points
            .iter()
            .filter_map(|(l, _)| l.cell())
            .chain(boxes.iter().filter_map(|b| spec.locate_xy(b.x, b.y)));
        for c in occupied {
            for r in c.row.saturating_sub(1)..=(c.row + 1).min(spec.height() - 1) {
                for col in c.col.saturating_sub(1)..=(c.col + 1).min(spec.width() - 1) {
                    evidence[r * spec.width() + col] = true;
                }
            }
        }
        background = bg
            .iter()
            .enumerate()
            .filter(|&(i, &v)| v > 0.0 && !evidence[i])
            .map(|(i, &v)| (spec.cell_at(i), v))
            .collect();
    }
    Received {
        points,
        boxes,
        background,
    }
}

/// Scales each decoded box's confidence by `1 - certainty` of the background
/// assertion at its centre cell; boxes that fall to `min_score` or below are dropped.
pub fn apply_background(boxes: Vec<Box3D>, background: &[(BevCell, f64)], spec: &GridSpec, min_score: f64) -> Vec<Box3D> {
    if background.is_empty() {
        return boxes;
    }
    let mut certainty = vec![0.0; spec.cell_count()];
    for &(cell, c) in background {
        certainty[spec.index(cell)] = c.clamp(0.0, 1.0);
    }
    boxes
        .into_iter()
        .filter_map(|mut b| {
            if let Some(cell) = spec.locate_xy(b.x, b.y) {
                b.score *= 1.0 - certainty[spec.index(cell)];
            }
            (b.score > min_score).then_some(b)
        })
        .collect()
}

fn ego_origin(ctx: &FrameContext) -> [f64; 3] {
    let o = ctx.observations[ctx.ego].origin;
    [o.x, o.y, o.z]
}

/// Fused `(C + 5)`-channel grid of the ego for the received content.
pub fn fused_grid(features: &BevGrid, received: &Received, head: &HeadParams, spec: &GridSpec, use_vpe: bool) -> Result<BevGrid> {
    let refined = if use_vpe && !received.points.is_empty() {
        refine_features(features, &build_vpe(&received.points, &head.q, spec).grid)?
    } else {
        features.clone()
    };
    fuse(&refined, &build_bobev(&received.boxes, spec).grid)
}

/// Per-frame result of one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutcome {
    pub frame: usize,
    pub ego: usize,
    pub eval: FrameEval,
    pub payload_bytes: usize,
    pub preround_bytes: usize,
    pub messages: usize,
    pub points: usize,
    pub boxes: usize,
    pub background: usize,
    pub ambiguous_items: usize,
}

/// Runs `strategy` for the ego of `ctx`.
pub fn run_frame(ctx: &FrameContext, strategy: &Strategy, cfg: &SimConfig) -> Result<FrameOutcome> {
    let spec = &cfg.grid;
    let ego = &ctx.observations[ctx.ego];
    let ex = if strategy.kind.communicates() {
        exchange(ctx, cfg, &strategy.effective_policy())?
    } else {
        Exchange::default()
    };
    let received = receive(&ex.messages, ego_origin(ctx), spec, cfg.dedupe_radius);
    let preds = match strategy.kind {
        StrategyKind::LateFusion => {
            let mut all = ego.dets_3d.clone();
            all.extend(received.boxes.iter().copied());
            dedupe_received(&all, cfg.dedupe_radius)
                .into_iter()
                .filter(|b| spec.locate_xy(b.x, b.y).is_some())
                .collect()
        }
        kind => {
            let head = strategy.head.as_deref().expect("checked in Strategy::new");
            let grid = fused_grid(&ego.features, &received, head, spec, kind == StrategyKind::LifFull)?;
            let (heat, reg) = head::forward(&grid, head)?;
            let boxes = head::decode(&heat, &reg, spec, &cfg.decode);
            apply_background(boxes, &received.background, spec, cfg.decode.peak_threshold)
        }
    };
    Ok(FrameOutcome {
        frame: ctx.frame,
        ego: ctx.ego,
        eval: FrameEval {
            preds,
            gts: ctx.ego_gts.clone(),
        },
        payload_bytes: ex.payload_bytes(),
        preround_bytes: ex.preround_bytes,
        messages: ex.messages.iter().filter(|m| !m.is_empty()).count(),
        points: ex.messages.iter().map(|m| m.points_2d.len()).sum(),
        boxes: ex.messages.iter().map(|m| m.boxes_3d.len()).sum(),
        background: ex.messages.iter().map(|m| m.background.len()).sum(),
        ambiguous_items: ex.ambiguous_items,
    })
}

/// Aggregate of one strategy over a frame suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSummary {
    pub label: String,
    pub eval: EvalReport,
    pub payload_bytes: u64,
    pub preround_bytes: u64,
    pub messages: u64,
    pub points: u64,
    pub boxes: u64,
    pub background: u64,
    pub ambiguous_items: u64,
}

impl SuiteSummary {
    fn reduce(label: String, outcomes: Vec<FrameOutcome>) -> Self {
        let mut s = SuiteSummary {
            label,
            eval: EvalReport::evaluate(&[]),
            payload_bytes: 0,
            preround_bytes: 0,
            messages: 0,
            points: 0,
            boxes: 0,
            background: 0,
            ambiguous_items: 0,
        };
        let mut evals = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            s.payload_bytes += o.payload_bytes as u64;
            s.preround_bytes += o.preround_bytes as u64;
            s.messages += o.messages as u64;
            s.points += o.points as u64;
            s.boxes += o.boxes as u64;
            s.background += o.background as u64;
            s.ambiguous_items += o.ambiguous_items as u64;
            evals.push(o.eval);
        }
        s.eval = EvalReport::evaluate(&evals);
        s
    }

    pub fn mean_payload_bytes(&self) -> f64 {
        self.payload_bytes as f64 / self.eval.frames.max(1) as f64
    }

    /// Ambiguous detection items per transmitted payload byte; 0 when nothing was sent.
    pub fn ambiguous_per_byte(&self) -> f64 {
        if self.payload_bytes == 0 {
            0.0
        } else {
            self.ambiguous_items as f64 / self.payload_bytes as f64
        }
    }

    pub fn to_key_values(&self) -> String {
        let mut s = format!("strategy={}\n", self.label);
        s.push_str(&self.eval.to_key_values());
        let _ = writeln!(s, "payload_bytes={}", self.payload_bytes);
        let _ = writeln!(s, "mean_payload_bytes={:.3}", self.mean_payload_bytes());
        let _ = writeln!(s, "preround_bytes={}", self.preround_bytes);
        let _ = writeln!(s, "messages={}", self.messages);
        let _ = writeln!(s, "points_2d={}", self.points);
        let _ = writeln!(s, "boxes_3d={}", self.boxes);
        let _ = writeln!(s, "background={}", self.background);
        let _ = writeln!(s, "ambiguous_items={}", self.ambiguous_items);
        s
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs every `(label, strategy)` pair over the evaluation frames, sharing
/// each frame's observations between them.
pub fn run_suite(cfg: &SimConfig, strategies: &[(String, Strategy)], threads: usize) -> Result<Vec<SuiteSummary>> {
    cfg.validate()?;
    if strategies.is_empty() {
        return Err(Error::InvalidConfig("no strategies to run".into()));
    }
    let per_frame: Vec<Vec<FrameOutcome>> = with_pool(threads, || {
        (0..cfg.frames)
            .into_par_iter()
            .map(|f| {
                let ctx = eval_context(cfg, f)?;
                strategies
                    .iter()
                    .map(|(_, s)| run_frame(&ctx, s, cfg).map_err(|e| e.in_frame(f)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut columns: Vec<Vec<FrameOutcome>> = vec![Vec::with_capacity(cfg.frames); strategies.len()];
    for row in per_frame {
        for (col, o) in columns.iter_mut().zip(row) {
            col.push(o);
        }
    }
    Ok(strategies
        .iter()
        .zip(columns)
        .map(|((label, _), outcomes)| SuiteSummary::reduce(label.clone(), outcomes))
        .collect())
}

/// Training samples of one frame for each requested strategy.
fn frame_samples(ctx: &FrameContext, cfg: &SimConfig, kinds: &[StrategyKind], demand_threshold: f64, q_len: usize) -> Result<Vec<TrainSample>> {
    let spec = &cfg.grid;
    let ego = &ctx.observations[ctx.ego];
    let features = Arc::new(ego.features.clone());
    let targets = HeadTargets::render(&ctx.ego_gts, spec);
    let zeros_vpe = Arc::new(vec![0.0; spec.cell_count()]);
    let zeros_bobev = Arc::new(BevGrid::for_spec(spec, crate::fusion::BOBEV_CHANNELS));
    let mut out = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let (vpe, bobev) = match kind {
            StrategyKind::NoFusion => (zeros_vpe.clone(), zeros_bobev.clone()),
            StrategyKind::LateFusion => {
                return Err(Error::InvalidConfig("late-fusion has no trainable head".into()))
            }
            _ => {
                let mut strategy = Strategy {
                    kind,
                    policy: cfg.policy.clone(),
                    head: None,
                };
                strategy.policy.demand_threshold = demand_threshold;
                let ex = exchange(ctx, cfg, &strategy.effective_policy())?;
                let rec = receive(&ex.messages, ego_origin(ctx), spec, cfg.dedupe_radius);
                let vpe = if kind == StrategyKind::LifFull {
                    Arc::new(strongest_per_cell(&rec.points, spec).0)
                } else {
                    zeros_vpe.clone()
                };
                (vpe, Arc::new(build_bobev(&rec.boxes, spec).grid))
            }
        };
        debug_assert_eq!(features.channels(), q_len);
        out.push(TrainSample {
            features: features.clone(),
            vpe_confidence: vpe,
            bobev,
            targets: targets.clone(),
        });
    }
    Ok(out)
}

/// Builds training sets (one per kind) from the training frames.
pub fn training_sets(cfg: &SimConfig, kinds: &[StrategyKind], threads: usize) -> Result<Vec<Vec<TrainSample>>> {
    cfg.validate()?;
    if cfg.train_frames == 0 {
        return Err(Error::InvalidConfig("train_frames must be >= 1".into()));
    }
    let thresholds = if cfg.train_demand_thresholds.is_empty() {
        vec![cfg.policy.demand_threshold]
    } else {
        cfg.train_demand_thresholds.clone()
    };
    let per_frame: Vec<Vec<TrainSample>> = with_pool(threads, || {
        (0..cfg.train_frames)
            .into_par_iter()
            .map(|f| {
                let ctx = train_context(cfg, f)?;
                let phi = thresholds[f % thresholds.len()];
                frame_samples(&ctx, cfg, kinds, phi, cfg.encoder.channels).map_err(|e| e.in_frame(f))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    let mut sets: Vec<Vec<TrainSample>> = vec![Vec::with_capacity(cfg.train_frames); kinds.len()];
    for row in per_frame {
        for (set, s) in sets.iter_mut().zip(row) {
            set.push(s);
        }
    }
    Ok(sets)
}

/// Trains one head per requested kind.
pub fn train_heads(cfg: &SimConfig, kinds: &[StrategyKind], threads: usize) -> Result<Vec<TrainOutcome>> {
    let sets = training_sets(cfg, kinds, threads)?;
    let mut out = Vec::with_capacity(kinds.len());
    for set in sets {
        out.push(with_pool(threads, || head::train(&set, &cfg.train))??);
    }
    Ok(out)
}

pub fn train_pipeline(cfg: &SimConfig, kind: StrategyKind, threads: usize) -> Result<TrainOutcome> {
    Ok(train_heads(cfg, &[kind], threads)?.remove(0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    DemandThreshold,
    BudgetBytes,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::DemandThreshold => "phi_dem",
            SweepAxis::BudgetBytes => "budget_bytes",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub value: f64,
    pub policy: PolicyKind,
    pub summary: SuiteSummary,
}

fn policy_name(kind: PolicyKind) -> &'static str {
    match kind {
        PolicyKind::Uncertainty => "uncertainty",
        PolicyKind::Objectness => "objectness",
    }
}

/// Evaluates `base` at every value along `axis`.
pub fn sweep(
    cfg: &SimConfig,
    base: &Strategy,
    axis: SweepAxis,
    values: &[f64],
    threads: usize,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig("sweep needs at least one value".into()));
    }
    let mut strategies = Vec::with_capacity(values.len());
    for &v in values {
        let mut s = base.clone();
        match axis {
            SweepAxis::DemandThreshold => s.policy.demand_threshold = v,
            SweepAxis::BudgetBytes => {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::InvalidConfig(format!("budget {v} must be a finite byte count")));
                }
                s.policy.budget_bytes = Some(v as usize);
            }
        }
        s.policy.validate()?;
        strategies.push((format!("{}@{}={v}", base.kind.as_str(), axis.as_str()), s));
    }
    let summaries = run_suite(cfg, &strategies, threads)?;
    Ok(values
        .iter()
        .zip(summaries)
        .map(|(&value, summary)| SweepPoint {
            axis,
            value,
            policy: base.policy.kind,
            summary,
        })
        .collect())
}

pub const SWEEP_CSV_HEADER: &str = "strategy,policy,axis,value,payload_bytes,mean_payload_bytes,log2_mean_payload_bytes,preround_bytes,messages,points_2d,boxes_3d,background,ambiguous_items";

/// CSV with one row per sweep point. `log2_mean_payload_bytes` is empty when
/// nothing was transmitted.
pub fn sweep_csv(strategy: StrategyKind, points: &[SweepPoint]) -> String {
    let mut s = format!("{SWEEP_CSV_HEADER},{}\n", EvalReport::CSV_HEADER);
    for p in points {
        let m = &p.summary;
        let mean = m.mean_payload_bytes();
        let log2 = if mean > 0.0 { format!("{:.6}", mean.log2()) } else { String::new() };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:.3},{},{},{},{},{},{},{},{}",
            strategy.as_str(),
            policy_name(p.policy),
            p.axis.as_str(),
            p.value,
            m.payload_bytes,
            mean,
            log2,
            m.preround_bytes,
            m.messages,
            m.points,
            m.boxes,
            m.background,
            m.ambiguous_items,
            m.eval.csv_fields()
        );
    }
    s
}

pub const REPORT_CSV_HEADER: &str = "strategy,payload_bytes,mean_payload_bytes,preround_bytes,messages,points_2d,boxes_3d,background,ambiguous_items";

/// CSV with one row per strategy summary.
pub fn report_csv(summaries: &[SuiteSummary]) -> String {
    let mut s = format!("{REPORT_CSV_HEADER},{}\n", EvalReport::CSV_HEADER);
    for m in summaries {
        let _ = writeln!(
            s,
            "{},{},{:.3},{},{},{},{},{},{},{}",
            m.label,
            m.payload_bytes,
            m.mean_payload_bytes(),
            m.preround_bytes,
            m.messages,
            m.points,
            m.boxes,
            m.background,
            m.ambiguous_items,
            m.eval.csv_fields()
        );
    }
    s
}

/// Line plot of mAP against `log2` mean payload bytes per frame. Points that
/// sent nothing are drawn at the left edge and labelled "none".
pub fn sweep_svg(title: &str, points: &[SweepPoint]) -> String {
    let (w, h, m) = (640.0, 400.0, 56.0);
    let xs: Vec<Option<f64>> = points
        .iter()
        .map(|p| {
            let b = p.summary.mean_payload_bytes();
            (b > 0.0).then(|| b.log2())
        })
        .collect();
    let finite: Vec<f64> = xs.iter().flatten().copied().collect();
    let (mut lo, mut hi) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    lo = lo.floor() - 1.0;
    hi = hi.ceil().max(lo + 1.0);
    let px = |x: Option<f64>| m + (x.unwrap_or(lo) - lo) / (hi - lo) * (w - 2.0 * m);
    let py = |y: f64| h - m - y.clamp(0.0, 1.0) * (h - 2.0 * m);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| xs[a].unwrap_or(lo).total_cmp(&xs[b].unwrap_or(lo)).then(a.cmp(&b)));

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{m} {m} V{} H{}" fill="none" stroke="black"/>"#,
        h - m,
        w - m
    );
    for t in 0..=4 {
        let y = t as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{y:.2}</text>"#, m - 6.0, py(y) + 4.0);
    }
    let (lo_i, hi_i) = (lo as i64, hi as i64);
    let step = ((hi_i - lo_i) / 8).max(1);
    let mut t = lo_i;
    while t <= hi_i {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{t}</text>"#, px(Some(t as f64)), h - m + 16.0);
        t += step;
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">log2(mean payload bytes per frame)</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="16" y="{}" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})" text-anchor="middle">mAP</text>"#, h / 2.0, h / 2.0);
    let path: Vec<String> = order
        .iter()
        .map(|&i| format!("{:.1},{:.1}", px(xs[i]), py(points[i].summary.eval.map)))
        .collect();
    if !path.is_empty() {
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#, path.join(" "));
    }
    for &i in &order {
        let (x, y) = (px(xs[i]), py(points[i].summary.eval.map));
        let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3.5" fill="steelblue"/>"#);
        if xs[i].is_none() {
            let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" font-family="sans-serif" font-size="10" text-anchor="middle">none</text>"#, y - 8.0);
        }
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Message volume of one frame in `log2` bytes, `None` when nothing was sent.
pub fn frame_volume_log2(outcome: &FrameOutcome) -> Option<f64> {
    comms::log2_bytes(outcome.payload_bytes)
}
