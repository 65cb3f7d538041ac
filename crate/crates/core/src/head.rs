//! Per-cell center-heatmap detection head.
//!
//! Each cell of the fused `(C + 5)`-channel grid is mapped independently to a
//! heatmap logit and to seven regression targets
//! `(dx, dy, w, h, l, sin yaw, cos yaw)`, where `(dx, dy)` is the object
//! centre offset from the cell centre in cell units. Classification is trained
//! with the Gaussian focal loss, regression with L1 on ground-truth centre
//! cells. The positional-embedding vector `Q` lives here too, so it is learned
//! jointly with the head.
//!
//! # Parameter file
//!
//! Little-endian: magic `b"SKFH"`, then `u32` version, `u32` C, `u32` R, then
//! f64 values in this order: `w_cls[C+5]`, `b_cls`, `w_reg[(C+5)*R]`
//! (input-channel major), `b_reg[R]`, `q[C]`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::boxes::{wrap_angle, Box3D, GroundTruthBox};
use crate::error::{Error, Result};
use crate::fusion::{dedupe_received, BOBEV_CHANNELS};
use crate::geometry::{BevCell, GridSpec};
use crate::grid::{BevGrid, ScalarMap};

pub const REG_DIM: usize = 7;
pub const FOCAL_EPS: f64 = 1e-7;

const PARAM_MAGIC: &[u8; 4] = b"SKFH";
const PARAM_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    feature_channels: usize,
    pub w_cls: Vec<f64>,
    pub b_cls: f64,
    /// `w_reg[d * REG_DIM + r]`.
    pub w_reg: Vec<f64>,
    pub b_reg: Vec<f64>,
    pub q: Vec<f64>,
}

impl HeadParams {
    pub fn zeros(feature_channels: usize) -> Self {
        let d = feature_channels + BOBEV_CHANNELS;
        HeadParams {
            feature_channels,
            w_cls: vec![0.0; d],
            b_cls: 0.0,
            w_reg: vec![0.0; d * REG_DIM],
            b_reg: vec![0.0; REG_DIM],
            q: vec![0.0; feature_channels],
        }
    }

    /// Small random weights, a background-favouring classifier bias and a
    /// random embedding.
    pub fn init(feature_channels: usize, seed: u64) -> Self {
        let mut p = HeadParams::zeros(feature_channels);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = Normal::new(0.0, 0.01).expect("valid sigma");
        let embed = Normal::new(0.0, 0.1).expect("valid sigma");
        for v in p.w_cls.iter_mut().chain(p.w_reg.iter_mut()) {
            *v = small.sample(&mut rng);
        }
        for v in p.q.iter_mut() {
            *v = embed.sample(&mut rng);
        }
        p.b_cls = -2.19;
        p
    }

    pub fn feature_channels(&self) -> usize {
        self.feature_channels
    }

    pub fn input_channels(&self) -> usize {
        self.feature_channels + BOBEV_CHANNELS
    }

    pub fn len(&self) -> usize {
        let d = self.input_channels();
        d + 1 + d * REG_DIM + REG_DIM + self.feature_channels
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parameters in file order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.w_cls);
        out.push(self.b_cls);
        out.extend_from_slice(&self.w_reg);
        out.extend_from_slice(&self.b_reg);
        out.extend_from_slice(&self.q);
        out
    }

    pub fn from_flat(feature_channels: usize, flat: &[f64]) -> Result<Self> {
        let mut p = HeadParams::zeros(feature_channels);
        if flat.len() != p.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                p.len()
            )));
        }
        let d = p.input_channels();
        let mut at = 0;
        let mut take = |n: usize| {
            let s = &flat[at..at + n];
            at += n;
            s
        };
        p.w_cls.copy_from_slice(take(d));
        p.b_cls = take(1)[0];
        p.w_reg.copy_from_slice(take(d * REG_DIM));
        p.b_reg.copy_from_slice(take(REG_DIM));
        p.q.copy_from_slice(take(feature_channels));
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.len());
        out.extend_from_slice(PARAM_MAGIC);
        out.extend_from_slice(&PARAM_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.feature_channels as u32).to_le_bytes());
        out.extend_from_slice(&(REG_DIM as u32).to_le_bytes());
        for v in self.flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[0..4] != PARAM_MAGIC {
            return Err(Error::ParamFile("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != PARAM_VERSION {
            return Err(Error::ParamFile(format!("unsupported version {version}")));
        }
        let c = word(8) as usize;
        let r = word(12) as usize;
        if r != REG_DIM {
            return Err(Error::ParamFile(format!("expected R = {REG_DIM}, found {r}")));
        }
        let body = &bytes[16..];
        let expected = HeadParams::zeros(c).len() * 8;
        if body.len() != expected {
            return Err(Error::ParamFile(format!(
                "expected {expected} parameter bytes, found {}",
                body.len()
            )));
        }
        let flat: Vec<f64> = body
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().expect("8 bytes")))
            .collect();
        HeadParams::from_flat(c, &flat)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        HeadParams::from_bytes(&fs::read(path)?)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn regress(x: &[f64], params: &HeadParams, out: &mut [f64; REG_DIM]) {
    out.copy_from_slice(&params.b_reg);
    for (d, &xd) in x.iter().enumerate() {
        if xd == 0.0 {
            continue;
        }
        let row = &params.w_reg[d * REG_DIM..(d + 1) * REG_DIM];
        for r in 0..REG_DIM {
            out[r] += xd * row[r];
        }
    }
}

/// Heatmap `sigmoid(w_cls . x + b)` and regression `W_reg^T x + b_reg` per cell.
pub fn forward(grid: &BevGrid, params: &HeadParams) -> Result<(ScalarMap, BevGrid)> {
    if grid.channels() != params.input_channels() {
        return Err(Error::DimensionMismatch(format!(
            "grid has {} channels, head expects {}",
            grid.channels(),
            params.input_channels()
        )));
    }
    let n = grid.cell_count();
    let mut heat = Vec::with_capacity(n);
    let mut reg = BevGrid::zeros(grid.height(), grid.width(), REG_DIM);
    let mut buf = [0.0; REG_DIM];
    for idx in 0..n {
        let x = grid.cell(idx);
        heat.push(sigmoid(dot(&params.w_cls, x) + params.b_cls));
        regress(x, params, &mut buf);
        reg.cell_mut(idx).copy_from_slice(&buf);
    }
    Ok((ScalarMap::from_vec(grid.height(), grid.width(), heat)?, reg))
}

fn pow(x: f64, e: f64) -> f64 {
    if e == 2.0 {
        x * x
    } else if e == 4.0 {
        let x2 = x * x;
        x2 * x2
    } else if e == 0.0 {
        1.0
    } else {
        x.powf(e)
    }
}

/// Focal-loss term of one cell and its derivative with respect to the logit.
/// The derivative vanishes where the probability is clamped.
fn focal_cell(p_raw: f64, target: f64, alpha: f64, beta: f64) -> (f64, f64) {
    let p = p_raw.clamp(FOCAL_EPS, 1.0 - FOCAL_EPS);
    let active = p == p_raw;
    if target == 1.0 {
        let om = 1.0 - p;
        let lp = p.ln();
        let loss = -pow(om, alpha) * lp;
        let g = if active {
            alpha * p * pow(om, alpha) * lp - pow(om, alpha + 1.0)
        } else {
            0.0
        };
        (loss, g)
    } else {
        let wt = pow(1.0 - target, beta);
        let l1p = (1.0 - p).ln();
        let loss = -wt * pow(p, alpha) * l1p;
        let g = if active {
            -wt * (alpha * pow(p, alpha) * (1.0 - p) * l1p - pow(p, alpha + 1.0))
        } else {
            0.0
        };
        (loss, g)
    }
}

fn positive_count(target: &ScalarMap) -> f64 {
    (target.values().iter().filter(|&&t| t == 1.0).count().max(1)) as f64
}

/// Gaussian focal loss, normalized by the number of `target == 1` cells.
pub fn gaussian_focal_loss(pred: &ScalarMap, target: &ScalarMap, alpha: f64, beta: f64) -> Result<f64> {
    pred.ensure_same_dims(target)?;
    let n_pos = positive_count(target);
    let sum: f64 = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(&p, &t)| focal_cell(p, t, alpha, beta).0)
        .sum();
    Ok(sum / n_pos)
}

/// Mean absolute error over the masked cells and all regression targets.
pub fn l1_reg_loss(reg: &BevGrid, positives: &[(usize, [f64; REG_DIM])]) -> f64 {
    if positives.is_empty() {
        return 0.0;
    }
    let sum: f64 = positives
        .iter()
        .map(|(idx, t)| {
            reg.cell(*idx)
                .iter()
                .zip(t)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .sum();
    sum / (positives.len() * REG_DIM) as f64
}

/// CenterNet Gaussian radius for a `height x width` footprint (in cells).
pub fn gaussian_radius(height: f64, width: f64, min_overlap: f64) -> f64 {
    let (a1, b1) = (1.0, height + width);
    let c1 = width * height * (1.0 - min_overlap) / (1.0 + min_overlap);
    let r1 = (b1 + (b1 * b1 - 4.0 * a1 * c1).sqrt()) / 2.0;
    let (a2, b2) = (4.0, 2.0 * (height + width));
    let c2 = (1.0 - min_overlap) * width * height;
    let r2 = (b2 + (b2 * b2 - 4.0 * a2 * c2).sqrt()) / 2.0;
    let a3 = 4.0 * min_overlap;
    let b3 = -2.0 * min_overlap * (height + width);
    let c3 = (min_overlap - 1.0) * width * height;
    let r3 = (b3 + (b3 * b3 - 4.0 * a3 * c3).sqrt()) / 2.0;
    r1.min(r2).min(r3)
}

/// Training targets for one ego frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadTargets {
    pub heatmap: ScalarMap,
    /// `(cell index, [dx, dy, w, h, l, sin, cos])` at ground-truth centre cells.
    pub positives: Vec<(usize, [f64; REG_DIM])>,
}

impl HeadTargets {
    /// Renders ego-frame ground truth. Centre cells get exactly 1.
    pub fn render(gts: &[GroundTruthBox], spec: &GridSpec) -> Self {
        let mut heatmap = ScalarMap::for_spec(spec);
        let mut positives: Vec<(usize, [f64; REG_DIM])> = Vec::new();
        let res = spec.resolution();
        for gt in gts {
            let Some(cell) = spec.locate_xy(gt.x, gt.y) else {
                continue;
            };
            let radius = gaussian_radius(gt.l / res, gt.w / res, 0.1).floor().max(1.0);
            let sigma = (2.0 * radius + 1.0) / 6.0;
            draw_gaussian(&mut heatmap, cell, radius as isize, sigma);
            let [cx, cy] = spec.cell_center(cell);
            let yaw = wrap_angle(gt.yaw);
            let t = [
                (gt.x - cx) / res,
                (gt.y - cy) / res,
                gt.w,
                gt.h,
                gt.l,
                yaw.sin(),
                yaw.cos(),
            ];
            let idx = spec.index(cell);
            match positives.iter_mut().find(|(i, _)| *i == idx) {
                Some(slot) => slot.1 = t,
                None => positives.push((idx, t)),
            }
        }
        HeadTargets { heatmap, positives }
    }
}

fn draw_gaussian(map: &mut ScalarMap, center: BevCell, radius: isize, sigma: f64) {
    let (h, w) = (map.height() as isize, map.width() as isize);
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            let (r, c) = (center.row as isize + dr, center.col as isize + dc);
            if r < 0 || c < 0 || r >= h || c >= w {
                continue;
            }
            let mut v = (-((dr * dr + dc * dc) as f64) / (2.0 * sigma * sigma)).exp();
            if v < f64::EPSILON {
                v = 0.0;
            }
            let cell = BevCell::new(r as usize, c as usize);
            if v > map.get(cell) {
                map.set(cell, v);
            }
        }
    }
}

/// Unfused inputs of one training frame, so that `Q` can be differentiated.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    /// Ego features `F` (C channels).
    pub features: Arc<BevGrid>,
    /// Strongest received 2D-point confidence per cell, 0 where none.
    pub vpe_confidence: Arc<Vec<f64>>,
    pub bobev: Arc<BevGrid>,
    pub targets: HeadTargets,
}

impl TrainSample {
    /// The fused grid this sample represents under `q`.
    pub fn fused(&self, q: &[f64]) -> BevGrid {
        let c = self.features.channels();
        let cb = self.bobev.channels();
        let mut out = BevGrid::zeros(self.features.height(), self.features.width(), c + cb);
        for idx in 0..self.features.cell_count() {
            let s = self.vpe_confidence[idx];
            let cell = out.cell_mut(idx);
            for (k, (&f, &qk)) in self.features.cell(idx).iter().zip(q).enumerate() {
                cell[k] = f + if s != 0.0 { s * qk } else { 0.0 };
            }
            cell[c..].copy_from_slice(self.bobev.cell(idx));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub focal_alpha: f64,
    pub focal_beta: f64,
    pub lambda_cls: f64,
    pub lambda_reg: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.05,
            epochs: 150,
            focal_alpha: 2.0,
            focal_beta: 4.0,
            lambda_cls: 1.0,
            lambda_reg: 0.25,
            seed: 17,
            optimizer: Optimizer::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be >= 0".into()));
        }
        if !(self.focal_alpha >= 0.0 && self.focal_beta >= 0.0) {
            return Err(Error::InvalidConfig("focal alpha and beta must be >= 0".into()));
        }
        Ok(())
    }
}

/// Total loss `lambda_cls * focal + lambda_reg * L1` of one sample, with its
/// gradient when requested.
pub fn sample_loss(
    sample: &TrainSample,
    params: &HeadParams,
    config: &TrainConfig,
    want_grad: bool,
) -> (f64, Option<HeadParams>) {
    let c = params.feature_channels();
    let d = params.input_channels();
    let n = sample.features.cell_count();
    let n_pos = positive_count(&sample.targets.heatmap);
    let mut grad = want_grad.then(|| HeadParams::zeros(c));
    let mut x = vec![0.0; d];
    let mut focal_sum = 0.0;

    let reg_scale = if sample.targets.positives.is_empty() {
        0.0
    } else {
        1.0 / (sample.targets.positives.len() * REG_DIM) as f64
    };
    // dense lookup of positive cells
    let mut pos_slot = vec![usize::MAX; 0];
    if !sample.targets.positives.is_empty() {
        pos_slot = vec![usize::MAX; n];
        for (k, (idx, _)) in sample.targets.positives.iter().enumerate() {
            pos_slot[*idx] = k;
        }
    }
    let mut l1_sum = 0.0;
    let mut reg_out = [0.0; REG_DIM];
    let targets = sample.targets.heatmap.values();

    for idx in 0..n {
        let s = sample.vpe_confidence[idx];
        let f = sample.features.cell(idx);
        if s != 0.0 {
            for k in 0..c {
                x[k] = f[k] + s * params.q[k];
            }
        } else {
            x[..c].copy_from_slice(f);
        }
        x[c..].copy_from_slice(sample.bobev.cell(idx));

        let p = sigmoid(dot(&params.w_cls, &x) + params.b_cls);
        let (loss, g_logit) = focal_cell(p, targets[idx], config.focal_alpha, config.focal_beta);
        focal_sum += loss;
        let g_logit = g_logit * config.lambda_cls / n_pos;

        let mut g_reg = [0.0; REG_DIM];
        let mut has_reg = false;
        if !pos_slot.is_empty() && pos_slot[idx] != usize::MAX {
            let t = &sample.targets.positives[pos_slot[idx]].1;
            regress(&x, params, &mut reg_out);
            for r in 0..REG_DIM {
                let diff = reg_out[r] - t[r];
                l1_sum += diff.abs();
                g_reg[r] = diff.signum() * config.lambda_reg * reg_scale;
                if diff == 0.0 {
                    g_reg[r] = 0.0;
                }
            }
            has_reg = true;
        }

        if let Some(g) = grad.as_mut() {
            if g_logit != 0.0 {
                g.b_cls += g_logit;
                for (gw, &xd) in g.w_cls.iter_mut().zip(&x) {
                    *gw += g_logit * xd;
                }
            }
            if has_reg {
                for r in 0..REG_DIM {
                    g.b_reg[r] += g_reg[r];
                }
                for (dd, &xd) in x.iter().enumerate() {
                    if xd == 0.0 {
                        continue;
                    }
                    let row = &mut g.w_reg[dd * REG_DIM..(dd + 1) * REG_DIM];
                    for r in 0..REG_DIM {
                        row[r] += g_reg[r] * xd;
                    }
                }
            }
            if s != 0.0 {
                for k in 0..c {
                    let mut dx = g_logit * params.w_cls[k];
                    if has_reg {
                        let row = &params.w_reg[k * REG_DIM..(k + 1) * REG_DIM];
                        dx += dot(row, &g_reg);
                    }
                    g.q[k] += s * dx;
                }
            }
        }
    }
    let loss = config.lambda_cls * focal_sum / n_pos + config.lambda_reg * l1_sum * reg_scale;
    (loss, grad)
}

/// Mean loss over `dataset` and its gradient. Per-sample work runs on the
/// current rayon pool; the reduction is sequential, so results do not depend
/// on the number of workers.
pub fn dataset_loss(
    dataset: &[TrainSample],
    params: &HeadParams,
    config: &TrainConfig,
    want_grad: bool,
) -> (f64, Option<HeadParams>) {
    let parts: Vec<(f64, Option<HeadParams>)> = dataset
        .par_iter()
        .map(|s| sample_loss(s, params, config, want_grad))
        .collect();
    let scale = 1.0 / dataset.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; params.len()]);
    for (l, g) in parts {
        loss += l;
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            for (a, v) in acc.iter_mut().zip(g.flatten()) {
                *a += v;
            }
        }
    }
    let grad = grad.map(|mut g| {
        g.iter_mut().for_each(|v| *v *= scale);
        HeadParams::from_flat(params.feature_channels(), &g).expect("shape preserved")
    });
    (loss * scale, grad)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: HeadParams,
    /// Loss before each update, then the final loss.
    pub loss_trace: Vec<f64>,
}

/// Full-batch training from `init`.
pub fn train_from(
    dataset: &[TrainSample],
    init: HeadParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let c = init.feature_channels();
    for s in dataset {
        if s.features.channels() != c || s.bobev.channels() != BOBEV_CHANNELS {
            return Err(Error::DimensionMismatch(
                "training sample channels do not match the head".into(),
            ));
        }
    }
    let mut flat = init.flatten();
    let mut m = vec![0.0; flat.len()];
    let mut v = vec![0.0; flat.len()];
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..config.epochs {
        let params = HeadParams::from_flat(c, &flat)?;
        let (loss, grad) = dataset_loss(dataset, &params, config, true);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        trace.push(loss);
        let g = grad.expect("gradient requested").flatten();
        match config.optimizer {
            Optimizer::Sgd => {
                for (p, gi) in flat.iter_mut().zip(&g) {
                    *p -= config.learning_rate * gi;
                }
            }
            Optimizer::Adam => {
                let t = (epoch + 1) as i32;
                let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
                for i in 0..flat.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                    flat[i] -= config.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
    let params = HeadParams::from_flat(c, &flat)?;
    let (loss, _) = dataset_loss(dataset, &params, config, false);
    if !loss.is_finite() {
        return Err(Error::Diverged {
            epoch: config.epochs,
            loss,
        });
    }
    trace.push(loss);
    Ok(TrainOutcome {
        params,
        loss_trace: trace,
    })
}

/// Trains a head from a seeded initialization.
pub fn train(dataset: &[TrainSample], config: &TrainConfig) -> Result<TrainOutcome> {
    let c = dataset
        .first()
        .map(|s| s.features.channels())
        .ok_or_else(|| Error::InvalidConfig("training set is empty".into()))?;
    train_from(dataset, HeadParams::init(c, config.seed), config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub peak_threshold: f64,
    /// Greedy centre-distance suppression after peak extraction; `None` disables it.
    pub suppress_radius: Option<f64>,
    pub plane_height: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            peak_threshold: 0.05,
            suppress_radius: Some(1.5),
            plane_height: crate::geometry::DEFAULT_OBJECT_HEIGHT,
        }
    }
}

/// Cells whose heatmap value exceeds `threshold` and is not below any of its
/// 8 neighbours, in row-major order.
pub fn heatmap_peaks(heatmap: &ScalarMap, threshold: f64) -> Vec<BevCell> {
    let (h, w) = heatmap.dims();
    let vals = heatmap.values();
    let mut peaks = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = vals[r * w + c];
            if !(v > threshold) {
                continue;
            }
            let mut is_peak = true;
            'n: for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                        continue;
                    }
                    if vals[rr as usize * w + cc as usize] > v {
                        is_peak = false;
                        break 'n;
                    }
                }
            }
            if is_peak {
                peaks.push(BevCell::new(r, c));
            }
        }
    }
    peaks
}

/// Turns heatmap peaks into ego-frame boxes.
pub fn decode(heatmap: &ScalarMap, reg: &BevGrid, spec: &GridSpec, config: &DecodeConfig) -> Vec<Box3D> {
    let res = spec.resolution();
    let boxes: Vec<Box3D> = heatmap_peaks(heatmap, config.peak_threshold)
        .into_iter()
        .map(|cell| {
            let r = reg.at(cell);
            let [cx, cy] = spec.cell_center(cell);
            Box3D {
                x: cx + r[0] * res,
                y: cy + r[1] * res,
                z: config.plane_height,
                w: r[2].max(0.01),
                h: r[3].max(0.01),
                l: r[4].max(0.01),
                yaw: r[5].atan2(r[6]),
                score: heatmap.get(cell),
            }
        })
        .collect();
    match config.suppress_radius {
        Some(radius) => dedupe_received(&boxes, radius),
        None => boxes,
    }
}
