//! C ABI over the simulator.
//!
//! Every fallible call returns an [`SfStatus`]; on failure a description is
//! kept per thread and read with [`sf_last_error_message`]. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. No function panics across the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use skyfuse::boxes::Box3D;
use skyfuse::comms::{self, wire, BackgroundAssertion, DetectionMessage, ProjectedPoint, WireBox};
use skyfuse::geometry::{self, CameraRig};
use skyfuse::head::HeadParams;
use skyfuse::sim::{self, FrameOutcome};
use skyfuse::{Error, SimConfig, Strategy, StrategyKind};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidRig = 3,
    InvalidGrid = 4,
    DimensionMismatch = 5,
    InvalidConfig = 6,
    Placement = 7,
    Wire = 8,
    ParamFile = 9,
    Diverged = 10,
    Scenario = 11,
    Io = 12,
    NoIntersection = 13,
    BufferTooSmall = 14,
    Panic = 15,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SfStrategy {
    NoFusion = 0,
    LateFusion = 1,
    LifBase = 2,
    LifFull = 3,
}

impl From<SfStrategy> for StrategyKind {
    fn from(s: SfStrategy) -> Self {
        match s {
            SfStrategy::NoFusion => StrategyKind::NoFusion,
            SfStrategy::LateFusion => StrategyKind::LateFusion,
            SfStrategy::LifBase => StrategyKind::LifBase,
            SfStrategy::LifFull => StrategyKind::LifFull,
        }
    }
}

/// Pinhole camera. `rotation` is camera-to-world, row-major.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct SfRig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SfBox {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
    pub h: f64,
    pub l: f64,
    pub yaw: f64,
    pub score: f64,
}

impl From<Box3D> for SfBox {
    fn from(b: Box3D) -> Self {
        SfBox {
            x: b.x,
            y: b.y,
            z: b.z,
            w: b.w,
            h: b.h,
            l: b.l,
            yaw: b.yaw,
            score: b.score,
        }
    }
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SfSummary {
    pub map: f64,
    pub nds: f64,
    pub payload_bytes: u64,
    pub preround_bytes: u64,
    pub frames: u64,
    pub predictions: u64,
    pub ground_truth: u64,
}

/// Opaque detection message.
pub struct SfMessage(DetectionMessage);

/// Opaque simulator: a scenario plus the heads loaded or trained so far.
pub struct SfSim {
    config: SimConfig,
    heads: [Option<Arc<HeadParams>>; 4],
}

/// Opaque per-frame result.
pub struct SfFrame(FrameOutcome);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SfStatus {
    match e.kind() {
        "invalid_rig" => SfStatus::InvalidRig,
        "invalid_grid" => SfStatus::InvalidGrid,
        "dimension_mismatch" => SfStatus::DimensionMismatch,
        "invalid_config" => SfStatus::InvalidConfig,
        "placement" => SfStatus::Placement,
        "wire" => SfStatus::Wire,
        "param_file" => SfStatus::ParamFile,
        "diverged" => SfStatus::Diverged,
        "scenario" => SfStatus::Scenario,
        "io" => SfStatus::Io,
        _ => SfStatus::InvalidArgument,
    }
}

fn fail(status: SfStatus, msg: impl Into<String>) -> SfStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), SfStatus>) -> SfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(SfStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: skyfuse::Result<T>) -> Result<T, SfStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, SfStatus> {
    p.as_ref().ok_or_else(|| fail(SfStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, SfStatus> {
    p.as_mut().ok_or_else(|| fail(SfStatus::NullPointer, format!("{what} is null")))
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn rig_of(r: &SfRig) -> Result<CameraRig, SfStatus> {
    let rot = Matrix3::from_row_slice(&r.rotation);
    let t = Vector3::from_row_slice(&r.translation);
    lift(CameraRig::new(r.fx, r.fy, r.cx, r.cy, rot, t, r.image_w, r.image_h))
}

/// Intersects the ray through pixel `(u, v)` with the plane `z = h`.
/// Writes the world point to `out_xyz[0..3]`.
///
/// # Safety
/// `rig` must point to a valid `SfRig` and `out_xyz` to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sf_pixel_to_ground(rig: *const SfRig, u: f64, v: f64, h: f64, out_xyz: *mut f64) -> SfStatus {
    guard(|| {
        let rig = rig_of(deref(rig, "rig")?)?;
        if out_xyz.is_null() {
            return Err(fail(SfStatus::NullPointer, "out_xyz is null"));
        }
        let p = geometry::pixel_to_ground(&rig, u, v, h)
            .ok_or_else(|| fail(SfStatus::NoIntersection, "ray does not reach the plane"))?;
        let out = std::slice::from_raw_parts_mut(out_xyz, 3);
        out.copy_from_slice(&[p.0.x, p.0.y, p.0.z]);
        Ok(())
    })
}

/// Projects a world point to pixels. Returns `NoIntersection` when the point
/// is behind the camera.
///
/// # Safety
/// `rig` must be valid; `out_u` and `out_v` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_project(rig: *const SfRig, x: f64, y: f64, z: f64, out_u: *mut f64, out_v: *mut f64) -> SfStatus {
    guard(|| {
        let rig = rig_of(deref(rig, "rig")?)?;
        let ou = deref_mut(out_u, "out_u")?;
        let ov = deref_mut(out_v, "out_v")?;
        let (u, v) = geometry::project(&rig, geometry::WorldPoint::new(x, y, z))
            .ok_or_else(|| fail(SfStatus::NoIntersection, "point is behind the camera"))?;
        *ou = u;
        *ov = v;
        Ok(())
    })
}

/// `log2(bytes)`; returns 0 and leaves `out` untouched when `bytes == 0`
/// (no transmission), 1 otherwise.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_log2_bytes(bytes: u64, out: *mut f64) -> i32 {
    match comms::log2_bytes(bytes as usize) {
        Some(v) if !out.is_null() => {
            *out = v;
            1
        }
        _ => 0,
    }
}

/// New empty message. Never returns null.
///
/// # Safety
/// `origin` must point to three doubles or be null (treated as zeros).
#[no_mangle]
pub unsafe extern "C" fn sf_message_new(sender: u32, receiver: u32, timestamp: u64, origin: *const f64) -> *mut SfMessage {
    let o = if origin.is_null() {
        [0.0; 3]
    } else {
        let s = std::slice::from_raw_parts(origin, 3);
        [s[0], s[1], s[2]]
    };
    Box::into_raw(Box::new(SfMessage(DetectionMessage::empty(sender, receiver, timestamp, o))))
}

/// # Safety
/// `msg` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_message_free(msg: *mut SfMessage) {
    if !msg.is_null() {
        drop(Box::from_raw(msg));
    }
}

/// # Safety
/// `msg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sf_message_add_point(msg: *mut SfMessage, x: f32, y: f32, score: f32) -> SfStatus {
    guard(|| {
        deref_mut(msg, "msg")?.0.points_2d.push(ProjectedPoint { x, y, score });
        Ok(())
    })
}

/// # Safety
/// `msg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sf_message_add_box(msg: *mut SfMessage, b: SfBox) -> SfStatus {
    guard(|| {
        let det = Box3D {
            x: b.x,
            y: b.y,
            z: b.z,
            w: b.w,
            h: b.h,
            l: b.l,
            yaw: b.yaw,
            score: b.score,
        };
        deref_mut(msg, "msg")?.0.boxes_3d.push(WireBox::from_box(&det));
        Ok(())
    })
}

/// # Safety
/// `msg` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sf_message_add_background(msg: *mut SfMessage, x: f32, y: f32, certainty: f32) -> SfStatus {
    guard(|| {
        deref_mut(msg, "msg")?.0.background.push(BackgroundAssertion { x, y, certainty });
        Ok(())
    })
}

/// Detection-payload bytes, `12 K + 32 K3`.
///
/// # Safety
/// `msg` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sf_message_detection_bytes(msg: *const SfMessage) -> u64 {
    msg.as_ref().map_or(0, |m| m.0.detection_bytes() as u64)
}

/// Detection bytes plus background records.
///
/// # Safety
/// `msg` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sf_message_payload_bytes(msg: *const SfMessage) -> u64 {
    msg.as_ref().map_or(0, |m| m.0.payload_bytes() as u64)
}

/// Writes point, box and background counts.
///
/// # Safety
/// `msg` must be valid; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_message_counts(msg: *const SfMessage, points: *mut u32, boxes: *mut u32, background: *mut u32) -> SfStatus {
    guard(|| {
        let m = &deref(msg, "msg")?.0;
        *deref_mut(points, "points")? = m.points_2d.len() as u32;
        *deref_mut(boxes, "boxes")? = m.boxes_3d.len() as u32;
        *deref_mut(background, "background")? = m.background.len() as u32;
        Ok(())
    })
}

/// Reads box `index` (as carried on the wire, widened to double).
///
/// # Safety
/// `msg` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_message_box(msg: *const SfMessage, index: u32, out: *mut SfBox) -> SfStatus {
    guard(|| {
        let m = &deref(msg, "msg")?.0;
        let b = m
            .boxes_3d
            .get(index as usize)
            .ok_or_else(|| fail(SfStatus::InvalidArgument, format!("box index {index} out of range")))?;
        *deref_mut(out, "out")? = b.to_box().into();
        Ok(())
    })
}

/// Serializes `msg`. With `buf` null or `cap` too small, only `out_len` is
/// written and `BufferTooSmall` is returned (null `buf` with enough room is
/// still an error).
///
/// # Safety
/// `msg` must be valid; `buf` must have `cap` writable bytes; `out_len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_message_encode(msg: *const SfMessage, buf: *mut u8, cap: usize, out_len: *mut usize) -> SfStatus {
    guard(|| {
        let bytes = lift(wire::encode(&deref(msg, "msg")?.0))?;
        *deref_mut(out_len, "out_len")? = bytes.len();
        if buf.is_null() || cap < bytes.len() {
            return Err(fail(
                SfStatus::BufferTooSmall,
                format!("{} bytes needed, {cap} available", bytes.len()),
            ));
        }
        ptr::copy_nonoverlapping(bytes.as_ptr(), buf, bytes.len());
        Ok(())
    })
}

/// Parses a serialized message into a new handle.
///
/// # Safety
/// `bytes` must have `len` readable bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_message_decode(bytes: *const u8, len: usize, out: *mut *mut SfMessage) -> SfStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        if bytes.is_null() {
            return Err(fail(SfStatus::NullPointer, "bytes is null"));
        }
        let msg = lift(wire::decode(std::slice::from_raw_parts(bytes, len)))?;
        *out = Box::into_raw(Box::new(SfMessage(msg)));
        Ok(())
    })
}

/// Creates a simulator from scenario TOML text (an empty string gives defaults).
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_from_toml(toml: *const c_char, out: *mut *mut SfSim) -> SfStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        if toml.is_null() {
            return Err(fail(SfStatus::NullPointer, "toml is null"));
        }
        let text = CStr::from_ptr(toml)
            .to_str()
            .map_err(|_| fail(SfStatus::InvalidArgument, "scenario text is not UTF-8"))?;
        let config = lift(SimConfig::from_toml_str(text))?;
        *out = Box::into_raw(Box::new(SfSim {
            config,
            heads: [None, None, None, None],
        }));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_free(sim: *mut SfSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of evaluation frames in the scenario.
///
/// # Safety
/// `sim` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sf_sim_frame_count(sim: *const SfSim) -> u64 {
    sim.as_ref().map_or(0, |s| s.config.frames as u64)
}

/// Trains the head of `strategy` on the scenario's training frames.
///
/// # Safety
/// `sim` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_train(sim: *mut SfSim, strategy: SfStrategy, threads: u32) -> SfStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        let kind = StrategyKind::from(strategy);
        if !kind.needs_head() {
            return Err(fail(SfStatus::InvalidArgument, "late-fusion has no trainable head"));
        }
        let outcome = lift(sim::train_pipeline(&s.config, kind, threads as usize))?;
        s.heads[strategy as usize] = Some(Arc::new(outcome.params));
        Ok(())
    })
}

/// Loads head parameters for `strategy` from a file.
///
/// # Safety
/// `sim` must be valid; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_load_head(sim: *mut SfSim, strategy: SfStrategy, path: *const c_char) -> SfStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        if path.is_null() {
            return Err(fail(SfStatus::NullPointer, "path is null"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(SfStatus::InvalidArgument, "path is not UTF-8"))?;
        let params = lift(HeadParams::load(std::path::Path::new(p)))?;
        s.heads[strategy as usize] = Some(Arc::new(params));
        Ok(())
    })
}

/// Saves the head of `strategy` to a file.
///
/// # Safety
/// `sim` must be valid; `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_save_head(sim: *const SfSim, strategy: SfStrategy, path: *const c_char) -> SfStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        if path.is_null() {
            return Err(fail(SfStatus::NullPointer, "path is null"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(SfStatus::InvalidArgument, "path is not UTF-8"))?;
        let head = s.heads[strategy as usize]
            .as_ref()
            .ok_or_else(|| fail(SfStatus::InvalidConfig, "no head for this strategy"))?;
        lift(head.save(std::path::Path::new(p)))
    })
}

fn strategy_for(s: &SfSim, strategy: SfStrategy) -> Result<Strategy, SfStatus> {
    let kind = StrategyKind::from(strategy);
    lift(Strategy::new(kind, s.config.policy.clone(), s.heads[strategy as usize].clone()))
}

/// Runs one evaluation frame and returns its outcome handle.
///
/// # Safety
/// `sim` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_run_frame(sim: *const SfSim, strategy: SfStrategy, frame: u64, out: *mut *mut SfFrame) -> SfStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let s = deref(sim, "sim")?;
        let strat = strategy_for(s, strategy)?;
        let ctx = lift(sim::eval_context(&s.config, frame as usize))?;
        let outcome = lift(sim::run_frame(&ctx, &strat, &s.config))?;
        *out = Box::into_raw(Box::new(SfFrame(outcome)));
        Ok(())
    })
}

/// Evaluates `strategy` over every frame of the scenario.
///
/// # Safety
/// `sim` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_sim_evaluate(sim: *const SfSim, strategy: SfStrategy, threads: u32, out: *mut SfSummary) -> SfStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        let out = deref_mut(out, "out")?;
        let strat = strategy_for(s, strategy)?;
        let label = StrategyKind::from(strategy).as_str().to_string();
        let summary = lift(sim::run_suite(&s.config, &[(label, strat)], threads as usize))?.remove(0);
        *out = SfSummary {
            map: summary.eval.map,
            nds: summary.eval.nds,
            payload_bytes: summary.payload_bytes,
            preround_bytes: summary.preround_bytes,
            frames: summary.eval.frames as u64,
            predictions: summary.eval.predictions as u64,
            ground_truth: summary.eval.ground_truth as u64,
        };
        Ok(())
    })
}

/// # Safety
/// `frame` must come from this library and not be used afterwards; null is ignored.
#[no_mangle]
pub unsafe extern "C" fn sf_frame_free(frame: *mut SfFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// # Safety
/// `frame` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sf_frame_prediction_count(frame: *const SfFrame) -> u64 {
    frame.as_ref().map_or(0, |f| f.0.eval.preds.len() as u64)
}

/// # Safety
/// `frame` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sf_frame_ground_truth_count(frame: *const SfFrame) -> u64 {
    frame.as_ref().map_or(0, |f| f.0.eval.gts.len() as u64)
}

/// Sum of payload bytes delivered to the ego in this frame.
///
/// # Safety
/// `frame` must be a valid handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sf_frame_payload_bytes(frame: *const SfFrame) -> u64 {
    frame.as_ref().map_or(0, |f| f.0.payload_bytes as u64)
}

/// Reads prediction `index` (ego frame).
///
/// # Safety
/// `frame` must be valid; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sf_frame_prediction(frame: *const SfFrame, index: u64, out: *mut SfBox) -> SfStatus {
    guard(|| {
        let f = &deref(frame, "frame")?.0;
        let b = f
            .eval
            .preds
            .get(index as usize)
            .ok_or_else(|| fail(SfStatus::InvalidArgument, format!("prediction index {index} out of range")))?;
        *deref_mut(out, "out")? = (*b).into();
        Ok(())
    })
}
