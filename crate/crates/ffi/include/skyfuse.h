#ifndef SKYFUSE_H
#define SKYFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_ARGUMENT = 2,
  SF_STATUS_INVALID_RIG = 3,
  SF_STATUS_INVALID_GRID = 4,
  SF_STATUS_DIMENSION_MISMATCH = 5,
  SF_STATUS_INVALID_CONFIG = 6,
  SF_STATUS_PLACEMENT = 7,
  SF_STATUS_WIRE = 8,
  SF_STATUS_PARAM_FILE = 9,
  SF_STATUS_DIVERGED = 10,
  SF_STATUS_SCENARIO = 11,
  SF_STATUS_IO = 12,
  SF_STATUS_NO_INTERSECTION = 13,
  SF_STATUS_BUFFER_TOO_SMALL = 14,
  SF_STATUS_PANIC = 15,
} SfStatus;

typedef enum SfStrategy {
  SF_STRATEGY_NO_FUSION = 0,
  SF_STRATEGY_LATE_FUSION = 1,
  SF_STRATEGY_LIF_BASE = 2,
  SF_STRATEGY_LIF_FULL = 3,
} SfStrategy;

/**
 * Opaque per-frame result.
 */
typedef struct SfFrame SfFrame;

/**
 * Opaque detection message.
 */
typedef struct SfMessage SfMessage;

/**
 * Opaque simulator: a scenario plus the heads loaded or trained so far.
 */
typedef struct SfSim SfSim;

/**
 * Pinhole camera. `rotation` is camera-to-world, row-major.
 */
typedef struct SfRig {
  double fx;
  double fy;
  double cx;
  double cy;
  uint32_t image_w;
  uint32_t image_h;
  double rotation[9];
  double translation[3];
} SfRig;

typedef struct SfBox {
  double x;
  double y;
  double z;
  double w;
  double h;
  double l;
  double yaw;
  double score;
} SfBox;

typedef struct SfSummary {
  double map;
  double nds;
  uint64_t payload_bytes;
  uint64_t preround_bytes;
  uint64_t frames;
  uint64_t predictions;
  uint64_t ground_truth;
} SfSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *sf_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sf_version(void);

/**
 * Intersects the ray through pixel `(u, v)` with the plane `z = h`.
 * Writes the world point to `out_xyz[0..3]`.
 *
 * # Safety
 * `rig` must point to a valid `SfRig` and `out_xyz` to three writable doubles.
 */
enum SfStatus sf_pixel_to_ground(const struct SfRig *rig,
                                 double u,
                                 double v,
                                 double h,
                                 double *out_xyz);

/**
 * Projects a world point to pixels. Returns `NoIntersection` when the point
 * is behind the camera.
 *
 * # Safety
 * `rig` must be valid; `out_u` and `out_v` must be writable.
 */
enum SfStatus sf_project(const struct SfRig *rig,
                         double x,
                         double y,
                         double z,
                         double *out_u,
                         double *out_v);

/**
 * `log2(bytes)`; returns 0 and leaves `out` untouched when `bytes == 0`
 * (no transmission), 1 otherwise.
 *
 * # Safety
 * `out` must be writable.
 */
int32_t sf_log2_bytes(uint64_t bytes, double *out);

/**
 * New empty message. Never returns null.
 *
 * # Safety
 * `origin` must point to three doubles or be null (treated as zeros).
 */
struct SfMessage *sf_message_new(uint32_t sender,
                                 uint32_t receiver,
                                 uint64_t timestamp,
                                 const double *origin);

/**
 * # Safety
 * `msg` must come from this library and not be used afterwards; null is ignored.
 */
void sf_message_free(struct SfMessage *msg);

/**
 * # Safety
 * `msg` must be a valid handle.
 */
enum SfStatus sf_message_add_point(struct SfMessage *msg, float x, float y, float score);

/**
 * # Safety
 * `msg` must be a valid handle.
 */
enum SfStatus sf_message_add_box(struct SfMessage *msg, struct SfBox b);

/**
 * # Safety
 * `msg` must be a valid handle.
 */
enum SfStatus sf_message_add_background(struct SfMessage *msg, float x, float y, float certainty);

/**
 * Detection-payload bytes, `12 K + 32 K3`.
 *
 * # Safety
 * `msg` must be a valid handle or null (returns 0).
 */
uint64_t sf_message_detection_bytes(const struct SfMessage *msg);

/**
 * Detection bytes plus background records.
 *
 * # Safety
 * `msg` must be a valid handle or null (returns 0).
 */
uint64_t sf_message_payload_bytes(const struct SfMessage *msg);

/**
 * Writes point, box and background counts.
 *
 * # Safety
 * `msg` must be valid; the out pointers must be writable.
 */
enum SfStatus sf_message_counts(const struct SfMessage *msg,
                                uint32_t *points,
                                uint32_t *boxes,
                                uint32_t *background);

/**
 * Reads box `index` (as carried on the wire, widened to double).
 *
 * # Safety
 * `msg` must be valid; `out` must be writable.
 */
enum SfStatus sf_message_box(const struct SfMessage *msg, uint32_t index, struct SfBox *out);

/**
 * Serializes `msg`. With `buf` null or `cap` too small, only `out_len` is
 * written and `BufferTooSmall` is returned (null `buf` with enough room is
 * still an error).
 *
 * # Safety
 * `msg` must be valid; `buf` must have `cap` writable bytes; `out_len` must be writable.
 */
enum SfStatus sf_message_encode(const struct SfMessage *msg,
                                uint8_t *buf,
                                size_t cap,
                                size_t *out_len);

/**
 * Parses a serialized message into a new handle.
 *
 * # Safety
 * `bytes` must have `len` readable bytes; `out` must be writable.
 */
enum SfStatus sf_message_decode(const uint8_t *bytes, size_t len, struct SfMessage **out);

/**
 * Creates a simulator from scenario TOML text (an empty string gives defaults).
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum SfStatus sf_sim_from_toml(const char *toml, struct SfSim **out);

/**
 * # Safety
 * `sim` must come from this library and not be used afterwards; null is ignored.
 */
void sf_sim_free(struct SfSim *sim);

/**
 * Number of evaluation frames in the scenario.
 *
 * # Safety
 * `sim` must be a valid handle or null (returns 0).
 */
uint64_t sf_sim_frame_count(const struct SfSim *sim);

/**
 * Trains the head of `strategy` on the scenario's training frames.
 *
 * # Safety
 * `sim` must be a valid handle.
 */
enum SfStatus sf_sim_train(struct SfSim *sim, enum SfStrategy strategy, uint32_t threads);

/**
 * Loads head parameters for `strategy` from a file.
 *
 * # Safety
 * `sim` must be valid; `path` must be a NUL-terminated string.
 */
enum SfStatus sf_sim_load_head(struct SfSim *sim, enum SfStrategy strategy, const char *path);

/**
 * Saves the head of `strategy` to a file.
 *
 * # Safety
 * `sim` must be valid; `path` must be a NUL-terminated string.
 */
enum SfStatus sf_sim_save_head(const struct SfSim *sim, enum SfStrategy strategy, const char *path);

/**
 * Runs one evaluation frame and returns its outcome handle.
 *
 * # Safety
 * `sim` must be valid; `out` must be writable.
 */
enum SfStatus sf_sim_run_frame(const struct SfSim *sim,
                               enum SfStrategy strategy,
                               uint64_t frame,
                               struct SfFrame **out);

/**
 * Evaluates `strategy` over every frame of the scenario.
 *
 * # Safety
 * `sim` must be valid; `out` must be writable.
 */
enum SfStatus sf_sim_evaluate(const struct SfSim *sim,
                              enum SfStrategy strategy,
                              uint32_t threads,
                              struct SfSummary *out);

/**
 * # Safety
 * `frame` must come from this library and not be used afterwards; null is ignored.
 */
void sf_frame_free(struct SfFrame *frame);

/**
 * # Safety
 * `frame` must be a valid handle or null (returns 0).
 */
uint64_t sf_frame_prediction_count(const struct SfFrame *frame);

/**
 * # Safety
 * `frame` must be a valid handle or null (returns 0).
 */
uint64_t sf_frame_ground_truth_count(const struct SfFrame *frame);

/**
 * Sum of payload bytes delivered to the ego in this frame.
 *
 * # Safety
 * `frame` must be a valid handle or null (returns 0).
 */
uint64_t sf_frame_payload_bytes(const struct SfFrame *frame);

/**
 * Reads prediction `index` (ego frame).
 *
 * # Safety
 * `frame` must be valid; `out` must be writable.
 */
enum SfStatus sf_frame_prediction(const struct SfFrame *frame, uint64_t index, struct SfBox *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SKYFUSE_H */
