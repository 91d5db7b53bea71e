#ifndef ROADLIFT_H
#define ROADLIFT_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RoadliftStatus {
  ROADLIFT_STATUS_OK = 0,
  ROADLIFT_STATUS_NULL_POINTER = 1,
  ROADLIFT_STATUS_INVALID_UTF8 = 2,
  ROADLIFT_STATUS_PARSE = 3,
  ROADLIFT_STATUS_VALIDATION = 4,
  ROADLIFT_STATUS_CONFIG = 5,
  ROADLIFT_STATUS_NO_VALID_TRACKS = 6,
  ROADLIFT_STATUS_INTERNAL = 7,
} RoadliftStatus;

typedef enum RoadliftClass {
  ROADLIFT_CLASS_GUIDEBOARD = 0,
  ROADLIFT_CLASS_CIRCULAR_SIGN = 1,
  ROADLIFT_CLASS_TRAFFIC_LIGHT = 2,
  ROADLIFT_CLASS_TRAFFIC_CONE = 3,
} RoadliftClass;

typedef enum RoadliftShapeKind {
  ROADLIFT_SHAPE_KIND_RECT = 0,
  ROADLIFT_SHAPE_KIND_CUBOID = 1,
  ROADLIFT_SHAPE_KIND_CIRCLE = 2,
} RoadliftShapeKind;

/**
 * Opaque list of annotations.
 */
typedef struct RoadliftAnnotations RoadliftAnnotations;

/**
 * Opaque scene handle.
 */
typedef struct RoadliftScene RoadliftScene;

/**
 * Flat view of one annotation. `params` holds `x, y, z, yaw` followed by
 * the sizes of the shape; only the first `n_params` entries are set.
 */
typedef struct RoadliftAnnotation {
  uint64_t annotation_id;
  uint64_t track_id;
  enum RoadliftClass class_;
  enum RoadliftShapeKind kind;
  double params[7];
  uint32_t n_params;
  double mean_reproj_error;
  uint64_t n_observations_used;
} RoadliftAnnotation;

typedef struct RoadliftEvalResult {
  double precision;
  double recall;
  double mean_error;
  uint64_t n_matched;
  uint64_t n_pred;
  uint64_t n_ref;
} RoadliftEvalResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a scene document.
 *
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum RoadliftStatus roadlift_scene_from_json(const uint8_t *data,
                                             uintptr_t len,
                                             struct RoadliftScene **out);

/**
 * Generates a synthetic scene with ground truth. `config_toml` may be null;
 * `seed` replaces the configured seed.
 *
 * # Safety
 * `config_toml` must be null or a NUL-terminated string; `out` must be writable.
 */
enum RoadliftStatus roadlift_synth_generate(const char *config_toml,
                                            uint64_t seed,
                                            struct RoadliftScene **out);

/**
 * Serializes a scene as canonical JSON. Free the string with
 * [`roadlift_string_free`].
 *
 * # Safety
 * `scene` must come from this library; `out` must be writable.
 */
enum RoadliftStatus roadlift_scene_to_json(const struct RoadliftScene *scene, char **out);

/**
 * # Safety
 * `scene` must be null or come from this library, and not be used afterwards.
 */
void roadlift_scene_free(struct RoadliftScene *scene);

/**
 * Runs the full annotation pipeline. `threads == 0` uses all cores.
 *
 * # Safety
 * `scene` must come from this library, `config_toml` must be null or a
 * NUL-terminated string and `out` must be writable.
 */
enum RoadliftStatus roadlift_annotate(const struct RoadliftScene *scene,
                                      const char *config_toml,
                                      uint32_t threads,
                                      struct RoadliftAnnotations **out);

/**
 * Number of annotations in the list, 0 for null.
 *
 * # Safety
 * `annotations` must be null or come from this library.
 */
uintptr_t roadlift_annotations_count(const struct RoadliftAnnotations *annotations);

/**
 * # Safety
 * `annotations` must come from this library; `out` must be writable.
 */
enum RoadliftStatus roadlift_annotations_get(const struct RoadliftAnnotations *annotations,
                                             uintptr_t index,
                                             struct RoadliftAnnotation *out);

/**
 * # Safety
 * `annotations` must come from this library; `out` must be writable.
 */
enum RoadliftStatus roadlift_annotations_to_json(const struct RoadliftAnnotations *annotations,
                                                 char **out);

/**
 * # Safety
 * `data` must point to `len` readable bytes and `out` must be writable.
 */
enum RoadliftStatus roadlift_annotations_from_json(const uint8_t *data,
                                                   uintptr_t len,
                                                   struct RoadliftAnnotations **out);

/**
 * # Safety
 * `annotations` must be null or come from this library, and not be used afterwards.
 */
void roadlift_annotations_free(struct RoadliftAnnotations *annotations);

/**
 * Scores `pred` against the ground truth attached to `scene` with the
 * default evaluation settings.
 *
 * # Safety
 * Handles must come from this library; `out` must be writable.
 */
enum RoadliftStatus roadlift_eval_3d(const struct RoadliftAnnotations *pred,
                                     const struct RoadliftScene *scene,
                                     struct RoadliftEvalResult *out);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void roadlift_string_free(char *s);

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next call on the same thread.
 */
const char *roadlift_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROADLIFT_H */
