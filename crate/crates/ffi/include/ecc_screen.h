#ifndef ECC_SCREEN_H
#define ECC_SCREEN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EccStatus {
  ECC_STATUS_OK = 0,
  ECC_STATUS_NULL_POINTER = 1,
  ECC_STATUS_INVALID_UTF8 = 2,
  ECC_STATUS_INVALID_JSON = 3,
  ECC_STATUS_INVALID_ARGUMENT = 4,
  // A questionnaire answer set is missing required questions.
  ECC_STATUS_INCOMPLETE_RESPONSE = 5,
  // The output buffer was too small; the required count was still written.
  ECC_STATUS_BUFFER_TOO_SMALL = 6,
  ECC_STATUS_PANIC = 7,
} EccStatus;

typedef enum EccGateVerdict {
  ECC_GATE_VERDICT_PASS = 0,
  ECC_GATE_VERDICT_REJECT_TOO_SMALL = 1,
  ECC_GATE_VERDICT_REJECT_TILTED = 2,
  ECC_GATE_VERDICT_REJECT_NO_MOUTH = 3,
} EccGateVerdict;

typedef enum EccGroup {
  ECC_GROUP_NORMAL = 0,
  ECC_GROUP_LEVEL1 = 1,
  ECC_GROUP_LEVEL2 = 2,
  ECC_GROUP_OTHER = 3,
} EccGroup;

// Values for [`EccLandmark::role`].
typedef enum EccLandmarkRole {
  ECC_LANDMARK_ROLE_LEFT_MOUTH_CORNER = 0,
  ECC_LANDMARK_ROLE_RIGHT_MOUTH_CORNER = 1,
  ECC_LANDMARK_ROLE_OUTER_LIP = 2,
  ECC_LANDMARK_ROLE_INNER_LIP = 3,
  ECC_LANDMARK_ROLE_OTHER = 4,
} EccLandmarkRole;

// Values for the `layout` argument of [`ecc_postprocessor_run`].
typedef enum EccClassLayout {
  // Background + normal, level1, level2, other.
  ECC_CLASS_LAYOUT_GROUPED = 0,
  // Background + the eight ICDAS-level classes.
  ECC_CLASS_LAYOUT_ICDAS = 1,
} EccClassLayout;

// Anchor layout and thresholds, fixed at creation.
typedef struct EccPostprocessor EccPostprocessor;

// Normalized box, all coordinates in `[0, 1]`.
typedef struct EccBox {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
} EccBox;

typedef struct EccGateConfig {
  uint32_t min_crop_width;
  uint32_t min_crop_height;
  double max_tilt_degrees;
  double margin_fraction;
} EccGateConfig;

// One face landmark, normalized to the frame. `role` takes an
// `EccLandmarkRole` value.
typedef struct EccLandmark {
  uint32_t role;
  double x;
  double y;
} EccLandmark;

typedef struct EccGateResult {
  enum EccGateVerdict verdict;
  double tilt_degrees;
  // False when no mouth was found; `mouth_box` and the crop size are then zero.
  bool has_mouth_box;
  struct EccBox mouth_box;
  uint32_t crop_width;
  uint32_t crop_height;
} EccGateResult;

typedef struct EccDetection {
  struct EccBox bbox;
  enum EccGroup group;
  double score;
} EccDetection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ecc_version(void);

// Message for the most recent failure on this thread, or NULL after a
// successful call. The pointer stays valid until the next library call on
// the same thread; do not free it.
const char *ecc_last_error_message(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not have been freed already.
void ecc_string_free(char *s);

// Intersection over union of two normalized boxes.
//
// # Safety
// Pointers must be valid or NULL.
enum EccStatus ecc_iou(const struct EccBox *a, const struct EccBox *b, double *out);

// Default gate: 224x224 minimum crop, 5 degree tilt limit, 10% margin.
struct EccGateConfig ecc_gate_config_default(void);

// Gates one frame from its landmarks. `landmarks` may be NULL with
// `count == 0`, meaning no face was detected; `config` may be NULL for the
// defaults.
//
// # Safety
// `landmarks` must point to `count` readable elements; other pointers must
// be valid or NULL.
enum EccStatus ecc_gate_evaluate(const struct EccLandmark *landmarks,
                                 size_t count,
                                 uint32_t image_width,
                                 uint32_t image_height,
                                 const struct EccGateConfig *config,
                                 struct EccGateResult *out);

// Creates a post-processor. `config_json` may be NULL for the default
// 4200-anchor layout; otherwise `{"anchors": {...}, "postprocess": {...}}`
// with either key optional.
//
// # Safety
// `config_json` must be NULL or NUL-terminated; `out` must be writable.
enum EccStatus ecc_postprocessor_new(const char *config_json, struct EccPostprocessor **out);

// Number of anchors the model head must produce; 0 for NULL.
//
// # Safety
// `handle` must be NULL or a live handle.
size_t ecc_postprocessor_anchor_count(const struct EccPostprocessor *handle);

// Decodes, thresholds and suppresses one frame of head output.
//
// `logits` holds `anchor_count * classes` values (classes = 5 for
// `ECC_CLASS_LAYOUT_GROUPED`, 9 for `ECC_CLASS_LAYOUT_ICDAS`), anchor-major;
// `offsets` holds `anchor_count * 4` values. Up to `capacity` detections
// are written to `out` by descending score and `*out_count` receives the
// total; if that exceeds `capacity` the call returns
// `ECC_STATUS_BUFFER_TOO_SMALL`.
//
// # Safety
// Array pointers must cover their stated lengths; `out` must have room for
// `capacity` elements.
enum EccStatus ecc_postprocessor_run(const struct EccPostprocessor *handle,
                                     uint32_t layout,
                                     const float *logits,
                                     size_t logits_len,
                                     const float *offsets,
                                     size_t offsets_len,
                                     struct EccDetection *out,
                                     size_t capacity,
                                     size_t *out_count);

// Releases a post-processor. NULL is ignored.
//
// # Safety
// `handle` must come from [`ecc_postprocessor_new`] and not be used again.
void ecc_postprocessor_free(struct EccPostprocessor *handle);

// The built-in caregiver questionnaire as JSON.
//
// # Safety
// `out_json` must be writable.
enum EccStatus ecc_questionnaire_form_json(char **out_json);

// Fuses detections with optional questionnaire answers into a risk report.
//
// `detections_json` is an array of `{x_min, y_min, x_max, y_max, group,
// score}`; `answers_json` is NULL or `{"answers": {question_id: option_id}}`
// for the built-in form. The report is written to `*out_json`.
//
// # Safety
// Strings must be NULL-or-NUL-terminated as documented; `out_json` writable.
enum EccStatus ecc_assess_json(const char *detections_json,
                               const char *answers_json,
                               char **out_json);

// Renders a report from [`ecc_assess_json`] as plain text.
//
// # Safety
// `report_json` must be NUL-terminated; `out_text` writable.
enum EccStatus ecc_render_report(const char *report_json, char **out_text);

// COCO metrics for an annotation file and a detection file, both in the
// library's `{"images": [...]}` formats. Returns the evaluation report JSON.
//
// # Safety
// Strings must be NUL-terminated; `out_json` writable.
enum EccStatus ecc_evaluate_json(const char *annotations_json,
                                 const char *detections_json,
                                 bool exclude_other,
                                 char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ECC_SCREEN_H */
