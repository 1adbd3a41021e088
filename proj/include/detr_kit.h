/* Copyright 2026 The detr-kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef DETR_KIT_H_
#define DETR_KIT_H_

/* C interface to the detr-kit library. Every function returns a status code;
 * on failure detr_last_error() describes the problem. Handles are opaque and
 * must be released with their matching *_free function. Strings returned by
 * accessors stay valid until the owning handle is freed. The last-error
 * message is per thread. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define DETR_API __declspec(dllexport)
#else
#define DETR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum detr_status {
  DETR_OK = 0,
  DETR_ERR_ARGUMENT = 1,   /* NULL pointer or out-of-range argument */
  DETR_ERR_DIMENSION = 2,  /* tensor shape mismatch */
  DETR_ERR_CONTRACT = 3,   /* precondition violated */
  DETR_ERR_VALIDATION = 4, /* malformed input data or config */
  DETR_ERR_IO = 5,
  DETR_ERR_NUMERIC = 6,    /* non-finite loss or gradient */
  DETR_ERR_INTERNAL = 7
} detr_status;

typedef struct detr_model detr_model;
typedef struct detr_report detr_report;

DETR_API const char* detr_version(void);
/* Message of the last failing call on this thread; "" when none. */
DETR_API const char* detr_last_error(void);
DETR_API const char* detr_status_name(detr_status status);

/* Caps worker threads; n <= 0 restores the default (DETR_KIT_THREADS or 1). */
DETR_API detr_status detr_set_threads(int n);

/* ---- reports ------------------------------------------------------------ */

/* Machine-readable result (JSON). */
DETR_API const char* detr_report_json(const detr_report* report);
/* Human-readable summary. */
DETR_API const char* detr_report_text(const detr_report* report);
DETR_API size_t detr_report_warning_count(const detr_report* report);
/* Empty string when index is out of range. */
DETR_API const char* detr_report_warning(const detr_report* report, size_t index);
/* 1 when every check or criterion in the report passed. */
DETR_API int detr_report_passed(const detr_report* report);
DETR_API void detr_report_free(detr_report* report);

/* ---- annotation --------------------------------------------------------- */

/* Writes <out_dir>/synth_*.ppm and <out_dir>/annotations.json. */
DETR_API detr_status detr_synth(uint64_t seed, int64_t count, int64_t width, int64_t height, int64_t classes,
                                const char* out_dir);

/* Keypoint files (*.pts) expanded to box_w x box_h boxes; images_dir may be
 * NULL (keypoints_dir is searched). Writes COCO JSON to out_json. The report
 * (optional, may be NULL) carries the dataset and per-file warnings. */
DETR_API detr_status detr_annotate_nostril(const char* keypoints_dir, const char* images_dir, double box_w,
                                           double box_h, const char* out_json, detr_report** report);

typedef enum detr_mask_mode { DETR_MASK_GLOBAL = 0, DETR_MASK_COMPONENT = 1 } detr_mask_mode;

DETR_API detr_status detr_annotate_glottis(const char* masks_dir, detr_mask_mode mode, const char* out_json,
                                           detr_report** report);

/* ---- training ----------------------------------------------------------- */

/* Values that replace fields of the run config when set. */
typedef struct detr_train_overrides {
  int has_seed;
  uint64_t seed;
  int64_t epochs;      /* < 0: keep */
  double lr_backbone;  /* <= 0: keep */
  double lr_detector;  /* <= 0: keep */
  const char* output_dir; /* NULL: keep */
} detr_train_overrides;

DETR_API void detr_train_overrides_init(detr_train_overrides* overrides);

/* config_json is the run config text (not a path). The report JSON holds
 * the best epoch and one record per epoch. */
DETR_API detr_status detr_train(const char* config_json, const detr_train_overrides* overrides,
                                detr_report** report);

/* ---- evaluation --------------------------------------------------------- */

/* Scores a COCO detection-results file against ground truth. */
DETR_API detr_status detr_evaluate_detections(const char* annotations_json, const char* detections_json,
                                              detr_report** report);

DETR_API detr_status detr_model_load(const char* checkpoint_path, detr_model** model);
DETR_API void detr_model_free(detr_model* model);
/* Model config as JSON; owned by the model. */
DETR_API const char* detr_model_config(const detr_model* model);
DETR_API int64_t detr_model_num_parameters(const detr_model* model);

/* Runs the model over every image of a COCO dataset; images_dir NULL means
 * the annotation file's directory. detections_out (may be NULL) receives the
 * COCO results file. */
DETR_API detr_status detr_model_evaluate(const detr_model* model, const char* annotations_json,
                                         const char* images_dir, const char* detections_out, detr_report** report);

/* Predictions for one 8-bit RGB image (row-major, 3 bytes per pixel) whose
 * size matches the model. Writes up to `capacity` rows of
 * (x, y, w, h, score, label) into out and the row count into *count. */
DETR_API detr_status detr_model_predict(const detr_model* model, const uint8_t* rgb, int64_t width, int64_t height,
                                        double* out, size_t capacity, size_t* count);

/* ---- verification ------------------------------------------------------- */

DETR_API detr_status detr_selfcheck(uint64_t seed, detr_report** report);

/* Test hook: corrupts the bilinear sampler while enabled. */
DETR_API void detr_testing_set_bilinear_fault(int enabled);

#ifdef __cplusplus
}
#endif

#endif /* DETR_KIT_H_ */
