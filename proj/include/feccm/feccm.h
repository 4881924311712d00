/* Copyright 2026 The feccm Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/* C interface of libfeccm. Every call returns a status code; on failure the
 * message is available from feccm_last_error() on the same thread. Strings
 * returned through char** are owned by the caller and released with
 * feccm_string_free. */

#ifndef FECCM_FECCM_H_
#define FECCM_FECCM_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define FECCM_API __attribute__((visibility("default")))
#else
#define FECCM_API
#endif

typedef enum {
  FECCM_OK = 0,
  FECCM_E_PARSE = 1,
  FECCM_E_SCHEMA = 2,
  FECCM_E_LOOKUP = 3,
  FECCM_E_CONTRACT = 4,
  FECCM_E_DEGENERATE_SPLIT = 5,
  FECCM_E_EMPTY_FIT = 6,
  FECCM_E_NUMERIC = 7,
  FECCM_E_CAPABILITY = 8,
  FECCM_E_EMPTY_EVAL = 9,
  FECCM_E_CONFIG = 10,
  FECCM_E_IO = 11,
  FECCM_E_INTERNAL = 99
} feccm_status;

typedef struct feccm_dataset feccm_dataset;
typedef struct feccm_model feccm_model;

FECCM_API const char* feccm_version(void);
FECCM_API const char* feccm_status_name(int status);
/* Message of the last failed call on this thread ("" after success). */
FECCM_API const char* feccm_last_error(void);
FECCM_API void feccm_string_free(char* s);

/* Datasets. specs is a JSON array of task specs; csv follows the dataset
 * file format (header id,f<t>_<k>...,y<t>...). */
FECCM_API int feccm_dataset_load(const char* specs_json_path, const char* csv_path,
                                 feccm_dataset** out);
FECCM_API int feccm_dataset_parse(const char* specs_json, const char* csv, feccm_dataset** out);
FECCM_API int feccm_dataset_save(const feccm_dataset* data, const char* csv_path);
FECCM_API int feccm_dataset_to_csv(const feccm_dataset* data, char** out);
FECCM_API int feccm_dataset_specs_json(const feccm_dataset* data, char** out);
/* num_labels receives one count per task when non-null (num_tasks entries). */
FECCM_API int feccm_dataset_info(const feccm_dataset* data, size_t* num_samples, int* num_tasks);
FECCM_API int feccm_dataset_labeled(const feccm_dataset* data, int task, size_t* count);
FECCM_API void feccm_dataset_free(feccm_dataset* data);

/* Synthetic train/test pair from a generator JSON document; seed overrides
 * the document's seed. */
FECCM_API int feccm_synth(const char* generator_json, uint64_t seed, feccm_dataset** train,
                          feccm_dataset** test);

/* Trains `method` (base, all_features_direct, ccm, feccm, feccm_unified,
 * feccm_one_goal, feccm_target_specific). holdout, options_json and
 * trace_csv may be NULL. The trace is written without wall-clock time. */
FECCM_API int feccm_train(const char* method, const feccm_dataset* train,
                          const feccm_dataset* holdout, const char* options_json,
                          feccm_model** out, char** trace_csv);

FECCM_API int feccm_model_load(const char* path, feccm_model** out);
FECCM_API int feccm_model_parse(const char* json, feccm_model** out);
FECCM_API int feccm_model_save(const feccm_model* model, const char* path);
FECCM_API int feccm_model_to_json(const feccm_model* model, char** out);
FECCM_API void feccm_model_free(feccm_model* model);

/* Predictions as CSV: id, then per task y<t>_pred and scores s<t>_<k>. */
FECCM_API int feccm_predict(const feccm_model* model, const feccm_dataset* data, char** csv);
/* options_json (nullable): {"bootstrap", "seed", "threads", "method"}. */
FECCM_API int feccm_evaluate(const feccm_model* model, const feccm_dataset* data,
                             const char* options_json, char** report_json);

/* Runs an experiment config file and writes its tables into out_dir. */
FECCM_API int feccm_experiment(const char* config_path, const char* out_dir);

/* Cross-validated pi for `target`; options as for feccm_train. Result:
 * {"pi": [...], "grid": [[...]], "scores": [...]}. */
FECCM_API int feccm_select_pi(const feccm_dataset* train, int target, const char* options_json,
                              char** result_json);

#ifdef __cplusplus
}
#endif

#endif /* FECCM_FECCM_H_ */
