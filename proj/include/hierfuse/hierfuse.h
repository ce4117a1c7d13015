// Copyright 2026 The hierfuse Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/* C interface to the hierfuse library.
 *
 * Every fallible call returns an hf_status. On failure the message and the
 * error code name of the most recent failure on the calling thread are
 * available from hf_last_error() and hf_last_error_code(); output handles
 * are left NULL. Handles are opaque and owned by the caller, who releases
 * them with the matching *_free function. Strings returned by accessors stay
 * valid until the owning handle is freed.
 */
#ifndef HIERFUSE_H_
#define HIERFUSE_H_

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(__GNUC__)
#define HF_API __attribute__((visibility("default")))
#else
#define HF_API
#endif

/* Status classes; the command-line tool uses them as exit codes. */
typedef enum hf_status {
  HF_OK = 0,
  HF_ERR_USAGE = 1,   /* invalid arguments or configuration */
  HF_ERR_DATA = 2,    /* data contract violation: formats, files, shapes */
  HF_ERR_NUMERIC = 3  /* divergence, non-finite values, failed gradient checks */
} hf_status;

typedef struct hf_experiment hf_experiment;
typedef struct hf_result hf_result;
typedef struct hf_checkpoint hf_checkpoint;

HF_API const char* hf_version(void);
HF_API const char* hf_last_error(void);
HF_API const char* hf_last_error_code(void);

/* Experiments. `config_path` may be NULL, in which case every setting comes
 * from `overrides_json`; `overrides_json` may be NULL. Overrides are merged
 * over the file and win. */
HF_API hf_status hf_experiment_open(const char* config_path, const char* overrides_json, hf_experiment** out);
HF_API void hf_experiment_free(hf_experiment* experiment);
/* Canonical JSON of the validated configuration. */
HF_API const char* hf_experiment_config(const hf_experiment* experiment);

/* `stage` is "1", "2", "3" or "joint23"; `modality` is "audio", "text",
 * "fused" or NULL for every modality of the stage. */
HF_API hf_status hf_train(hf_experiment* experiment, const char* stage, const char* modality, hf_result** out);
HF_API hf_status hf_extract(hf_experiment* experiment, const char* stage, const char* modality, hf_result** out);
HF_API hf_status hf_evaluate(hf_experiment* experiment, int with_ensembling, hf_result** out);
/* `param` is "beta", "tau" or "alpha". */
HF_API hf_status hf_sweep(hf_experiment* experiment, const char* param, const double* grid, size_t grid_size,
                          hf_result** out);
HF_API hf_status hf_ablate_self_attention(hf_experiment* experiment, hf_result** out);
HF_API hf_status hf_run_all(hf_experiment* experiment, hf_result** out);

/* Stand-alone commands. `spec_json` may be NULL for the default spec. */
HF_API hf_status hf_synth(const char* spec_json, const char* out_dir, hf_result** out);
/* `out_dir` may be NULL to skip writing result files. When checks fail the
 * result is still returned together with HF_ERR_NUMERIC. */
HF_API hf_status hf_gradcheck(uint64_t seed, const char* out_dir, hf_result** out);

HF_API const char* hf_result_summary(const hf_result* result);
/* The machine-readable result table as tab-separated text. */
HF_API const char* hf_result_table(const hf_result* result);
/* Path of the written result file, or "" when none was written. */
HF_API const char* hf_result_path(const hf_result* result);
HF_API size_t hf_result_rows(const hf_result* result);
HF_API void hf_result_free(hf_result* result);

HF_API hf_status hf_checkpoint_load(const char* path, hf_checkpoint** out);
HF_API int hf_checkpoint_stage(const hf_checkpoint* checkpoint);
HF_API const char* hf_checkpoint_modality(const hf_checkpoint* checkpoint);
HF_API size_t hf_checkpoint_scalar_count(const hf_checkpoint* checkpoint);
HF_API uint64_t hf_checkpoint_hash(const hf_checkpoint* checkpoint);
HF_API void hf_checkpoint_free(hf_checkpoint* checkpoint);

#ifdef __cplusplus
}
#endif

#endif /* HIERFUSE_H_ */
