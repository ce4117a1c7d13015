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

#include "hierfuse/hierfuse.h"

#include <exception>
#include <new>
#include <string>

#include "hierfuse/error.hpp"
#include "hierfuse/experiment.hpp"
#include "hierfuse/pipeline.hpp"

struct hf_experiment {
  hierfuse::Experiment experiment;
  std::string config_json;
};

struct hf_result {
  hierfuse::CommandOutput output;
  std::string table_text;
  std::string path_text;
};

struct hf_checkpoint {
  hierfuse::Checkpoint checkpoint;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_last_code;

hf_status record(hf_status status, std::string code, std::string message) {
  g_last_code = std::move(code);
  g_last_error = std::move(message);
  return status;
}

/// Runs `body`, translating exceptions into a status and the thread's last error.
template <typename F>
hf_status guarded(F&& body) {
  g_last_error.clear();
  g_last_code.clear();
  try {
    return body();
  } catch (const hierfuse::Error& e) {
    return record(static_cast<hf_status>(e.error_class()), std::string(hierfuse::error_code_name(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return record(HF_ERR_DATA, "out of memory", "out of memory");
  } catch (const std::exception& e) {
    return record(HF_ERR_DATA, "internal error", e.what());
  }
}

hf_status check_out(const void* out) {
  if (out == nullptr) hierfuse::fail(hierfuse::ErrorCode::kUsage, "output pointer is NULL");
  return HF_OK;
}

hf_status emit(hierfuse::CommandOutput output, hf_result** out) {
  auto* r = new hf_result{std::move(output), {}, {}};
  r->table_text = r->output.table.to_text();
  r->path_text = r->output.result_path.string();
  *out = r;
  return HF_OK;
}

hierfuse::Experiment& exp_of(hf_experiment* e) {
  if (e == nullptr) hierfuse::fail(hierfuse::ErrorCode::kUsage, "experiment handle is NULL");
  return e->experiment;
}

std::optional<hierfuse::Modality> optional_modality(const char* m) {
  if (m == nullptr) return std::nullopt;
  return hierfuse::parse_modality(m);
}

std::string str_or_empty(const char* s) { return s == nullptr ? std::string() : std::string(s); }

}  // namespace

extern "C" {

const char* hf_version(void) { return HIERFUSE_VERSION_STRING; }
const char* hf_last_error(void) { return g_last_error.c_str(); }
const char* hf_last_error_code(void) { return g_last_code.c_str(); }

hf_status hf_experiment_open(const char* config_path, const char* overrides_json, hf_experiment** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    const std::string overrides = str_or_empty(overrides_json);
    hierfuse::ExperimentConfig cfg =
        config_path != nullptr ? hierfuse::load_experiment_config(config_path, overrides)
                               : hierfuse::parse_experiment_config("", std::filesystem::current_path(), overrides);
    std::string json = cfg.to_json();
    *out = new hf_experiment{hierfuse::Experiment(std::move(cfg)), std::move(json)};
    return HF_OK;
  });
}

void hf_experiment_free(hf_experiment* experiment) { delete experiment; }

const char* hf_experiment_config(const hf_experiment* experiment) {
  return experiment == nullptr ? "" : experiment->config_json.c_str();
}

hf_status hf_train(hf_experiment* experiment, const char* stage, const char* modality, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (stage == nullptr) hierfuse::fail(hierfuse::ErrorCode::kUsage, "stage is required");
    return emit(exp_of(experiment).train(hierfuse::parse_schedule(stage), optional_modality(modality)), out);
  });
}

hf_status hf_extract(hf_experiment* experiment, const char* stage, const char* modality, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (stage == nullptr) hierfuse::fail(hierfuse::ErrorCode::kUsage, "stage is required");
    return emit(exp_of(experiment).extract(hierfuse::parse_schedule(stage), optional_modality(modality)), out);
  });
}

hf_status hf_evaluate(hf_experiment* experiment, int with_ensembling, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    return emit(exp_of(experiment).evaluate(with_ensembling != 0), out);
  });
}

hf_status hf_sweep(hf_experiment* experiment, const char* param, const double* grid, size_t grid_size,
                   hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (param == nullptr || (grid == nullptr && grid_size > 0))
      hierfuse::fail(hierfuse::ErrorCode::kUsage, "sweep needs a parameter and a grid");
    const std::vector<double> values(grid, grid + grid_size);
    return emit(exp_of(experiment).sweep(param, values), out);
  });
}

hf_status hf_ablate_self_attention(hf_experiment* experiment, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    return emit(exp_of(experiment).ablate_self_attention(), out);
  });
}

hf_status hf_run_all(hf_experiment* experiment, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    return emit(exp_of(experiment).run_all(), out);
  });
}

hf_status hf_synth(const char* spec_json, const char* out_dir, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (out_dir == nullptr) hierfuse::fail(hierfuse::ErrorCode::kUsage, "output directory is required");
    return emit(hierfuse::synthesize(hierfuse::parse_synthetic_spec(str_or_empty(spec_json)), out_dir), out);
  });
}

hf_status hf_gradcheck(uint64_t seed, const char* out_dir, hf_result** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    std::optional<std::filesystem::path> dir;
    if (out_dir != nullptr) dir = out_dir;
    hierfuse::CommandOutput result = hierfuse::gradcheck(seed, dir);
    const std::size_t failures = result.failures;
    emit(std::move(result), out);
    if (failures > 0)
      return record(HF_ERR_NUMERIC, std::string(hierfuse::error_code_name(hierfuse::ErrorCode::kGradientCheck)),
                    std::to_string(failures) + " gradient check(s) failed");
    return HF_OK;
  });
}

const char* hf_result_summary(const hf_result* result) { return result == nullptr ? "" : result->output.summary.c_str(); }
const char* hf_result_table(const hf_result* result) { return result == nullptr ? "" : result->table_text.c_str(); }
const char* hf_result_path(const hf_result* result) { return result == nullptr ? "" : result->path_text.c_str(); }
size_t hf_result_rows(const hf_result* result) { return result == nullptr ? 0 : result->output.table.rows.size(); }
void hf_result_free(hf_result* result) { delete result; }

hf_status hf_checkpoint_load(const char* path, hf_checkpoint** out) {
  return guarded([&] {
    check_out(out);
    *out = nullptr;
    if (path == nullptr) hierfuse::fail(hierfuse::ErrorCode::kUsage, "checkpoint path is NULL");
    *out = new hf_checkpoint{hierfuse::load_checkpoint(path)};
    return HF_OK;
  });
}

int hf_checkpoint_stage(const hf_checkpoint* c) { return c == nullptr ? 0 : c->checkpoint.stage; }
const char* hf_checkpoint_modality(const hf_checkpoint* c) {
  return c == nullptr ? "" : hierfuse::modality_name(c->checkpoint.modality).data();
}
size_t hf_checkpoint_scalar_count(const hf_checkpoint* c) { return c == nullptr ? 0 : c->checkpoint.scalar_count(); }
uint64_t hf_checkpoint_hash(const hf_checkpoint* c) { return c == nullptr ? 0 : c->checkpoint.content_hash(); }
void hf_checkpoint_free(hf_checkpoint* checkpoint) { delete checkpoint; }

}  // extern "C"
