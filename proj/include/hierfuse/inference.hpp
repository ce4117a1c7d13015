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

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hierfuse/tensor.hpp"

namespace hierfuse {

/// Prediction sources, in file order: stage-I audio/text, stage-II
/// audio/text, stage-III fused.
enum class StageKey { kA1, kT1, kA2, kT2, kC };
inline constexpr std::array<StageKey, 5> kAllStageKeys = {StageKey::kA1, StageKey::kT1, StageKey::kA2, StageKey::kT2,
                                                         StageKey::kC};

std::string_view stage_key_name(StageKey k);
StageKey parse_stage_key(std::string_view name);

/// Rows must be non-negative and sum to 1 within `tol`.
void require_distributions(const Tensor& probs, const std::string& what, double tol = 1e-6);

/// alpha * p2 + (1 - alpha) * p1.
Tensor ensemble_stage2(const Tensor& p2, const Tensor& p1, double alpha);

struct EnsembleWeights {
  double alpha_a_12 = 1.0;
  double alpha_t_12 = 1.0;
  double alpha_c = 1.0;
  double alpha_a_23 = 0.0;
  double alpha_t_23 = 0.0;

  /// Stage-2 weights in [0, 1]; stage-3 triple non-negative and summing to 1.
  void validate() const;
};

/// alpha_c * p_c + alpha_a * y_a2 + alpha_t * y_t2.
Tensor ensemble_stage3(const Tensor& p_c, const Tensor& y_a2, const Tensor& y_t2, const EnsembleWeights& w);

/// Row argmax; ties resolve to the lowest class index.
std::vector<int> argmax_rows(const Tensor& probs);

struct ConfusionMatrix {
  std::size_t num_classes = 0;
  std::vector<std::size_t> counts;  // row = truth, column = prediction

  std::size_t at(std::size_t truth, std::size_t pred) const { return counts[truth * num_classes + pred]; }
  std::size_t total() const;
};

ConfusionMatrix confusion_matrix(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 std::size_t num_classes);

/// Support-weighted mean of per-class F1. Classes absent from the truth
/// carry zero weight.
double weighted_f1(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t num_classes);

struct EvalReport {
  std::size_t num_classes = 0;
  double weighted_f1 = 0.0;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<std::size_t> support;
  ConfusionMatrix confusion;

  std::string to_text() const;
};

EvalReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                std::size_t num_classes);

/// Per-utterance probability vectors of every stage, keyed by utterance id.
///
/// File format, tab-separated:
///   #hierfuse-predictions<TAB>1<TAB><C>
///   utterance_id<TAB>stage<TAB>p_0<TAB>...<TAB>p_{C-1}
/// with stage one of a1, t1, a2, t2, c. Values use the shortest decimal
/// form that reads back to the same double.
class PredictionStore {
 public:
  explicit PredictionStore(std::size_t num_classes = 0) : num_classes_(num_classes) {}

  void put(StageKey stage, const std::string& utterance_id, std::span<const double> probs);
  bool has_stage(StageKey stage) const { return stages_.count(stage) > 0; }
  /// Rows for the given ids, in order.
  Tensor gather(StageKey stage, const std::vector<std::string>& utterance_ids) const;
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size(StageKey stage) const;

  /// Adds every entry of `other`; overlapping (stage, id) pairs are errors.
  void merge(const PredictionStore& other);

  void save(const std::filesystem::path& path) const;
  static PredictionStore load(const std::filesystem::path& path);

 private:
  std::size_t num_classes_;
  std::map<StageKey, std::map<std::string, std::vector<double>>> stages_;
};

/// Grid {0, 1/n, ..., 1} with n = 1/step; step must divide 1.
std::vector<double> alpha_grid(double step);

struct CurvePoint {
  double alpha;
  double f1;
};

struct EnsembleSearch {
  EnsembleWeights weights;
  std::vector<CurvePoint> audio_curve;  // F1 of ensemble_stage2 for audio vs alpha
  std::vector<CurvePoint> text_curve;
  double f1_audio_12 = 0.0;  // best stage-2 ensemble F1 per modality
  double f1_text_12 = 0.0;
  double f1_final = 0.0;     // F1 of the selected stage-3 ensemble
  std::map<StageKey, double> single_stage_f1;
};

/// Sequential exhaustive grid search on validation data. Stage-2 alphas are
/// chosen per modality first (ties toward the larger alpha), then the
/// stage-3 simplex over (alpha_c, alpha_a, alpha_t) on top of the chosen
/// stage-2 ensembles (ties toward larger alpha_c, then larger alpha_a).
/// Every endpoint is on the grid, so the result is never below any single
/// stage.
EnsembleSearch search_ensemble_weights(const PredictionStore& val, const std::vector<std::string>& utterance_ids,
                                       const std::vector<int>& labels, double grid_step = 0.1);

/// Stage-2 ensembles per modality, then the stage-3 ensemble, with fixed weights.
Tensor apply_ensemble(const PredictionStore& preds, const std::vector<std::string>& utterance_ids,
                      const EnsembleWeights& w);

}  // namespace hierfuse
