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

#include "hierfuse/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "binio.hpp"
#include "hierfuse/error.hpp"

namespace hierfuse {

std::string_view stage_key_name(StageKey k) {
  switch (k) {
    case StageKey::kA1: return "a1";
    case StageKey::kT1: return "t1";
    case StageKey::kA2: return "a2";
    case StageKey::kT2: return "t2";
    case StageKey::kC: return "c";
  }
  return "?";
}

StageKey parse_stage_key(std::string_view name) {
  for (StageKey k : kAllStageKeys)
    if (name == stage_key_name(k)) return k;
  fail(ErrorCode::kManifestFormat, "unknown prediction stage '" + std::string(name) + "'");
}

void require_distributions(const Tensor& probs, const std::string& what, double tol) {
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double total = 0.0;
    for (double p : probs.row(i)) {
      if (!(p >= 0.0) || !std::isfinite(p))
        fail(ErrorCode::kNotDistribution, what + ": row " + std::to_string(i) + " has a negative or non-finite entry");
      total += p;
    }
    if (std::abs(total - 1.0) > tol)
      fail(ErrorCode::kNotDistribution, what + ": row " + std::to_string(i) + " sums to " + std::to_string(total));
  }
}

Tensor ensemble_stage2(const Tensor& p2, const Tensor& p1, double alpha) {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorCode::kWeightConstraint,
          "stage-2 ensemble weight " + std::to_string(alpha) + " outside [0, 1]");
  require(p1.same_shape(p2), ErrorCode::kShape, "stage-2 ensemble operands differ in shape");
  require_distributions(p2, "stage-2 probabilities");
  require_distributions(p1, "stage-1 probabilities");
  if (alpha == 1.0) return p2;
  if (alpha == 0.0) return p1;
  Tensor out = p2;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * p2[i] + (1.0 - alpha) * p1[i];
  return out;
}

void EnsembleWeights::validate() const {
  for (double a : {alpha_a_12, alpha_t_12})
    require(a >= 0.0 && a <= 1.0, ErrorCode::kWeightConstraint,
            "stage-2 ensemble weight " + std::to_string(a) + " outside [0, 1]");
  for (double a : {alpha_c, alpha_a_23, alpha_t_23})
    require(a >= 0.0, ErrorCode::kWeightConstraint, "stage-3 ensemble weights must be non-negative");
  const double total = alpha_c + alpha_a_23 + alpha_t_23;
  require(std::abs(total - 1.0) <= 1e-9, ErrorCode::kWeightConstraint,
          "stage-3 ensemble weights sum to " + std::to_string(total) + ", expected 1");
}

Tensor ensemble_stage3(const Tensor& p_c, const Tensor& y_a2, const Tensor& y_t2, const EnsembleWeights& w) {
  w.validate();
  require(p_c.same_shape(y_a2) && p_c.same_shape(y_t2), ErrorCode::kShape, "stage-3 ensemble operands differ in shape");
  require_distributions(p_c, "fused probabilities");
  require_distributions(y_a2, "audio ensemble");
  require_distributions(y_t2, "text ensemble");
  if (w.alpha_c == 1.0) return p_c;
  Tensor out = p_c;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = w.alpha_c * p_c[i] + w.alpha_a_23 * y_a2[i] + w.alpha_t_23 * y_t2[i];
  return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t n = 0;
  for (auto c : counts) n += c;
  return n;
}

namespace {

void check_labels(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t num_classes) {
  require(predicted.size() == truth.size(), ErrorCode::kLengthMismatch,
          std::to_string(predicted.size()) + " predictions for " + std::to_string(truth.size()) + " labels");
  for (const auto* v : {&predicted, &truth})
    for (int y : *v)
      require(y >= 0 && static_cast<std::size_t>(y) < num_classes, ErrorCode::kLabelRange,
              "label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
}

}  // namespace

ConfusionMatrix confusion_matrix(const std::vector<int>& predicted, const std::vector<int>& truth,
                                 std::size_t num_classes) {
  check_labels(predicted, truth, num_classes);
  ConfusionMatrix m{num_classes, std::vector<std::size_t>(num_classes * num_classes, 0)};
  for (std::size_t i = 0; i < truth.size(); ++i)
    ++m.counts[static_cast<std::size_t>(truth[i]) * num_classes + static_cast<std::size_t>(predicted[i])];
  return m;
}

EvalReport evaluate_predictions(const std::vector<int>& predicted, const std::vector<int>& truth,
                                std::size_t num_classes) {
  EvalReport r;
  r.num_classes = num_classes;
  r.confusion = confusion_matrix(predicted, truth, num_classes);
  r.precision.assign(num_classes, 0.0);
  r.recall.assign(num_classes, 0.0);
  r.f1.assign(num_classes, 0.0);
  r.support.assign(num_classes, 0);
  std::size_t correct = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t predicted_k = 0;
    for (std::size_t j = 0; j < num_classes; ++j) {
      r.support[k] += r.confusion.at(k, j);
      predicted_k += r.confusion.at(j, k);
    }
    const double tp = static_cast<double>(r.confusion.at(k, k));
    correct += r.confusion.at(k, k);
    r.precision[k] = predicted_k ? tp / static_cast<double>(predicted_k) : 0.0;
    r.recall[k] = r.support[k] ? tp / static_cast<double>(r.support[k]) : 0.0;
    const double denom = r.precision[k] + r.recall[k];
    r.f1[k] = denom > 0.0 ? 2.0 * r.precision[k] * r.recall[k] / denom : 0.0;
  }
  const double n = static_cast<double>(truth.size());
  if (n > 0) {
    for (std::size_t k = 0; k < num_classes; ++k) r.weighted_f1 += static_cast<double>(r.support[k]) / n * r.f1[k];
    r.accuracy = static_cast<double>(correct) / n;
  }
  return r;
}

double weighted_f1(const std::vector<int>& predicted, const std::vector<int>& truth, std::size_t num_classes) {
  return evaluate_predictions(predicted, truth, num_classes).weighted_f1;
}

std::string EvalReport::to_text() const {
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "weighted_f1 %.4f  accuracy %.4f  samples %zu\n", weighted_f1, accuracy,
                confusion.total());
  out << buf << "class  precision  recall  f1      support\n";
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::snprintf(buf, sizeof buf, "%-5zu  %.4f     %.4f  %.4f  %zu\n", k, precision[k], recall[k], f1[k], support[k]);
    out << buf;
  }
  out << "confusion (rows = truth, columns = prediction)\n";
  for (std::size_t i = 0; i < num_classes; ++i) {
    for (std::size_t j = 0; j < num_classes; ++j) out << (j ? "\t" : "") << confusion.at(i, j);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Prediction store
// ---------------------------------------------------------------------------

void PredictionStore::put(StageKey stage, const std::string& utterance_id, std::span<const double> probs) {
  require(probs.size() == num_classes_, ErrorCode::kShape,
          "prediction width " + std::to_string(probs.size()) + ", expected " + std::to_string(num_classes_));
  Tensor row({1, probs.size()}, {probs.begin(), probs.end()});
  require_distributions(row, std::string(stage_key_name(stage)) + " prediction for '" + utterance_id + "'");
  auto [it, inserted] = stages_[stage].emplace(utterance_id, std::vector<double>(probs.begin(), probs.end()));
  require(inserted, ErrorCode::kManifestDuplicate,
          "duplicate " + std::string(stage_key_name(stage)) + " prediction for '" + utterance_id + "'");
}

std::size_t PredictionStore::size(StageKey stage) const {
  auto it = stages_.find(stage);
  return it == stages_.end() ? 0 : it->second.size();
}

Tensor PredictionStore::gather(StageKey stage, const std::vector<std::string>& utterance_ids) const {
  auto st = stages_.find(stage);
  if (st == stages_.end())
    fail(ErrorCode::kMissingStore, "no " + std::string(stage_key_name(stage)) + " predictions available");
  Tensor out = Tensor::zeros(utterance_ids.size(), num_classes_);
  for (std::size_t i = 0; i < utterance_ids.size(); ++i) {
    auto it = st->second.find(utterance_ids[i]);
    if (it == st->second.end())
      fail(ErrorCode::kMissingUtterance,
           "no " + std::string(stage_key_name(stage)) + " prediction for '" + utterance_ids[i] + "'");
    std::copy(it->second.begin(), it->second.end(), out.row(i).begin());
  }
  return out;
}

void PredictionStore::merge(const PredictionStore& other) {
  if (num_classes_ == 0) num_classes_ = other.num_classes_;
  require(other.num_classes_ == num_classes_, ErrorCode::kShape, "prediction stores disagree on the class count");
  for (const auto& [stage, rows] : other.stages_)
    for (const auto& [id, probs] : rows) put(stage, id, probs);
}

void PredictionStore::save(const std::filesystem::path& path) const {
  std::string out = "#hierfuse-predictions\t1\t" + std::to_string(num_classes_) + "\n";
  char buf[32];
  for (StageKey stage : kAllStageKeys) {
    auto st = stages_.find(stage);
    if (st == stages_.end()) continue;
    for (const auto& [id, probs] : st->second) {
      out += id;
      out += '\t';
      out += stage_key_name(stage);
      for (double p : probs) {
        const auto res = std::to_chars(buf, buf + sizeof buf, p);
        out += '\t';
        out.append(buf, res.ptr);
      }
      out += '\n';
    }
  }
  detail::write_text_file(path, out);
}

PredictionStore PredictionStore::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kMissingStore, "prediction store not found: " + path.string());
  std::istringstream in(detail::read_text_file(path, ErrorCode::kMissingStore));
  std::string line;
  std::size_t line_no = 0;
  PredictionStore store;
  while (std::getline(in, line)) {
    ++line_no;
    std::vector<std::string> f;
    std::size_t start = 0;
    while (true) {
      const auto tab = line.find('\t', start);
      f.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (line_no == 1) {
      require(f.size() == 3 && f[0] == "#hierfuse-predictions" && f[1] == "1", ErrorCode::kManifestFormat,
              path.string() + ": not a prediction store");
      store.num_classes_ = std::stoul(f[2]);
      continue;
    }
    if (line.empty()) continue;
    require(f.size() == 2 + store.num_classes_, ErrorCode::kManifestFormat,
            path.string() + ": line " + std::to_string(line_no) + " has " + std::to_string(f.size()) + " fields");
    std::vector<double> probs(store.num_classes_);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      const std::string& s = f[2 + k];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), probs[k]);
      require(res.ec == std::errc() && res.ptr == s.data() + s.size(), ErrorCode::kManifestFormat,
              path.string() + ": line " + std::to_string(line_no) + ": bad probability '" + s + "'");
    }
    store.put(parse_stage_key(f[1]), f[0], probs);
  }
  require(line_no >= 1, ErrorCode::kManifestFormat, path.string() + ": empty prediction store");
  return store;
}

// ---------------------------------------------------------------------------
// Weight search
// ---------------------------------------------------------------------------

std::vector<double> alpha_grid(double step) {
  require(step > 0.0 && step <= 1.0, ErrorCode::kConfig, "grid step must lie in (0, 1]");
  const double n_real = 1.0 / step;
  const auto n = static_cast<std::size_t>(std::llround(n_real));
  require(std::abs(n_real - static_cast<double>(n)) < 1e-9, ErrorCode::kConfig,
          "grid step " + std::to_string(step) + " does not divide 1");
  std::vector<double> grid(n + 1);
  for (std::size_t k = 0; k <= n; ++k) grid[k] = static_cast<double>(k) / static_cast<double>(n);
  return grid;
}

EnsembleSearch search_ensemble_weights(const PredictionStore& val, const std::vector<std::string>& utterance_ids,
                                       const std::vector<int>& labels, double grid_step) {
  require(!utterance_ids.empty(), ErrorCode::kEmptySplit, "no validation utterances for the ensemble search");
  require(utterance_ids.size() == labels.size(), ErrorCode::kLengthMismatch, "ids and labels differ in length");
  const std::size_t c = val.num_classes();
  const std::vector<double> grid = alpha_grid(grid_step);
  auto f1_of = [&](const Tensor& p) { return weighted_f1(argmax_rows(p), labels, c); };

  EnsembleSearch out;
  std::map<StageKey, Tensor> p;
  for (StageKey k : kAllStageKeys) {
    p[k] = val.gather(k, utterance_ids);
    out.single_stage_f1[k] = f1_of(p[k]);
  }

  // Stage 2: ascending grid with >= keeps the largest alpha among ties.
  auto search2 = [&](StageKey s2, StageKey s1, std::vector<CurvePoint>& curve, double& best_f1) {
    double best_alpha = 0.0;
    best_f1 = -1.0;
    for (double a : grid) {
      const double f = f1_of(ensemble_stage2(p[s2], p[s1], a));
      curve.push_back({a, f});
      if (f >= best_f1) {
        best_f1 = f;
        best_alpha = a;
      }
    }
    return best_alpha;
  };
  out.weights.alpha_a_12 = search2(StageKey::kA2, StageKey::kA1, out.audio_curve, out.f1_audio_12);
  out.weights.alpha_t_12 = search2(StageKey::kT2, StageKey::kT1, out.text_curve, out.f1_text_12);
  const Tensor y_a = ensemble_stage2(p[StageKey::kA2], p[StageKey::kA1], out.weights.alpha_a_12);
  const Tensor y_t = ensemble_stage2(p[StageKey::kT2], p[StageKey::kT1], out.weights.alpha_t_12);

  // Stage 3 over the simplex with k/n coordinates. Visiting alpha_c and then
  // alpha_a in descending order with a strict comparison keeps the preferred
  // point among ties.
  const std::size_t n = grid.size() - 1;
  out.f1_final = -1.0;
  for (std::size_t ic = n + 1; ic-- > 0;) {
    for (std::size_t ia = n - ic + 1; ia-- > 0;) {
      EnsembleWeights w = out.weights;
      w.alpha_c = grid[ic];
      w.alpha_a_23 = grid[ia];
      w.alpha_t_23 = grid[n - ic - ia];
      // k/n values may miss an exact unit sum by an ulp; renormalise.
      const double total = w.alpha_c + w.alpha_a_23 + w.alpha_t_23;
      w.alpha_c /= total;
      w.alpha_a_23 /= total;
      w.alpha_t_23 /= total;
      const double f = f1_of(ensemble_stage3(p[StageKey::kC], y_a, y_t, w));
      if (f > out.f1_final) {
        out.f1_final = f;
        out.weights = w;
      }
    }
  }
  return out;
}

Tensor apply_ensemble(const PredictionStore& preds, const std::vector<std::string>& utterance_ids,
                      const EnsembleWeights& w) {
  w.validate();
  const Tensor y_a =
      ensemble_stage2(preds.gather(StageKey::kA2, utterance_ids), preds.gather(StageKey::kA1, utterance_ids), w.alpha_a_12);
  const Tensor y_t =
      ensemble_stage2(preds.gather(StageKey::kT2, utterance_ids), preds.gather(StageKey::kT1, utterance_ids), w.alpha_t_12);
  return ensemble_stage3(preds.gather(StageKey::kC, utterance_ids), y_a, y_t, w);
}

}  // namespace hierfuse
