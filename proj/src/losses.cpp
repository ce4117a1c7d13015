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

#include "hierfuse/losses.hpp"

#include <algorithm>
#include <cmath>

#include "hierfuse/error.hpp"

namespace hierfuse {

void LossConfig::validate() const {
  require(beta >= 0.0 && beta <= 1.0, ErrorCode::kConfig, "loss beta must lie in [0, 1]");
  require(tau > 0.0, ErrorCode::kConfig, "loss tau must be positive");
  for (double w : class_weights) require(w > 0.0, ErrorCode::kConfig, "class weights must be positive");
}

Var cross_entropy(Var logits, std::span<const int> labels, std::span<const double> class_weights) {
  const Tensor& Z = logits.value();
  const std::size_t batch = Z.rows(), classes = Z.cols();
  require(labels.size() == batch, ErrorCode::kLengthMismatch,
          "cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(batch) + " rows");
  require(class_weights.empty() || class_weights.size() == classes, ErrorCode::kShape,
          "cross_entropy: class weight count must equal class count");
  require(Z.all_finite(), ErrorCode::kNumericDomain, "cross_entropy: non-finite logits");
  for (int y : labels)
    require(y >= 0 && static_cast<std::size_t>(y) < classes, ErrorCode::kLabelRange,
            "cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");

  Tensor probs(Z.shape());
  std::vector<double> weights(batch, 1.0);
  double total_weight = 0.0, loss = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    auto z = Z.row(i);
    const double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (std::size_t c = 0; c < classes; ++c) denom += (probs(i, c) = std::exp(z[c] - mx));
    for (std::size_t c = 0; c < classes; ++c) probs(i, c) /= denom;
    const auto y = static_cast<std::size_t>(labels[i]);
    if (!class_weights.empty()) weights[i] = class_weights[y];
    loss += weights[i] * (std::log(denom) + mx - z[y]);
    total_weight += weights[i];
  }
  loss /= total_weight;

  std::vector<int> ys(labels.begin(), labels.end());
  const Var parents[] = {logits};
  return logits.graph->record(
      Tensor({1, 1}, {loss}), parents,
      [logits, probs = std::move(probs), weights = std::move(weights), ys = std::move(ys), total_weight, classes](
          Graph& g, const Tensor&, const Tensor& dy) {
        Tensor* dZ = g.grad_target(logits);
        if (!dZ) return;
        for (std::size_t i = 0; i < ys.size(); ++i) {
          const double w = dy[0] * weights[i] / total_weight;
          for (std::size_t c = 0; c < classes; ++c) (*dZ)(i, c) += w * probs(i, c);
          (*dZ)(i, static_cast<std::size_t>(ys[i])) -= w;
        }
      });
}

Var sup_con_loss(Var features, std::span<const int> labels, double tau, bool self_exclusion) {
  const Tensor& X = features.value();
  const std::size_t batch = X.rows(), dim = X.cols();
  require(batch >= 2, ErrorCode::kShape, "sup_con_loss: batch must hold at least 2 rows");
  require(labels.size() == batch, ErrorCode::kLengthMismatch, "sup_con_loss: label count differs from row count");
  require(tau > 0.0, ErrorCode::kConfig, "sup_con_loss: temperature must be positive");
  require(X.all_finite(), ErrorCode::kNumericDomain, "sup_con_loss: non-finite features");
  for (std::size_t i = 0; i < batch; ++i) {
    double sq = 0.0;
    for (double v : X.row(i)) sq += v * v;
    const double norm = std::sqrt(sq);
    require(std::abs(norm - 1.0) <= 1e-4 || sq == 0.0, ErrorCode::kUnnormalizedFeatures,
            "sup_con_loss: row " + std::to_string(i) + " has norm " + std::to_string(norm));
  }

  // grad_scores(j, k) = dL/dS_jk with S = X X^T / tau.
  Tensor grad_scores = Tensor::zeros(batch, batch);
  std::vector<double> scores(batch);
  double loss = 0.0;
  for (std::size_t j = 0; j < batch; ++j) {
    std::size_t positives = 0;
    for (std::size_t p = 0; p < batch; ++p)
      if (labels[p] == labels[j] && (p != j || !self_exclusion)) ++positives;
    if (positives == 0) continue;

    double mx = -INFINITY;
    for (std::size_t a = 0; a < batch; ++a) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) s += X(j, c) * X(a, c);
      scores[a] = s / tau;
      if (a != j || !self_exclusion) mx = std::max(mx, scores[a]);
    }
    double denom = 0.0;
    for (std::size_t a = 0; a < batch; ++a)
      if (a != j || !self_exclusion) denom += std::exp(scores[a] - mx);
    const double log_denom = mx + std::log(denom);

    const double inv_pos = 1.0 / static_cast<double>(positives);
    double anchor = 0.0;
    for (std::size_t p = 0; p < batch; ++p)
      if (labels[p] == labels[j] && (p != j || !self_exclusion)) {
        anchor -= inv_pos * (scores[p] - log_denom);
        grad_scores(j, p) -= inv_pos;
      }
    for (std::size_t a = 0; a < batch; ++a)
      if (a != j || !self_exclusion) grad_scores(j, a) += std::exp(scores[a] - log_denom);
    loss += anchor;
  }

  const Var parents[] = {features};
  return features.graph->record(
      Tensor({1, 1}, {loss}), parents,
      [features, grad_scores = std::move(grad_scores), batch, dim, tau](Graph& g, const Tensor&, const Tensor& dy) {
        Tensor* dX = g.grad_target(features);
        if (!dX) return;
        const Tensor& X = g.value(features);
        // dX = (G + G^T) X / tau
        for (std::size_t i = 0; i < batch; ++i)
          for (std::size_t k = 0; k < batch; ++k) {
            const double w = dy[0] * (grad_scores(i, k) + grad_scores(k, i)) / tau;
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < dim; ++c) (*dX)(i, c) += w * X(k, c);
          }
      });
}

Var combined_loss(Var logits, Var features, std::span<const int> labels, const LossConfig& config) {
  config.validate();
  if (config.beta == 1.0 || features.rows() < 2) {
    Var ce = cross_entropy(logits, labels, config.class_weights);
    return config.beta == 1.0 ? ce : scale(ce, config.beta);
  }
  if (config.beta == 0.0) return sup_con_loss(features, labels, config.tau, config.self_exclusion);
  Var ce = cross_entropy(logits, labels, config.class_weights);
  Var sc = sup_con_loss(features, labels, config.tau, config.self_exclusion);
  return add(scale(ce, config.beta), scale(sc, 1.0 - config.beta));
}

}  // namespace hierfuse
