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

#include "hierfuse/optim.hpp"

#include <cmath>
#include <vector>

#include "hierfuse/error.hpp"

namespace hierfuse {

Adam::Adam(AdamConfig config) : config_(config) {
  require(config_.learning_rate > 0, ErrorCode::kConfig, "learning rate must be positive");
  require(config_.beta1 > 0 && config_.beta1 < 1 && config_.beta2 > 0 && config_.beta2 < 1, ErrorCode::kConfig,
          "Adam betas must lie in (0, 1)");
  require(config_.epsilon > 0, ErrorCode::kConfig, "Adam epsilon must be positive");
}

void Adam::step(std::span<Parameter* const> params) {
  for (const Parameter* p : params) {
    require(p->grad.same_shape(p->value), ErrorCode::kShape, "gradient shape mismatch for '" + p->name + "'");
    if (!p->grad.all_finite())
      fail(ErrorCode::kNonFiniteGradient,
           "parameter '" + p->name + "' at optimizer step " + std::to_string(step_count_ + 1));
  }
  ++step_count_;
  const double t = static_cast<double>(step_count_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (Parameter* p : params) {
    auto [it, inserted] = moments_.try_emplace(p);
    if (inserted) {
      it->second.first = Tensor(p->value.shape());
      it->second.second = Tensor(p->value.shape());
    }
    Tensor& m = it->second.first;
    Tensor& v = it->second.second;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p->value[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

double global_l2_norm(std::span<const Tensor* const> grads) {
  double total = 0.0;
  for (const Tensor* g : grads)
    for (double v : g->values()) total += v * v;
  return std::sqrt(total);
}

double clip_gradients_l2(std::span<Tensor* const> grads, double max_norm) {
  require(max_norm > 0, ErrorCode::kConfig, "clip norm must be positive");
  std::vector<const Tensor*> view(grads.begin(), grads.end());
  const double norm = global_l2_norm(view);
  // The relative slack keeps a second clip from rescaling by a rounding-level factor.
  if (norm > max_norm * (1.0 + 1e-12)) {
    const double factor = max_norm / norm;
    for (Tensor* g : grads)
      for (double& v : g->values()) v *= factor;
  }
  return norm;
}

double clip_gradients_l2(std::span<Parameter* const> params, double max_norm) {
  std::vector<Tensor*> grads;
  grads.reserve(params.size());
  for (Parameter* p : params) grads.push_back(&p->grad);
  return clip_gradients_l2(grads, max_norm);
}

}  // namespace hierfuse
