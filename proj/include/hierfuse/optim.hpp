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

#include <cstdint>
#include <span>
#include <unordered_map>

#include "hierfuse/params.hpp"

namespace hierfuse {

struct AdamConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam. Moment buffers are created the first time a
/// parameter is stepped.
class Adam {
 public:
  explicit Adam(AdamConfig config);

  /// Applies one update from each parameter's `grad`. Throws
  /// kNonFiniteGradient naming the first offending parameter; no parameter is
  /// modified in that case.
  void step(std::span<Parameter* const> params);

  std::uint64_t step_count() const noexcept { return step_count_; }
  bool has_moments(const Parameter& p) const { return moments_.contains(&p); }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  struct Moments {
    Tensor first;
    Tensor second;
  };

  AdamConfig config_;
  std::uint64_t step_count_ = 0;
  std::unordered_map<const Parameter*, Moments> moments_;
};

double global_l2_norm(std::span<const Tensor* const> grads);

/// Rescales every gradient by max_norm / g when the global L2 norm g exceeds
/// max_norm. Returns the norm before clipping.
double clip_gradients_l2(std::span<Tensor* const> grads, double max_norm);
double clip_gradients_l2(std::span<Parameter* const> params, double max_norm);

}  // namespace hierfuse
