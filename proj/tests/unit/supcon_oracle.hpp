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

#include <cmath>
#include <vector>

#include "hierfuse/rng.hpp"
#include "hierfuse/tensor.hpp"

namespace hierfuse::testing {

/// Literal enumeration of the supervised contrastive sum: for every anchor j,
/// build the positive set and the denominator set explicitly and add
/// -1/|P_j| * sum_p log(exp(s_jp) / sum_a exp(s_ja)). No log-sum-exp tricks
/// and no shared code with the library.
inline double sup_con_oracle(const Tensor& x, const std::vector<int>& labels, double tau, bool self_exclusion) {
  const std::size_t b = x.rows(), f = x.cols();
  auto sim = [&](std::size_t i, std::size_t k) {
    double s = 0.0;
    for (std::size_t c = 0; c < f; ++c) s += x(i, c) * x(k, c);
    return s / tau;
  };
  double total = 0.0;
  for (std::size_t j = 0; j < b; ++j) {
    std::vector<std::size_t> positives, denominator;
    for (std::size_t i = 0; i < b; ++i) {
      if (self_exclusion && i == j) continue;
      denominator.push_back(i);
      if (labels[i] == labels[j]) positives.push_back(i);
    }
    if (positives.empty()) continue;
    double denom = 0.0;
    for (std::size_t a : denominator) denom += std::exp(sim(j, a));
    double term = 0.0;
    for (std::size_t p : positives) term += std::log(std::exp(sim(j, p)) / denom);
    total += -term / static_cast<double>(positives.size());
  }
  return total;
}

inline Tensor random_unit_rows(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t = Tensor::zeros(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double norm = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      t(i, j) = rng.normal();
      norm += t(i, j) * t(i, j);
    }
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < cols; ++j) t(i, j) /= norm;
  }
  return t;
}

}  // namespace hierfuse::testing
