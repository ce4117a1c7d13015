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

#include <span>
#include <vector>

#include "hierfuse/autograd.hpp"

namespace hierfuse {

struct LossConfig {
  double beta = 0.9;
  double tau = 0.1;
  /// true: the anchor is excluded from its own positive set and from the
  /// contrastive denominator. false: both sums range over the whole batch,
  /// anchor included.
  bool self_exclusion = true;
  /// Per-class weights for cross-entropy; empty disables weighting.
  std::vector<double> class_weights;

  void validate() const;
};

/// Mean (or class-weighted mean) of -log softmax(logits)[label] over rows.
Var cross_entropy(Var logits, std::span<const int> labels, std::span<const double> class_weights = {});

/// Supervised contrastive loss, summed over anchors:
///   sum_j -1/|P_j| sum_{p in P_j} log( exp(x_j.x_p / tau) / sum_{a in A_j} exp(x_j.x_a / tau) )
/// Anchors with an empty positive set contribute 0. Rows of `features` must
/// have unit L2 norm, or be exactly zero (the normalization of a zero row).
Var sup_con_loss(Var features, std::span<const int> labels, double tau, bool self_exclusion = true);

/// beta * cross_entropy + (1 - beta) * sup_con_loss on the same mini-batch.
/// `features` are the unit-normalized projection features. With fewer than
/// two rows there are no contrastive pairs and only the cross-entropy term
/// remains.
Var combined_loss(Var logits, Var features, std::span<const int> labels, const LossConfig& config);

}  // namespace hierfuse
