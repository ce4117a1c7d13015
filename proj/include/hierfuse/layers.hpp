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

#include <cstddef>
#include <string>

#include "hierfuse/autograd.hpp"
#include "hierfuse/params.hpp"

namespace hierfuse {

struct LinearParams {
  Parameter* weight = nullptr;  // out x in
  Parameter* bias = nullptr;    // out
  std::size_t in = 0;
  std::size_t out = 0;
};

LinearParams make_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out);
/// x: rows x in -> rows x out.
Var linear(Graph& g, const LinearParams& p, Var x);

struct LayerNormParams {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
};

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t dim);
Var layer_norm(Graph& g, const LayerNormParams& p, Var x, double eps = 1e-5);

/// Position-wise feed-forward: relu(x W1^T + b1) W2^T + b2.
struct FeedForwardParams {
  LinearParams hidden;
  LinearParams output;
};

FeedForwardParams make_feed_forward(ParameterSet& params, const std::string& prefix, std::size_t in,
                                    std::size_t hidden, std::size_t out);
Var feed_forward(Graph& g, const FeedForwardParams& p, Var x);

/// GRU cell with separate update (z), reset (r) and candidate (h) weights.
/// Input-to-hidden matrices are hidden x input, hidden-to-hidden matrices are
/// hidden x hidden and every bias has length hidden.
struct GruCellParams {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  Parameter* w_z = nullptr;
  Parameter* w_r = nullptr;
  Parameter* w_h = nullptr;
  Parameter* u_z = nullptr;
  Parameter* u_r = nullptr;
  Parameter* u_h = nullptr;
  Parameter* b_z = nullptr;
  Parameter* b_r = nullptr;
  Parameter* b_h = nullptr;
};

GruCellParams make_gru_cell(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                            std::size_t hidden_dim);

/// One step over a batch: x is batch x input_dim, h_prev is batch x hidden_dim.
///   z  = sigmoid(x W_z^T + h U_z^T + b_z)
///   r  = sigmoid(x W_r^T + h U_r^T + b_r)
///   h~ = tanh(x W_h^T + (r * h) U_h^T + b_h)
///   h' = (1 - z) * h + z * h~
Var gru_cell(Graph& g, const GruCellParams& p, Var x, Var h_prev);

}  // namespace hierfuse
