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

#include "hierfuse/layers.hpp"

#include "hierfuse/error.hpp"

namespace hierfuse {

LinearParams make_linear(ParameterSet& params, const std::string& prefix, std::size_t in, std::size_t out) {
  LinearParams p;
  p.weight = &params.add(prefix + ".weight", {out, in});
  p.bias = &params.add(prefix + ".bias", {out});
  p.in = in;
  p.out = out;
  return p;
}

Var linear(Graph& g, const LinearParams& p, Var x) {
  require(x.cols() == p.in, ErrorCode::kShape,
          "linear " + p.weight->name + ": input width " + std::to_string(x.cols()) + ", expected " +
              std::to_string(p.in));
  return add(matmul_bt(x, g.param(*p.weight)), g.param(*p.bias));
}

LayerNormParams make_layer_norm(ParameterSet& params, const std::string& prefix, std::size_t dim) {
  LayerNormParams p;
  p.gamma = &params.add(prefix + ".gamma", {dim});
  p.beta = &params.add(prefix + ".beta", {dim});
  p.gamma->value.fill(1.0);
  return p;
}

Var layer_norm(Graph& g, const LayerNormParams& p, Var x, double eps) {
  return layer_norm(x, g.param(*p.gamma), g.param(*p.beta), eps);
}

FeedForwardParams make_feed_forward(ParameterSet& params, const std::string& prefix, std::size_t in,
                                    std::size_t hidden, std::size_t out) {
  return {make_linear(params, prefix + ".ff1", in, hidden), make_linear(params, prefix + ".ff2", hidden, out)};
}

Var feed_forward(Graph& g, const FeedForwardParams& p, Var x) {
  return linear(g, p.output, relu(linear(g, p.hidden, x)));
}

GruCellParams make_gru_cell(ParameterSet& params, const std::string& prefix, std::size_t input_dim,
                            std::size_t hidden_dim) {
  GruCellParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.w_z = &params.add(prefix + ".w_z", {hidden_dim, input_dim});
  p.w_r = &params.add(prefix + ".w_r", {hidden_dim, input_dim});
  p.w_h = &params.add(prefix + ".w_h", {hidden_dim, input_dim});
  p.u_z = &params.add(prefix + ".u_z", {hidden_dim, hidden_dim});
  p.u_r = &params.add(prefix + ".u_r", {hidden_dim, hidden_dim});
  p.u_h = &params.add(prefix + ".u_h", {hidden_dim, hidden_dim});
  p.b_z = &params.add(prefix + ".b_z", {hidden_dim});
  p.b_r = &params.add(prefix + ".b_r", {hidden_dim});
  p.b_h = &params.add(prefix + ".b_h", {hidden_dim});
  return p;
}

Var gru_cell(Graph& g, const GruCellParams& p, Var x, Var h_prev) {
  require(x.cols() == p.input_dim, ErrorCode::kShape,
          "gru_cell: input width " + std::to_string(x.cols()) + ", expected " + std::to_string(p.input_dim));
  require(h_prev.cols() == p.hidden_dim && h_prev.rows() == x.rows(), ErrorCode::kShape,
          "gru_cell: hidden state " + h_prev.value().shape_string() + " does not conform");
  auto gate = [&](Parameter* w, Parameter* u, Parameter* b, Var h) {
    return add(add(matmul_bt(x, g.param(*w)), matmul_bt(h, g.param(*u))), g.param(*b));
  };
  Var z = sigmoid(gate(p.w_z, p.u_z, p.b_z, h_prev));
  Var r = sigmoid(gate(p.w_r, p.u_r, p.b_r, h_prev));
  Var candidate = tanh(gate(p.w_h, p.u_h, p.b_h, mul(r, h_prev)));
  return add(h_prev, mul(z, sub(candidate, h_prev)));
}

}  // namespace hierfuse
