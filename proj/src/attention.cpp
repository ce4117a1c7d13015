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

#include "hierfuse/attention.hpp"

#include <algorithm>
#include <cmath>

#include "hierfuse/error.hpp"

namespace hierfuse {

namespace {

constexpr double kMaskedScore = -1e9;

void check_mask(const Mask& mask, std::size_t n) {
  if (mask.empty()) return;
  require(mask.size() == n, ErrorCode::kShape,
          "mask length " + std::to_string(mask.size()) + " does not match sequence length " + std::to_string(n));
  require(std::any_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }), ErrorCode::kAllMasked,
          "every position of the sequence is masked");
}

bool all_valid(const Mask& mask) {
  return std::all_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; });
}

Tensor mask_column(const Mask& mask) {
  Tensor col = Tensor::zeros(mask.size(), 1);
  for (std::size_t i = 0; i < mask.size(); ++i) col[i] = mask[i] ? 1.0 : 0.0;
  return col;
}

Var zero_masked_rows(Graph& g, Var x, const Mask& mask) {
  if (all_valid(mask)) return x;
  return mul(x, g.constant(mask_column(mask)));
}

}  // namespace

AttentionParams make_attention(ParameterSet& params, const std::string& prefix, std::size_t d_model) {
  AttentionParams p;
  p.d_model = d_model;
  p.query = make_linear(params, prefix + ".query", d_model, d_model);
  p.key = make_linear(params, prefix + ".key", d_model, d_model);
  p.value = make_linear(params, prefix + ".value", d_model, d_model);
  p.norm = make_layer_norm(params, prefix + ".norm", d_model);
  return p;
}

Var attention_weights(Graph& g, Var q, Var k, const Mask& mask) {
  require(q.cols() == k.cols(), ErrorCode::kShape, "attention: query and key widths differ");
  check_mask(mask, k.rows());
  Var scores = scale(matmul_bt(q, k), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  if (!all_valid(mask)) {
    Tensor bias = Tensor::zeros(1, mask.size());
    for (std::size_t j = 0; j < mask.size(); ++j) bias[j] = mask[j] ? 0.0 : kMaskedScore;
    scores = add(scores, g.constant(std::move(bias)));
  }
  return softmax_rows(scores);
}

Var scaled_dot_attention(Graph& g, Var q, Var k, Var v, const Mask& mask) {
  require(q.rows() == k.rows() && k.rows() == v.rows(), ErrorCode::kShape,
          "attention: Q, K, V must share the sequence length");
  require(k.cols() == v.cols(), ErrorCode::kShape, "attention: key and value widths differ");
  Var out = matmul(attention_weights(g, q, k, mask), v);
  return zero_masked_rows(g, out, mask);
}

Var cross_attention_block(Graph& g, const AttentionParams& p, Var query_seq, Var kv_seq, const Mask& mask) {
  require(query_seq.cols() == p.d_model && kv_seq.cols() == p.d_model, ErrorCode::kShape,
          "attention block expects width " + std::to_string(p.d_model));
  require(query_seq.rows() == kv_seq.rows(), ErrorCode::kShape,
          "cross attention: query has " + std::to_string(query_seq.rows()) + " positions, key/value has " +
              std::to_string(kv_seq.rows()));
  Var q = linear(g, p.query, query_seq);
  Var k = linear(g, p.key, kv_seq);
  Var v = linear(g, p.value, kv_seq);
  Var out = layer_norm(g, p.norm, add(q, scaled_dot_attention(g, q, k, v, mask)));
  return zero_masked_rows(g, out, mask);
}

Var self_attention_block(Graph& g, const AttentionParams& p, Var x, const Mask& mask) {
  return cross_attention_block(g, p, x, x, mask);
}

CoAttentionParams make_co_attention(ParameterSet& params, const std::string& prefix, std::size_t d_model) {
  return {make_attention(params, prefix + ".audio_cross", d_model),
          make_attention(params, prefix + ".audio_self", d_model),
          make_attention(params, prefix + ".text_cross", d_model),
          make_attention(params, prefix + ".text_self", d_model)};
}

Var co_attention_fuse(Graph& g, const CoAttentionParams& p, const CrossModalPair& pair) {
  require(pair.audio.rows() == pair.text.rows() && pair.audio.cols() == pair.text.cols(), ErrorCode::kShape,
          "co-attention: audio " + pair.audio.value().shape_string() + " and text " +
              pair.text.value().shape_string() + " differ");
  Var audio_arm = self_attention_block(g, p.audio_self,
                                       cross_attention_block(g, p.audio_cross, pair.audio, pair.text, pair.mask),
                                       pair.mask);
  Var text_arm = self_attention_block(g, p.text_self,
                                      cross_attention_block(g, p.text_cross, pair.text, pair.audio, pair.mask),
                                      pair.mask);
  const Var arms[] = {audio_arm, text_arm};
  return concat_cols(arms);
}

}  // namespace hierfuse
