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
#include <string>
#include <vector>

#include "hierfuse/autograd.hpp"
#include "hierfuse/layers.hpp"

namespace hierfuse {

/// Validity flag per sequence position (non-zero = valid). An empty mask
/// means every position is valid.
using Mask = std::vector<std::uint8_t>;

/// Single-head projections plus the post-residual layer norm. d_k = d_model.
struct AttentionParams {
  std::size_t d_model = 0;
  LinearParams query;
  LinearParams key;
  LinearParams value;
  LayerNormParams norm;
};

AttentionParams make_attention(ParameterSet& params, const std::string& prefix, std::size_t d_model);

/// softmax(Q K^T / sqrt(d_k)) over valid keys. Scores to masked keys get
/// -1e9 before the softmax, so each row is a distribution over valid keys.
Var attention_weights(Graph& g, Var q, Var k, const Mask& mask);

/// attention_weights(Q, K) * V with masked query rows set to zero.
Var scaled_dot_attention(Graph& g, Var q, Var k, Var v, const Mask& mask);

/// LayerNorm(Q + Attention(Q, K, V)) with Q from `query_seq` and K, V from
/// `kv_seq`. Masked output rows are zero.
Var cross_attention_block(Graph& g, const AttentionParams& p, Var query_seq, Var kv_seq, const Mask& mask);

/// cross_attention_block with query and key/value drawn from the same sequence.
Var self_attention_block(Graph& g, const AttentionParams& p, Var x, const Mask& mask);

/// Two mirrored arms, each a cross-attention followed by a self-attention.
/// The arms have independent parameters.
struct CoAttentionParams {
  AttentionParams audio_cross;  // audio queries, text keys/values
  AttentionParams audio_self;
  AttentionParams text_cross;   // text queries, audio keys/values
  AttentionParams text_self;
};

CoAttentionParams make_co_attention(ParameterSet& params, const std::string& prefix, std::size_t d_model);

struct CrossModalPair {
  Var audio;  // N x d_model
  Var text;   // N x d_model
  Mask mask;
};

/// Returns concat(audio arm, text arm) per position: N x 2*d_model.
Var co_attention_fuse(Graph& g, const CoAttentionParams& p, const CrossModalPair& pair);

}  // namespace hierfuse
