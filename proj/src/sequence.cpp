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

#include "hierfuse/sequence.hpp"

#include <algorithm>
#include <numeric>

#include "hierfuse/error.hpp"

namespace hierfuse {

void ArchConfig::validate() const {
  require(d_model >= 2 && d_model % 2 == 0, ErrorCode::kConfig, "d_model must be an even integer >= 2");
  require(ff_width() >= 1, ErrorCode::kConfig, "d_ff must be positive");
  require(conv_layers >= 1, ErrorCode::kConfig, "conv_layers must be >= 1");
  require(conv_kernel >= 1 && conv_kernel % 2 == 1, ErrorCode::kConfig, "conv_kernel must be odd");
  require(dropout >= 0.0 && dropout < 1.0, ErrorCode::kConfig, "dropout must lie in [0, 1)");
}

StackedSequences stack_sequences(const std::vector<const Tensor*>& sequences) {
  require(!sequences.empty(), ErrorCode::kShape, "no sequences to stack");
  const std::size_t width = sequences.front()->cols();
  StackedSequences out;
  out.offsets.push_back(0);
  std::vector<double> values;
  for (const Tensor* s : sequences) {
    require(s->rank() == 2 && s->rows() >= 1, ErrorCode::kShape, "sequence must hold at least one row");
    require(s->cols() == width, ErrorCode::kShape,
            "sequence width " + std::to_string(s->cols()) + ", expected " + std::to_string(width));
    values.insert(values.end(), s->values().begin(), s->values().end());
    out.offsets.push_back(out.offsets.back() + s->rows());
  }
  out.rows = Tensor({out.offsets.back(), width}, std::move(values));
  return out;
}

Var slice_rows(Var stacked, std::size_t begin, std::size_t end) {
  std::vector<std::int64_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), static_cast<std::int64_t>(begin));
  return gather_rows(stacked, std::move(idx));
}

BiGruResult run_bigru(Graph& g, const GruCellParams& forward, const GruCellParams& backward, Var stacked,
                      const std::vector<std::size_t>& offsets, bool need_per_row) {
  const std::size_t count = offsets.size() - 1;
  std::size_t max_len = 0;
  for (std::size_t b = 0; b < count; ++b) {
    require(offsets[b + 1] > offsets[b], ErrorCode::kShape, "empty sequence in bi-GRU batch");
    max_len = std::max(max_len, offsets[b + 1] - offsets[b]);
  }

  auto run = [&](const GruCellParams& cell, bool reverse) {
    std::vector<Var> states;
    Var h = g.constant(Tensor::zeros(count, cell.hidden_dim));
    for (std::size_t step = 0; step < max_len; ++step) {
      std::vector<std::int64_t> idx(count, -1);
      Tensor mask = Tensor::zeros(count, 1);
      bool all_active = true;
      for (std::size_t b = 0; b < count; ++b) {
        const std::size_t len = offsets[b + 1] - offsets[b];
        if (step < len) {
          const std::size_t pos = reverse ? len - 1 - step : step;
          idx[b] = static_cast<std::int64_t>(offsets[b] + pos);
          mask[b] = 1.0;
        } else {
          all_active = false;
        }
      }
      Var x = gather_rows(stacked, std::move(idx));
      Var next = gru_cell(g, cell, x, h);
      h = all_active ? next : add(h, mul(sub(next, h), g.constant(std::move(mask))));
      states.push_back(h);
    }
    return std::pair{states, h};
  };

  auto [fwd_states, fwd_final] = run(forward, false);
  auto [bwd_states, bwd_final] = run(backward, true);
  const Var finals[] = {fwd_final, bwd_final};
  BiGruResult result{Var{}, concat_cols(finals)};
  if (!need_per_row) return result;

  // Step states stacked step-major: row (step * count + b).
  Var fwd_all = concat_rows(fwd_states);
  Var bwd_all = concat_rows(bwd_states);
  std::vector<std::int64_t> fwd_idx, bwd_idx;
  fwd_idx.reserve(offsets.back());
  bwd_idx.reserve(offsets.back());
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t len = offsets[b + 1] - offsets[b];
    for (std::size_t t = 0; t < len; ++t) {
      fwd_idx.push_back(static_cast<std::int64_t>(t * count + b));
      bwd_idx.push_back(static_cast<std::int64_t>((len - 1 - t) * count + b));
    }
  }
  const Var parts[] = {gather_rows(fwd_all, std::move(fwd_idx)), gather_rows(bwd_all, std::move(bwd_idx))};
  result.per_row = concat_cols(parts);
  return result;
}

AudioEncoder::AudioEncoder(std::size_t input_dim, std::size_t num_classes, const ArchConfig& arch)
    : input_dim_(input_dim), arch_(arch) {
  arch_.validate();
  std::size_t in = input_dim;
  for (std::size_t l = 0; l < arch_.conv_layers; ++l) {
    conv_.push_back(make_linear(params_, "audio.conv" + std::to_string(l), in * arch_.conv_kernel, arch_.d_model));
    in = arch_.d_model;
  }
  classifier_ = make_linear(params_, "audio.classifier", arch_.d_model, num_classes);
}

ModelOutput AudioEncoder::forward(Graph& g, const StackedSequences& frames) {
  require(frames.rows.cols() == input_dim_, ErrorCode::kShape,
          "audio encoder: frame width " + std::to_string(frames.rows.cols()) + ", expected " +
              std::to_string(input_dim_));
  Var h = g.constant(frames.rows);
  for (const LinearParams& conv : conv_) {
    Var cols = im2col_1d(h, frames.offsets, arch_.conv_kernel, arch_.conv_kernel / 2);
    h = dropout(relu(linear(g, conv, cols)), arch_.dropout);
  }
  Var pooled = segment_mean(h, frames.offsets);
  return {pooled, linear(g, classifier_, pooled)};
}

TextEncoder::TextEncoder(std::size_t input_dim, std::size_t num_classes, const ArchConfig& arch)
    : input_dim_(input_dim), arch_(arch) {
  arch_.validate();
  forward_ = make_gru_cell(params_, "text.gru_fwd", input_dim, arch_.d_model);
  backward_ = make_gru_cell(params_, "text.gru_bwd", input_dim, arch_.d_model);
  projection_ = make_linear(params_, "text.projection", 2 * arch_.d_model, arch_.d_model);
  classifier_ = make_linear(params_, "text.classifier", arch_.d_model, num_classes);
}

Var TextEncoder::final_states(Graph& g, const StackedSequences& tokens) {
  require(tokens.rows.cols() == input_dim_, ErrorCode::kShape,
          "text encoder: token width " + std::to_string(tokens.rows.cols()) + ", expected " +
              std::to_string(input_dim_));
  return run_bigru(g, forward_, backward_, g.constant(tokens.rows), tokens.offsets, false).final_states;
}

ModelOutput TextEncoder::forward(Graph& g, const StackedSequences& tokens) {
  Var states = dropout(final_states(g, tokens), arch_.dropout);
  Var embedding = linear(g, projection_, states);
  return {embedding, linear(g, classifier_, embedding)};
}

ContextualGru::ContextualGru(std::size_t input_dim, std::size_t num_classes, const ArchConfig& arch,
                             const std::string& prefix)
    : arch_(arch) {
  arch_.validate();
  const std::size_t half = arch_.d_model / 2;
  forward_ = make_gru_cell(params_, prefix + ".gru_fwd", input_dim, half);
  backward_ = make_gru_cell(params_, prefix + ".gru_bwd", input_dim, half);
  if (arch_.self_attention) attention_ = make_attention(params_, prefix + ".attention", arch_.d_model);
  feed_forward_ = make_feed_forward(params_, prefix, arch_.d_model, arch_.ff_width(), arch_.d_model);
  classifier_ = make_linear(params_, prefix + ".classifier", arch_.d_model, num_classes);
}

ModelOutput ContextualGru::forward(Graph& g, Var utterances, const std::vector<std::size_t>& offsets) {
  require(offsets.size() >= 2 && offsets.back() == utterances.rows(), ErrorCode::kShape,
          "contextual GRU: offsets do not cover the utterance rows");
  require(utterances.cols() == forward_.input_dim, ErrorCode::kShape,
          "contextual GRU: embedding width " + std::to_string(utterances.cols()) + ", expected " +
              std::to_string(forward_.input_dim));
  Var h = dropout(run_bigru(g, forward_, backward_, utterances, offsets, true).per_row, arch_.dropout);
  if (arch_.self_attention) {
    std::vector<Var> conversations;
    for (std::size_t c = 0; c + 1 < offsets.size(); ++c)
      conversations.push_back(self_attention_block(g, attention_, slice_rows(h, offsets[c], offsets[c + 1]), {}));
    h = dropout(offsets.size() == 2 ? conversations.front() : concat_rows(conversations), arch_.dropout);
  }
  Var embedding = feed_forward(g, feed_forward_, h);
  return {embedding, linear(g, classifier_, dropout(embedding, arch_.dropout))};
}

FusionModel::FusionModel(std::size_t num_classes, const ArchConfig& arch, const std::string& prefix) : arch_(arch) {
  arch_.validate();
  co_attention_ = make_co_attention(params_, prefix, arch_.d_model);
  feed_forward_ = make_feed_forward(params_, prefix, 2 * arch_.d_model, arch_.ff_width(), arch_.d_model);
  classifier_ = make_linear(params_, prefix + ".classifier", arch_.d_model, num_classes);
}

ModelOutput FusionModel::forward(Graph& g, Var audio, Var text, const std::vector<std::size_t>& offsets) {
  require(audio.rows() == text.rows(), ErrorCode::kShape,
          "fusion: audio has " + std::to_string(audio.rows()) + " utterances, text has " +
              std::to_string(text.rows()));
  require(offsets.size() >= 2 && offsets.back() == audio.rows(), ErrorCode::kShape,
          "fusion: offsets do not cover the utterance rows");
  std::vector<Var> fused;
  for (std::size_t c = 0; c + 1 < offsets.size(); ++c) {
    CrossModalPair pair{slice_rows(audio, offsets[c], offsets[c + 1]), slice_rows(text, offsets[c], offsets[c + 1]),
                        {}};
    fused.push_back(co_attention_fuse(g, co_attention_, pair));
  }
  Var h = dropout(fused.size() == 1 ? fused.front() : concat_rows(fused), arch_.dropout);
  Var embedding = feed_forward(g, feed_forward_, h);
  return {embedding, linear(g, classifier_, dropout(embedding, arch_.dropout))};
}

}  // namespace hierfuse
