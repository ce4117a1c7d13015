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
#include <vector>

#include "hierfuse/attention.hpp"
#include "hierfuse/layers.hpp"

namespace hierfuse {

/// Architecture knobs shared by every model.
struct ArchConfig {
  std::size_t d_model = 64;
  std::size_t d_ff = 0;  // 0 selects 4 * d_model
  std::size_t conv_layers = 2;
  std::size_t conv_kernel = 3;
  double dropout = 0.1;
  bool self_attention = true;

  std::size_t ff_width() const { return d_ff == 0 ? 4 * d_model : d_ff; }
  void validate() const;
};

/// Per-row pre-classifier embeddings and class logits.
struct ModelOutput {
  Var embeddings;
  Var logits;
};

/// Stacks variable-length sequences into one matrix; offsets has one entry per
/// sequence plus a final end offset.
struct StackedSequences {
  Tensor rows;
  std::vector<std::size_t> offsets;

  std::size_t count() const { return offsets.size() - 1; }
  std::size_t length(std::size_t i) const { return offsets[i + 1] - offsets[i]; }
};

StackedSequences stack_sequences(const std::vector<const Tensor*>& sequences);

struct BiGruResult {
  Var per_row;       // total_rows x 2*hidden, [forward | backward] state at each position
  Var final_states;  // sequences x 2*hidden, [forward after last | backward after first]
};

/// Batched bidirectional GRU over stacked sequences. Each direction starts
/// from a zero state at its own end of every sequence; shorter sequences keep
/// their state once exhausted.
BiGruResult run_bigru(Graph& g, const GruCellParams& forward, const GruCellParams& backward, Var stacked,
                      const std::vector<std::size_t>& offsets, bool need_per_row);

/// Stage-I audio encoder: 1-D conv stack over frames (ReLU), mean pooling
/// over time, linear classifier. The pooled vector is the embedding.
class AudioEncoder {
 public:
  AudioEncoder(std::size_t input_dim, std::size_t num_classes, const ArchConfig& arch);

  ModelOutput forward(Graph& g, const StackedSequences& frames);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  std::size_t input_dim() const { return input_dim_; }

 private:
  ParameterSet params_;
  std::size_t input_dim_;
  ArchConfig arch_;
  std::vector<LinearParams> conv_;
  LinearParams classifier_;
};

/// Stage-I text encoder: bi-GRU over tokens, final states of both directions
/// concatenated and projected to d_model, linear classifier.
class TextEncoder {
 public:
  TextEncoder(std::size_t input_dim, std::size_t num_classes, const ArchConfig& arch);

  ModelOutput forward(Graph& g, const StackedSequences& tokens);
  /// [forward final | backward final] before projection.
  Var final_states(Graph& g, const StackedSequences& tokens);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const GruCellParams& forward_cell() const { return forward_; }
  const GruCellParams& backward_cell() const { return backward_; }
  std::size_t input_dim() const { return input_dim_; }

 private:
  ParameterSet params_;
  std::size_t input_dim_;
  ArchConfig arch_;
  GruCellParams forward_;
  GruCellParams backward_;
  LinearParams projection_;
  LinearParams classifier_;
};

/// Stage-II contextual GRU: bi-GRU over a conversation's utterance
/// embeddings (d_model/2 per direction), self-attention over the bi-GRU
/// states, position-wise ReLU feed-forward, linear classifier.
class ContextualGru {
 public:
  ContextualGru(std::size_t input_dim, std::size_t num_classes, const ArchConfig& arch,
                const std::string& prefix = "context");

  /// `utterances` stacks every conversation's utterance embeddings; offsets
  /// delimit conversations.
  ModelOutput forward(Graph& g, Var utterances, const std::vector<std::size_t>& offsets);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  bool self_attention() const { return arch_.self_attention; }

 private:
  ParameterSet params_;
  ArchConfig arch_;
  GruCellParams forward_;
  GruCellParams backward_;
  AttentionParams attention_;
  FeedForwardParams feed_forward_;
  LinearParams classifier_;
};

/// Stage-III fusion: co-attention over the two modality sequences of each
/// conversation, position-wise feed-forward 2*d_model -> d_ff -> d_model,
/// linear classifier.
class FusionModel {
 public:
  FusionModel(std::size_t num_classes, const ArchConfig& arch, const std::string& prefix = "fusion");

  ModelOutput forward(Graph& g, Var audio, Var text, const std::vector<std::size_t>& offsets);

  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const CoAttentionParams& co_attention() const { return co_attention_; }

 private:
  ParameterSet params_;
  ArchConfig arch_;
  CoAttentionParams co_attention_;
  FeedForwardParams feed_forward_;
  LinearParams classifier_;
};

/// Rows [offsets[i], offsets[i+1]) of `stacked` as a separate Var.
Var slice_rows(Var stacked, std::size_t begin, std::size_t end);

}  // namespace hierfuse
