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
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "hierfuse/params.hpp"
#include "hierfuse/rng.hpp"
#include "hierfuse/tensor.hpp"

namespace hierfuse {

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/// Reverse-mode tape. One Graph is built per forward pass and discarded after
/// `backward`; parameters live outside the graph and receive accumulated
/// gradients when the tape is replayed.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor& out_value, const Tensor& out_grad)>;

  explicit Graph(bool training = false, std::uint64_t dropout_seed = 0);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter. Repeated calls for the same parameter share a node.
  Var param(Parameter& p);

  /// Registers an op result. `fn` runs during backward when the node's
  /// gradient is non-zero; it pulls parent gradients through `grad_target`.
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer to accumulate into, or nullptr when the node does not
  /// require a gradient.
  Tensor* grad_target(Var v);

  /// Seeds d(root)/d(root) = 1 for a 1x1 root and accumulates into every
  /// reachable parameter's `grad`.
  void backward(Var root);

  bool training() const noexcept { return training_; }
  Rng& rng() { return rng_; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
  bool training_;
  Rng rng_;
};

// Elementwise binary ops broadcast `b` over `a` when `b` is the same shape,
// a single row (1 x cols), a single column (rows x 1) or a scalar (1 x 1).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);

Var matmul(Var a, Var b);
/// a * b^T; weight matrices are stored out x in, so `linear` uses this form.
Var matmul_bt(Var a, Var b);
Var transpose(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
Var relu(Var a);

/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
/// Row-wise layer normalization with affine gamma/beta (length cols).
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var l2_normalize_rows(Var a);
Var dropout(Var a, double rate);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
/// Row gather; index -1 produces a zero row.
Var gather_rows(Var a, std::vector<std::int64_t> indices);
/// Mean over each segment [offsets[i], offsets[i+1]) of rows.
Var segment_mean(Var a, std::vector<std::size_t> offsets);
/// Zero-padded im2col for a 1-D convolution applied independently to every
/// segment of rows: output row t holds rows t-pad .. t-pad+kernel-1 of its
/// own segment, concatenated.
Var im2col_1d(Var a, std::vector<std::size_t> offsets, std::size_t kernel, std::size_t pad);

Var sum(Var a);
Var mean(Var a);

}  // namespace hierfuse
