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

#include "hierfuse/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "hierfuse/error.hpp"

namespace hierfuse {

const Tensor& Var::value() const { return graph->value(*this); }

Graph::Graph(bool training, std::uint64_t dropout_seed) : training_(training), rng_(dropout_seed) {
  nodes_.reserve(256);
}

Var Graph::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node node;
  node.value = p.value;
  node.param = &p;
  node.needs_grad = true;
  nodes_.push_back(std::move(node));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Graph::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.graph != this) fail(ErrorCode::kShape, "operands belong to different graphs");
    node.needs_grad = node.needs_grad || nodes_[p.id].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor* Graph::grad_target(Var v) {
  Node& node = nodes_[v.id];
  if (!node.needs_grad) return nullptr;
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return &node.grad;
}

void Graph::backward(Var root) {
  Node& r = nodes_[root.id];
  require(r.value.size() == 1, ErrorCode::kShape, "backward root must be a scalar, got " + r.value.shape_string());
  if (!r.needs_grad) return;
  r.grad = Tensor(r.value.shape());
  r.grad[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.grad.empty()) continue;
    if (node.param != nullptr) {
      Parameter& p = *node.param;
      if (p.grad.empty() || !p.grad.same_shape(p.value)) p.grad = Tensor(p.value.shape());
      auto dst = p.grad.values();
      auto src = node.grad.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else if (node.backward) {
      // Ops never allocate nodes during backward, so these references stay valid.
      node.backward(*this, node.value, node.grad);
    }
  }
}

namespace {

enum class Broadcast { kSame, kRow, kCol, kScalar };

Broadcast broadcast_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::kSame;
  if (b.size() == 1) return Broadcast::kScalar;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::kRow;
  if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::kCol;
  fail(ErrorCode::kShape, std::string(op) + ": cannot broadcast " + b.shape_string() + " onto " + a.shape_string());
}

inline std::size_t bindex(Broadcast mode, std::size_t r, std::size_t c, std::size_t cols) {
  switch (mode) {
    case Broadcast::kSame: return r * cols + c;
    case Broadcast::kRow: return c;
    case Broadcast::kCol: return r;
    case Broadcast::kScalar: return 0;
  }
  return 0;
}

template <typename Forward, typename GradA, typename GradB>
Var binary(Var a, Var b, const char* name, Forward f, GradA ga_fn, GradB gb_fn) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  const Broadcast mode = broadcast_mode(A, B, name);
  Tensor out(A.shape());
  const std::size_t rows = A.rows(), cols = A.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = f(A[r * cols + c], B[bindex(mode, r, c, cols)]);
  const Var parents[] = {a, b};
  return g.record(std::move(out), parents,
                  [a, b, mode, rows, cols, ga_fn, gb_fn](Graph& g, const Tensor&, const Tensor& dy) {
                    const Tensor& A = g.value(a);
                    const Tensor& B = g.value(b);
                    Tensor* dA = g.grad_target(a);
                    Tensor* dB = g.grad_target(b);
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t c = 0; c < cols; ++c) {
                        const std::size_t i = r * cols + c;
                        const std::size_t j = bindex(mode, r, c, cols);
                        if (dA) (*dA)[i] += ga_fn(A[i], B[j], dy[i]);
                        if (dB) (*dB)[j] += gb_fn(A[i], B[j], dy[i]);
                      }
                  });
}

// `df(x, y)` is the derivative expressed through the input x and output y.
template <typename Forward, typename Derivative>
Var unary(Var a, Forward f, Derivative df) {
  const Tensor& A = a.value();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = f(A[i]);
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents, [a, df](Graph& g, const Tensor& y, const Tensor& dy) {
    Tensor* dA = g.grad_target(a);
    if (!dA) return;
    const Tensor& A = g.value(a);
    for (std::size_t i = 0; i < A.size(); ++i) (*dA)[i] += dy[i] * df(A[i], y[i]);
  });
}

void require_matrix(const Tensor& t, const char* op) {
  require(t.rank() == 1 || t.rank() == 2, ErrorCode::kShape,
          std::string(op) + ": expected a matrix, got " + t.shape_string());
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double d) { return d; },
      [](double, double, double d) { return d; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double d) { return d; },
      [](double, double, double d) { return -d; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double d) { return d * y; },
      [](double x, double, double d) { return d * x; });
}

Var scale(Var a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Var sigmoid(Var a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var matmul(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul");
  require_matrix(B, "matmul");
  const std::size_t n = A.rows(), k = A.cols(), m = B.cols();
  require(B.rows() == k, ErrorCode::kShape, "matmul: " + A.shape_string() + " x " + B.shape_string());
  Tensor out = Tensor::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = &B[p * m];
      double* orow = &out[i * m];
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  const Var parents[] = {a, b};
  return a.graph->record(std::move(out), parents, [a, b, n, k, m](Graph& g, const Tensor&, const Tensor& dy) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (Tensor* dA = g.grad_target(a))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += dy[i * m + j] * B[p * m + j];
          (*dA)[i * k + p] += acc;
        }
    if (Tensor* dB = g.grad_target(b))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < m; ++j) (*dB)[p * m + j] += av * dy[i * m + j];
        }
  });
}

Var matmul_bt(Var a, Var b) {
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  require_matrix(A, "matmul_bt");
  require_matrix(B, "matmul_bt");
  const std::size_t n = A.rows(), k = A.cols(), m = B.rows();
  require(B.cols() == k, ErrorCode::kShape, "matmul_bt: " + A.shape_string() + " x " + B.shape_string() + "^T");
  Tensor out = Tensor::zeros(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &A[i * k];
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &B[j * k];
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      out[i * m + j] = acc;
    }
  }
  const Var parents[] = {a, b};
  return a.graph->record(std::move(out), parents, [a, b, n, k, m](Graph& g, const Tensor&, const Tensor& dy) {
    const Tensor& A = g.value(a);
    const Tensor& B = g.value(b);
    if (Tensor* dA = g.grad_target(a))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double d = dy[i * m + j];
          if (d == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) (*dA)[i * k + p] += d * B[j * k + p];
        }
    if (Tensor* dB = g.grad_target(b))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          const double d = dy[i * m + j];
          if (d == 0.0) continue;
          for (std::size_t p = 0; p < k; ++p) (*dB)[j * k + p] += d * A[i * k + p];
        }
  });
}

Var transpose(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "transpose");
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = A[i * m + j];
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents, [a, n, m](Graph& g, const Tensor&, const Tensor& dy) {
    if (Tensor* dA = g.grad_target(a))
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) (*dA)[i * m + j] += dy[j * n + i];
  });
}

Var softmax_rows(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "softmax_rows");
  require(A.all_finite(), ErrorCode::kNumericDomain, "softmax_rows: non-finite input");
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(A.shape());
  for (std::size_t i = 0; i < n; ++i) {
    auto x = A.row(i);
    auto y = out.row(i);
    const double mx = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (std::size_t j = 0; j < m; ++j) total += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < m; ++j) y[j] /= total;
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents, [a, n, m](Graph& g, const Tensor& y, const Tensor& dy) {
    Tensor* dA = g.grad_target(a);
    if (!dA) return;
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < m; ++j) dot += dy[i * m + j] * y[i * m + j];
      for (std::size_t j = 0; j < m; ++j) (*dA)[i * m + j] += y[i * m + j] * (dy[i * m + j] - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& X = x.value();
  require_matrix(X, "layer_norm");
  const std::size_t n = X.rows(), d = X.cols();
  require(gamma.value().size() == d && beta.value().size() == d, ErrorCode::kShape,
          "layer_norm: affine parameters must have length " + std::to_string(d));
  require(X.all_finite(), ErrorCode::kNumericDomain, "layer_norm: non-finite input");
  const Tensor& G = gamma.value();
  const Tensor& Bt = beta.value();
  Tensor out(X.shape());
  // Normalized core and per-row inverse std, kept for backward.
  Tensor xhat(X.shape());
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = X.row(i);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * inv_std[i];
      out[i * d + j] = G[j] * xhat[i * d + j] + Bt[j];
    }
  }
  const Var parents[] = {x, gamma, beta};
  return x.graph->record(
      std::move(out), parents,
      [x, gamma, beta, n, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Graph& g, const Tensor&,
                                                                                    const Tensor& dy) {
        const Tensor& G = g.value(gamma);
        if (Tensor* dG = g.grad_target(gamma))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*dG)[j] += dy[i * d + j] * xhat[i * d + j];
        if (Tensor* dB = g.grad_target(beta))
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) (*dB)[j] += dy[i * d + j];
        if (Tensor* dX = g.grad_target(x)) {
          const double inv_d = 1.0 / static_cast<double>(d);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_g = 0.0, mean_gx = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double gj = dy[i * d + j] * G[j];
              mean_g += gj;
              mean_gx += gj * xhat[i * d + j];
            }
            mean_g *= inv_d;
            mean_gx *= inv_d;
            for (std::size_t j = 0; j < d; ++j) {
              const double gj = dy[i * d + j] * G[j];
              (*dX)[i * d + j] += inv_std[i] * (gj - mean_g - xhat[i * d + j] * mean_gx);
            }
          }
        }
      });
}

Var l2_normalize_rows(Var a) {
  const Tensor& A = a.value();
  require_matrix(A, "l2_normalize_rows");
  const std::size_t n = A.rows(), m = A.cols();
  Tensor out(A.shape());
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (double v : A.row(i)) s += v * v;
    norms[i] = std::max(std::sqrt(s), 1e-12);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = A[i * m + j] / norms[i];
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents,
                         [a, n, m, norms = std::move(norms)](Graph& g, const Tensor& y, const Tensor& dy) {
                           Tensor* dA = g.grad_target(a);
                           if (!dA) return;
                           for (std::size_t i = 0; i < n; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < m; ++j) dot += y[i * m + j] * dy[i * m + j];
                             for (std::size_t j = 0; j < m; ++j)
                               (*dA)[i * m + j] += (dy[i * m + j] - y[i * m + j] * dot) / norms[i];
                           }
                         });
}

Var dropout(Var a, double rate) {
  Graph& g = *a.graph;
  if (!g.training() || rate <= 0.0) return a;
  require(rate < 1.0, ErrorCode::kConfig, "dropout rate must be < 1");
  const Tensor& A = a.value();
  Tensor keep(A.shape());
  const double inv = 1.0 / (1.0 - rate);
  for (double& k : keep.values()) k = g.rng().uniform() >= rate ? inv : 0.0;
  return mul(a, g.constant(std::move(keep)));
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kShape, "concat_cols: no inputs");
  const std::size_t n = parts[0].rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.rows() == n, ErrorCode::kShape, "concat_cols: row count mismatch");
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out = Tensor::zeros(n, total);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Tensor& P = p.value();
    const std::size_t w = P.cols();
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(&P[i * w], w, &out[i * total + offset]);
    offset += w;
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph->record(std::move(out), parts,
                                [ps, widths, n, total](Graph& g, const Tensor&, const Tensor& dy) {
                                  std::size_t offset = 0;
                                  for (std::size_t k = 0; k < ps.size(); ++k) {
                                    const std::size_t w = widths[k];
                                    if (Tensor* dP = g.grad_target(ps[k]))
                                      for (std::size_t i = 0; i < n; ++i)
                                        for (std::size_t j = 0; j < w; ++j)
                                          (*dP)[i * w + j] += dy[i * total + offset + j];
                                    offset += w;
                                  }
                                });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kShape, "concat_rows: no inputs");
  const std::size_t m = parts[0].cols();
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.cols() == m, ErrorCode::kShape, "concat_rows: column count mismatch");
    total += p.rows();
  }
  std::vector<double> values;
  values.reserve(total * m);
  for (const Var& p : parts) {
    auto v = p.value().values();
    values.insert(values.end(), v.begin(), v.end());
  }
  std::vector<Var> ps(parts.begin(), parts.end());
  return parts[0].graph->record(Tensor({total, m}, std::move(values)), parts,
                                [ps](Graph& g, const Tensor&, const Tensor& dy) {
                                  std::size_t offset = 0;
                                  for (const Var& p : ps) {
                                    const std::size_t len = g.value(p).size();
                                    if (Tensor* dP = g.grad_target(p))
                                      for (std::size_t k = 0; k < len; ++k) (*dP)[k] += dy[offset + k];
                                    offset += len;
                                  }
                                });
}

Var gather_rows(Var a, std::vector<std::int64_t> indices) {
  const Tensor& A = a.value();
  require_matrix(A, "gather_rows");
  require(!indices.empty(), ErrorCode::kShape, "gather_rows: no indices");
  const std::size_t m = A.cols();
  const auto n_src = static_cast<std::int64_t>(A.rows());
  Tensor out = Tensor::zeros(indices.size(), m);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::int64_t src = indices[i];
    require(src >= -1 && src < n_src, ErrorCode::kShape, "gather_rows: index out of range");
    if (src >= 0) std::copy_n(&A[static_cast<std::size_t>(src) * m], m, &out[i * m]);
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents,
                         [a, m, indices = std::move(indices)](Graph& g, const Tensor&, const Tensor& dy) {
                           Tensor* dA = g.grad_target(a);
                           if (!dA) return;
                           for (std::size_t i = 0; i < indices.size(); ++i) {
                             if (indices[i] < 0) continue;
                             const auto src = static_cast<std::size_t>(indices[i]);
                             for (std::size_t j = 0; j < m; ++j) (*dA)[src * m + j] += dy[i * m + j];
                           }
                         });
}

Var segment_mean(Var a, std::vector<std::size_t> offsets) {
  const Tensor& A = a.value();
  require_matrix(A, "segment_mean");
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == A.rows(), ErrorCode::kShape,
          "segment_mean: offsets must span all rows");
  const std::size_t segments = offsets.size() - 1, m = A.cols();
  Tensor out = Tensor::zeros(segments, m);
  for (std::size_t s = 0; s < segments; ++s) {
    require(offsets[s + 1] > offsets[s], ErrorCode::kShape, "segment_mean: empty segment");
    const double inv = 1.0 / static_cast<double>(offsets[s + 1] - offsets[s]);
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
      for (std::size_t j = 0; j < m; ++j) out[s * m + j] += A[r * m + j] * inv;
  }
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents,
                         [a, m, offsets = std::move(offsets)](Graph& g, const Tensor&, const Tensor& dy) {
                           Tensor* dA = g.grad_target(a);
                           if (!dA) return;
                           for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                             const double inv = 1.0 / static_cast<double>(offsets[s + 1] - offsets[s]);
                             for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r)
                               for (std::size_t j = 0; j < m; ++j) (*dA)[r * m + j] += dy[s * m + j] * inv;
                           }
                         });
}

Var im2col_1d(Var a, std::vector<std::size_t> offsets, std::size_t kernel, std::size_t pad) {
  const Tensor& A = a.value();
  require_matrix(A, "im2col_1d");
  require(kernel >= 1 && pad < kernel, ErrorCode::kShape, "im2col_1d: invalid kernel/padding");
  require(offsets.size() >= 2 && offsets.front() == 0 && offsets.back() == A.rows(), ErrorCode::kShape,
          "im2col_1d: offsets must span all rows");
  // Source row for every (output row, tap); -1 marks zero padding.
  const std::size_t n = A.rows();
  std::vector<std::int64_t> source(n * kernel, -1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const auto begin = static_cast<std::int64_t>(offsets[s]);
    const auto end = static_cast<std::int64_t>(offsets[s + 1]);
    for (std::int64_t t = begin; t < end; ++t)
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::int64_t src = t - static_cast<std::int64_t>(pad) + static_cast<std::int64_t>(k);
        if (src >= begin && src < end) source[static_cast<std::size_t>(t) * kernel + k] = src;
      }
  }
  const std::size_t m = A.cols();
  Tensor out = Tensor::zeros(n, kernel * m);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t k = 0; k < kernel; ++k) {
      const std::int64_t src = source[t * kernel + k];
      if (src >= 0) std::copy_n(&A[static_cast<std::size_t>(src) * m], m, &out[t * kernel * m + k * m]);
    }
  const Var parents[] = {a};
  return a.graph->record(std::move(out), parents,
                         [a, m, kernel, n, source = std::move(source)](Graph& g, const Tensor&, const Tensor& dy) {
                           Tensor* dA = g.grad_target(a);
                           if (!dA) return;
                           for (std::size_t t = 0; t < n; ++t)
                             for (std::size_t k = 0; k < kernel; ++k) {
                               const std::int64_t src = source[t * kernel + k];
                               if (src < 0) continue;
                               const auto s = static_cast<std::size_t>(src);
                               for (std::size_t j = 0; j < m; ++j) (*dA)[s * m + j] += dy[t * kernel * m + k * m + j];
                             }
                         });
}

Var sum(Var a) {
  const Tensor& A = a.value();
  double total = 0.0;
  for (double v : A.values()) total += v;
  const Var parents[] = {a};
  return a.graph->record(Tensor({1, 1}, {total}), parents, [a](Graph& g, const Tensor&, const Tensor& dy) {
    if (Tensor* dA = g.grad_target(a))
      for (double& v : dA->values()) v += dy[0];
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

}  // namespace hierfuse
