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

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hierfuse/autograd.hpp"
#include "hierfuse/error.hpp"
#include "hierfuse/gradcheck.hpp"
#include "hierfuse/layers.hpp"
#include "hierfuse/losses.hpp"
#include "hierfuse/optim.hpp"
#include "hierfuse/sequence.hpp"
#include "test_util.hpp"

namespace hierfuse {
namespace {

using testing::random_tensor;

// Contracts a tensor-valued op to a scalar with fixed random weights so every
// output entry contributes a distinct gradient.
Var contract(Graph& g, Var out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, g.constant(random_tensor(out.rows(), out.cols(), rng))));
}

TEST(Softmax, UniformRow) {
  Graph g;
  Tensor y = softmax_rows(g.constant(Tensor::from_rows({{0, 0}}))).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, LogThreeRow) {
  Graph g;
  Tensor y = softmax_rows(g.constant(Tensor::from_rows({{0, std::log(3.0)}}))).value();
  EXPECT_NEAR(y[0], 0.25, 1e-12);
  EXPECT_NEAR(y[1], 0.75, 1e-12);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Graph g;
  Tensor y = softmax_rows(g.constant(Tensor::from_rows({{1000, 1000}}))).value();
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(Softmax, NonFiniteInputIsNumericDomainError) {
  Graph g;
  try {
    softmax_rows(g.constant(Tensor::from_rows({{0, NAN}})));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNumericDomain);
  }
}

TEST(Softmax, RowsSumToOneAndShiftInvariant) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(8), m = 1 + rng.below(8);
    Tensor x = random_tensor(n, m, rng, 5.0);
    Tensor shifted = x;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = 10.0 * rng.normal();
      for (std::size_t j = 0; j < m; ++j) shifted(i, j) += c;
    }
    Graph g;
    Tensor y = softmax_rows(g.constant(x)).value();
    Tensor ys = softmax_rows(g.constant(shifted)).value();
    for (std::size_t i = 0; i < n; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        EXPECT_GE(y(i, j), 0.0);
        EXPECT_NEAR(y(i, j), ys(i, j), 1e-6);
        total += y(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-6);
    }
  }
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  Graph g;
  Var x = g.constant(Tensor::from_rows({{5, 5, 5, 5}}));
  Tensor y = layer_norm(x, g.constant(Tensor::full(1, 4, 1.0)), g.constant(Tensor::zeros(1, 4))).value();
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoElementRowIsUnitScaled) {
  Graph g;
  Var x = g.constant(Tensor::from_rows({{1, -1}}));
  Tensor y = layer_norm(x, g.constant(Tensor::full(1, 2, 1.0)), g.constant(Tensor::zeros(1, 2)), 1e-14).value();
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], -1.0, 1e-12);
}

TEST(LayerNorm, ZeroGammaCollapsesToBeta) {
  Rng rng(3);
  Graph g;
  Var x = g.constant(random_tensor(3, 5, rng));
  Tensor y = layer_norm(x, g.constant(Tensor::zeros(1, 5)), g.constant(Tensor::full(1, 5, 2.5))).value();
  for (double v : y.values()) EXPECT_EQ(v, 2.5);
}

TEST(LayerNorm, NormalizedRowsHaveZeroMeanUnitVariance) {
  Rng rng(5);
  Graph g;
  Tensor x = random_tensor(6, 8, rng, 3.0);
  Tensor y = layer_norm(g.constant(x), g.constant(Tensor::full(1, 8, 1.0)), g.constant(Tensor::zeros(1, 8))).value();
  for (std::size_t i = 0; i < 6; ++i) {
    double mu = 0, var = 0;
    for (double v : y.row(i)) mu += v;
    mu /= 8;
    for (double v : y.row(i)) var += (v - mu) * (v - mu);
    var /= 8;
    EXPECT_NEAR(mu, 0.0, 1e-5);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(GruCell, ZeroWeightsZeroStateStaysZero) {
  ParameterSet params;
  GruCellParams cell = make_gru_cell(params, "gru", 3, 4);
  Graph g;
  Tensor h = gru_cell(g, cell, g.constant(Tensor::zeros(1, 3)), g.constant(Tensor::zeros(1, 4))).value();
  for (double v : h.values()) EXPECT_EQ(v, 0.0);
}

TEST(GruCell, ZeroWeightsHalveHistory) {
  ParameterSet params;
  GruCellParams cell = make_gru_cell(params, "gru", 3, 4);
  Graph g;
  Tensor prev = Tensor::from_rows({{1.0, -2.0, 0.5, 4.0}});
  Tensor h = gru_cell(g, cell, g.constant(Tensor::from_rows({{7, -3, 2}})), g.constant(prev)).value();
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(h[i], 0.5 * prev[i]);
}

TEST(GruCell, DimensionMismatchIsShapeError) {
  ParameterSet params;
  GruCellParams cell = make_gru_cell(params, "gru", 3, 4);
  Graph g;
  try {
    gru_cell(g, cell, g.constant(Tensor::zeros(1, 2)), g.constant(Tensor::zeros(1, 4)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShape);
  }
}

TEST(GruCell, ParameterShapesConform) {
  ParameterSet params;
  GruCellParams cell = make_gru_cell(params, "gru", 3, 5);
  for (Parameter* w : {cell.w_z, cell.w_r, cell.w_h}) EXPECT_EQ(w->value.shape(), (std::vector<std::size_t>{5, 3}));
  for (Parameter* u : {cell.u_z, cell.u_r, cell.u_h}) EXPECT_EQ(u->value.shape(), (std::vector<std::size_t>{5, 5}));
  for (Parameter* b : {cell.b_z, cell.b_r, cell.b_h}) EXPECT_EQ(b->value.shape(), (std::vector<std::size_t>{5}));
}

TEST(GruCell, GradientMatchesFiniteDifferences) {
  ParameterSet params;
  GruCellParams cell = make_gru_cell(params, "gru", 3, 4);
  Rng rng(17);
  testing::randomize(params, rng);
  Parameter& x = params.add("x", {2, 3});
  Parameter& h = params.add("h", {2, 4});
  x.value = random_tensor(2, 3, rng);
  h.value = random_tensor(2, 4, rng);
  auto report = grad_check(
      [&](Graph& g) { return contract(g, gru_cell(g, cell, g.param(x), g.param(h)), 99); }, params.all());
  EXPECT_TRUE(report.passed) << report.worst_parameter << " err " << report.max_rel_error;
  EXPECT_LT(report.max_rel_error, 1e-4);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParameterSet params;
  Parameter& p = params.add("p", {3});
  p.value = Tensor::vector({1.0, -2.0, 3.0});
  p.zero_grad();
  Adam adam({.learning_rate = 0.1});
  adam.step(params.all());
  EXPECT_EQ(p.value, Tensor::vector({1.0, -2.0, 3.0}));
  EXPECT_EQ(adam.step_count(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterSet params;
  Parameter& p = params.add("p", {1});
  p.grad[0] = 1.0;
  Adam adam({.learning_rate = 0.1});
  EXPECT_FALSE(adam.has_moments(p));
  adam.step(params.all());
  EXPECT_TRUE(adam.has_moments(p));
  EXPECT_NEAR(p.value[0], -0.1, 1e-8);
}

TEST(Adam, IdenticalRunsAreBitwiseIdentical) {
  auto run = [] {
    ParameterSet params;
    Parameter& p = params.add("w", {4, 3});
    Rng init(123);
    init_default(params, init);
    Adam adam({.learning_rate = 0.01});
    Rng grads(7);
    for (int step = 0; step < 10; ++step) {
      for (double& g : p.grad.values()) g = grads.normal();
      adam.step(params.all());
    }
    return p.value;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParameterSet params;
  params.add("fine", {2});
  Parameter& bad = params.add("encoder.bad", {2});
  bad.grad[1] = INFINITY;
  Adam adam({.learning_rate = 0.1});
  try {
    adam.step(params.all());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteGradient);
    EXPECT_NE(std::string(e.what()).find("encoder.bad"), std::string::npos);
  }
  EXPECT_EQ(adam.step_count(), 0u);
}

TEST(Clip, UnderThresholdUnchanged) {
  Tensor g = Tensor::vector({0.06, 0.08});
  Tensor* grads[] = {&g};
  EXPECT_NEAR(clip_gradients_l2(grads, 0.25), 0.1, 1e-15);
  EXPECT_EQ(g, Tensor::vector({0.06, 0.08}));
}

TEST(Clip, ScalesToMaxNorm) {
  Tensor g = Tensor::vector({0.3, 0.4});
  Tensor* grads[] = {&g};
  clip_gradients_l2(grads, 0.25);
  EXPECT_NEAR(g[0], 0.15, 1e-15);
  EXPECT_NEAR(g[1], 0.2, 1e-15);
}

TEST(Clip, RandomInputsBoundedAndIdempotent) {
  Rng rng(29);
  for (int trial = 0; trial < 200; ++trial) {
    Tensor a = random_tensor(1 + rng.below(5), 1 + rng.below(5), rng, rng.uniform(0.0, 2.0));
    Tensor b = random_tensor(1 + rng.below(5), 1, rng, rng.uniform(0.0, 2.0));
    Tensor* grads[] = {&a, &b};
    clip_gradients_l2(grads, 0.25);
    const Tensor* view[] = {&a, &b};
    EXPECT_LE(global_l2_norm(view), 0.25 + 1e-9);
    const Tensor a1 = a, b1 = b;
    clip_gradients_l2(grads, 0.25);
    EXPECT_EQ(a, a1);
    EXPECT_EQ(b, b1);
  }
}

TEST(Clip, PreservesDirection) {
  Tensor g = Tensor::vector({3.0, -4.0, 12.0});
  Tensor* grads[] = {&g};
  clip_gradients_l2(grads, 1.0);
  EXPECT_NEAR(g[0] / g[2], 0.25, 1e-15);
  EXPECT_NEAR(g[1] / g[2], -4.0 / 12.0, 1e-15);
}

TEST(GradCheck, Square) {
  ParameterSet params;
  Parameter& x = params.add("x", {1});
  x.value[0] = 3.0;
  auto report = grad_check([&](Graph& g) { return mul(g.param(x), g.param(x)); }, params.all());
  EXPECT_NEAR(x.grad[0], 6.0, 1e-12);
  EXPECT_LT(report.max_rel_error, 1e-8);
  EXPECT_TRUE(report.passed);
}

TEST(GradCheck, SoftmaxCrossEntropyComposite) {
  Rng rng(41);
  ParameterSet params;
  Parameter& logits = params.add("logits", {5, 4});
  logits.value = random_tensor(5, 4, rng, 2.0);
  const std::vector<int> labels{0, 3, 1, 1, 2};
  auto report = grad_check([&](Graph& g) { return cross_entropy(g.param(logits), labels); }, params.all());
  EXPECT_LT(report.max_rel_error, 1e-6) << report.worst_parameter;
}

TEST(GradCheck, ReportsFailureInsteadOfThrowing) {
  ParameterSet params;
  Parameter& x = params.add("x", {1});
  x.value[0] = 1.0;
  // A deliberately wrong backward: claims d/dx = 0 for f(x) = x^3.
  auto report = grad_check(
      [&](Graph& g) {
        Var v = g.param(x);
        const double val = std::pow(v.value()[0], 3);
        const Var parents[] = {v};
        return g.record(Tensor({1, 1}, {val}), parents, [](Graph&, const Tensor&, const Tensor&) {});
      },
      params.all());
  EXPECT_FALSE(report.passed);
  EXPECT_EQ(report.worst_parameter, "x");
}

struct OpCase {
  const char* name;
  std::function<Var(Graph&, Var, Var)> op;
  std::size_t a_rows, a_cols, b_rows, b_cols;
};

void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

class OpGradient : public ::testing::TestWithParam<OpCase> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  const OpCase& c = GetParam();
  Rng rng(1000 + std::hash<std::string>{}(c.name) % 1000);
  for (int trial = 0; trial < 3; ++trial) {
    ParameterSet params;
    Parameter& a = params.add("a", {c.a_rows, c.a_cols});
    Parameter& b = params.add("b", {c.b_rows, c.b_cols});
    a.value = random_tensor(c.a_rows, c.a_cols, rng);
    b.value = random_tensor(c.b_rows, c.b_cols, rng);
    auto report = grad_check([&](Graph& g) { return contract(g, c.op(g, g.param(a), g.param(b)), 7 + trial); },
                             params.all());
    EXPECT_LT(report.max_rel_error, 1e-4) << c.name << " worst " << report.worst_parameter << "["
                                          << report.worst_index << "] analytic " << report.worst_analytic
                                          << " numeric " << report.worst_numeric;
  }
}

INSTANTIATE_TEST_SUITE_P(
    Ops, OpGradient,
    ::testing::Values(
        OpCase{"add_same", [](Graph&, Var a, Var b) { return add(a, b); }, 3, 4, 3, 4},
        OpCase{"add_row", [](Graph&, Var a, Var b) { return add(a, b); }, 3, 4, 1, 4},
        OpCase{"sub_col", [](Graph&, Var a, Var b) { return sub(a, b); }, 3, 4, 3, 1},
        OpCase{"mul_scalar", [](Graph&, Var a, Var b) { return mul(a, b); }, 3, 4, 1, 1},
        OpCase{"mul_same", [](Graph&, Var a, Var b) { return mul(a, b); }, 5, 2, 5, 2},
        OpCase{"matmul", [](Graph&, Var a, Var b) { return matmul(a, b); }, 3, 5, 5, 4},
        OpCase{"matmul_bt", [](Graph&, Var a, Var b) { return matmul_bt(a, b); }, 3, 5, 6, 5},
        OpCase{"transpose", [](Graph&, Var a, Var b) { return add(transpose(a), b); }, 3, 5, 5, 3},
        OpCase{"sigmoid", [](Graph&, Var a, Var b) { return mul(sigmoid(a), b); }, 4, 4, 4, 4},
        OpCase{"tanh", [](Graph&, Var a, Var b) { return mul(tanh(a), b); }, 4, 4, 4, 4},
        OpCase{"relu", [](Graph&, Var a, Var b) { return mul(relu(a), b); }, 4, 4, 4, 4},
        OpCase{"softmax", [](Graph&, Var a, Var b) { return mul(softmax_rows(a), b); }, 3, 6, 3, 6},
        OpCase{"layer_norm",
               [](Graph&, Var a, Var b) {
                 Var gamma = slice_rows(b, 0, 1);
                 return layer_norm(a, gamma, scale(gamma, 0.5));
               },
               4, 6, 2, 6},
        OpCase{"l2_normalize", [](Graph&, Var a, Var b) { return mul(l2_normalize_rows(a), b); }, 4, 5, 4, 5},
        OpCase{"concat_cols",
               [](Graph&, Var a, Var b) {
                 const Var parts[] = {a, b};
                 return concat_cols(parts);
               },
               3, 2, 3, 4},
        OpCase{"concat_rows",
               [](Graph&, Var a, Var b) {
                 const Var parts[] = {a, b};
                 return concat_rows(parts);
               },
               2, 3, 4, 3},
        OpCase{"gather_rows", [](Graph&, Var a, Var) { return gather_rows(a, {2, -1, 0, 2, 1}); }, 3, 4, 1, 1},
        OpCase{"segment_mean", [](Graph&, Var a, Var) { return segment_mean(a, {0, 2, 3, 6}); }, 6, 3, 1, 1},
        OpCase{"im2col", [](Graph&, Var a, Var) { return im2col_1d(a, {0, 1, 4, 7}, 3, 1); }, 7, 2, 1, 1},
        OpCase{"mean", [](Graph&, Var a, Var b) { return mul(mean(a), b); }, 3, 3, 1, 1}),
    [](const ::testing::TestParamInfo<OpCase>& info) { return std::string(info.param.name); });

}  // namespace
}  // namespace hierfuse
