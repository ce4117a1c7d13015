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

#include "hierfuse/gradient_suite.hpp"

#include <functional>

#include "hierfuse/attention.hpp"
#include "hierfuse/losses.hpp"
#include "hierfuse/rng.hpp"
#include "hierfuse/sequence.hpp"

namespace hierfuse {

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t({rows, cols});
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

void randomize(ParameterSet& params, Rng& rng, double scale = 0.5) {
  for (Parameter* p : params.all())
    for (double& v : p->value.values()) v = rng.uniform(-scale, scale);
}

/// sum(x * R) / size(x) for a fixed random R, keeping the loss O(1) so
/// finite-difference roundoff stays below the comparison floor.
Var readout(Var x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor r = random_tensor(x.rows(), x.cols(), rng);
  for (double& v : r.values()) v /= static_cast<double>(x.value().size());
  return sum(mul(x, x.graph->constant(std::move(r))));
}

ArchConfig small_arch() {
  ArchConfig a;
  a.d_model = 8;
  a.d_ff = 16;
  a.dropout = 0.0;
  return a;
}

class Suite {
 public:
  Suite(std::uint64_t seed, const GradCheckOptions& options) : rng_(seed), options_(options) {}

  void check(const std::string& name, const std::vector<Parameter*>& params, const LossBuilder& loss) {
    results_.push_back({name, grad_check(loss, params, options_)});
  }
  void check(const std::string& name, ParameterSet& params, const LossBuilder& loss) {
    check(name, params.all(), loss);
  }
  Rng& rng() { return rng_; }
  std::uint64_t next_seed() { return rng_.next_u64(); }
  std::vector<SuiteResult> take() { return std::move(results_); }

 private:
  Rng rng_;
  GradCheckOptions options_;
  std::vector<SuiteResult> results_;
};

using BinaryOp = std::function<Var(Var, Var)>;

void op_checks(Suite& s) {
  struct Case {
    const char* name;
    BinaryOp op;
    std::size_t ar, ac, br, bc;
  };
  const Case cases[] = {
      {"op.add_broadcast", [](Var a, Var b) { return add(a, b); }, 3, 4, 1, 4},
      {"op.sub_column", [](Var a, Var b) { return sub(a, b); }, 3, 4, 3, 1},
      {"op.mul", [](Var a, Var b) { return mul(a, b); }, 3, 4, 3, 4},
      {"op.matmul", [](Var a, Var b) { return matmul(a, b); }, 3, 5, 5, 4},
      {"op.matmul_bt", [](Var a, Var b) { return matmul_bt(a, b); }, 3, 5, 6, 5},
      {"op.transpose", [](Var a, Var b) { return add(transpose(a), b); }, 3, 5, 5, 3},
      {"op.sigmoid", [](Var a, Var b) { return mul(sigmoid(a), b); }, 4, 4, 4, 4},
      {"op.tanh", [](Var a, Var b) { return mul(tanh(a), b); }, 4, 4, 4, 4},
      {"op.relu", [](Var a, Var b) { return mul(relu(a), b); }, 4, 4, 4, 4},
      {"op.softmax_rows", [](Var a, Var b) { return mul(softmax_rows(a), b); }, 3, 5, 3, 5},
      {"op.layer_norm", [](Var a, Var b) { return layer_norm(a, b, b); }, 3, 5, 1, 5},
      {"op.l2_normalize_rows", [](Var a, Var b) { return mul(l2_normalize_rows(a), b); }, 3, 4, 3, 4},
      {"op.concat_cols", [](Var a, Var b) { const Var p[] = {a, b}; return concat_cols(p); }, 3, 2, 3, 4},
      {"op.concat_rows", [](Var a, Var b) { const Var p[] = {a, b}; return concat_rows(p); }, 2, 4, 3, 4},
      {"op.gather_rows", [](Var a, Var b) { return mul(gather_rows(a, {2, 0, 2, -1}), b); }, 3, 4, 4, 4},
      {"op.segment_mean", [](Var a, Var b) { return mul(segment_mean(a, {0, 2, 5}), b); }, 5, 3, 2, 3},
      {"op.im2col_1d", [](Var a, Var b) { return mul(im2col_1d(a, {0, 1, 4}, 3, 1), b); }, 4, 2, 4, 6},
  };
  for (const Case& c : cases) {
    ParameterSet params;
    params.add("a", {c.ar, c.ac}).value = random_tensor(c.ar, c.ac, s.rng());
    params.add("b", {c.br, c.bc}).value = random_tensor(c.br, c.bc, s.rng());
    const std::uint64_t rs = s.next_seed();
    s.check(c.name, params, [&](Graph& g) {
      return readout(c.op(g.param(params.get("a")), g.param(params.get("b"))), rs);
    });
  }
}

void block_checks(Suite& s) {
  const std::size_t d = 8;
  {
    ParameterSet params;
    const GruCellParams cell = make_gru_cell(params, "gru", 6, d);
    params.add("x", {3, 6});
    params.add("h", {3, d});
    randomize(params, s.rng());
    const std::uint64_t rs = s.next_seed();
    s.check("block.gru_cell", params, [&](Graph& g) {
      return readout(gru_cell(g, cell, g.param(params.get("x")), g.param(params.get("h"))), rs);
    });
  }
  {
    ParameterSet params;
    const AttentionParams att = make_attention(params, "self", d);
    params.add("x", {4, d});
    randomize(params, s.rng());
    const std::uint64_t rs = s.next_seed();
    const Mask mask = {1, 1, 0, 1};
    s.check("block.self_attention", params, [&](Graph& g) {
      return readout(self_attention_block(g, att, g.param(params.get("x")), mask), rs);
    });
  }
  {
    ParameterSet params;
    const AttentionParams att = make_attention(params, "cross", d);
    params.add("q", {4, d});
    params.add("kv", {4, d});
    randomize(params, s.rng());
    const std::uint64_t rs = s.next_seed();
    s.check("block.cross_attention", params, [&](Graph& g) {
      return readout(cross_attention_block(g, att, g.param(params.get("q")), g.param(params.get("kv")), {}), rs);
    });
  }
  {
    ParameterSet params;
    const CoAttentionParams co = make_co_attention(params, "co", d);
    params.add("audio", {4, d});
    params.add("text", {4, d});
    randomize(params, s.rng());
    const std::uint64_t rs = s.next_seed();
    s.check("block.co_attention", params, [&](Graph& g) {
      const CrossModalPair pair{g.param(params.get("audio")), g.param(params.get("text")), {1, 1, 1, 0}};
      return readout(co_attention_fuse(g, co, pair), rs);
    });
  }
}

std::vector<int> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
  std::vector<int> labels(n);
  for (auto& l : labels) l = static_cast<int>(rng.below(classes));
  return labels;
}

void loss_checks(Suite& s) {
  const std::size_t n = 6, c = 3;
  ParameterSet params;
  params.add("logits", {n, c}).value = random_tensor(n, c, s.rng(), 2.0);
  params.add("features", {n, 4}).value = random_tensor(n, 4, s.rng());
  const std::vector<int> labels = {0, 1, 0, 2, 1, 0};
  const std::vector<double> weights = {0.5, 1.0, 2.0};
  auto logits = [&](Graph& g) { return g.param(params.get("logits")); };
  auto features = [&](Graph& g) { return l2_normalize_rows(g.param(params.get("features"))); };
  s.check("loss.cross_entropy", params, [&](Graph& g) { return cross_entropy(logits(g), labels); });
  s.check("loss.cross_entropy_weighted", params, [&](Graph& g) { return cross_entropy(logits(g), labels, weights); });
  s.check("loss.sup_con", params, [&](Graph& g) { return sup_con_loss(features(g), labels, 0.5, true); });
  s.check("loss.sup_con_self_inclusive", params,
          [&](Graph& g) { return sup_con_loss(features(g), labels, 0.5, false); });
  LossConfig cfg;
  cfg.tau = 0.5;
  s.check("loss.combined", params, [&](Graph& g) { return combined_loss(logits(g), features(g), labels, cfg); });
}

StackedSequences random_sequences(const std::vector<std::size_t>& lengths, std::size_t dim, Rng& rng) {
  std::vector<Tensor> seqs;
  for (std::size_t len : lengths) seqs.push_back(random_tensor(len, dim, rng));
  std::vector<const Tensor*> ptrs;
  for (const auto& t : seqs) ptrs.push_back(&t);
  return stack_sequences(ptrs);
}

Var training_loss(const ModelOutput& out, const std::vector<int>& labels) {
  LossConfig cfg;
  cfg.tau = 0.5;
  return combined_loss(out.logits, l2_normalize_rows(out.embeddings), labels, cfg);
}

void model_checks(Suite& s) {
  const ArchConfig arch = small_arch();
  const std::size_t classes = 3;
  {
    AudioEncoder enc(5, classes, arch);
    randomize(enc.params(), s.rng());
    const StackedSequences frames = random_sequences({4, 1, 3}, 5, s.rng());
    const auto labels = random_labels(3, classes, s.rng());
    const std::uint64_t rs = s.next_seed();
    s.check("model.audio_encoder", enc.params(), [&](Graph& g) { return readout(enc.forward(g, frames).logits, rs); });
    s.check("stage.1_audio", enc.params(), [&](Graph& g) { return training_loss(enc.forward(g, frames), labels); });
  }
  {
    TextEncoder enc(6, classes, arch);
    randomize(enc.params(), s.rng());
    const StackedSequences tokens = random_sequences({4, 2}, 6, s.rng());
    const auto labels = random_labels(2, classes, s.rng());
    const std::uint64_t rs = s.next_seed();
    s.check("model.text_encoder", enc.params(), [&](Graph& g) { return readout(enc.forward(g, tokens).logits, rs); });
    s.check("stage.1_text", enc.params(), [&](Graph& g) { return training_loss(enc.forward(g, tokens), labels); });
  }
  const std::vector<std::size_t> offsets = {0, 4, 7};
  const auto labels = random_labels(7, classes, s.rng());
  for (bool attention : {true, false}) {
    ArchConfig a = arch;
    a.self_attention = attention;
    ContextualGru model(8, classes, a);
    randomize(model.params(), s.rng());
    const Tensor x = random_tensor(7, 8, s.rng());
    const std::uint64_t rs = s.next_seed();
    const std::string suffix = attention ? "" : "_no_attention";
    auto run = [&](Graph& g) { return model.forward(g, g.constant(x), offsets); };
    s.check("model.contextual_gru" + suffix, model.params(), [&](Graph& g) { return readout(run(g).logits, rs); });
    s.check("stage.2" + suffix, model.params(), [&](Graph& g) { return training_loss(run(g), labels); });
  }
  {
    FusionModel model(classes, arch);
    randomize(model.params(), s.rng());
    const Tensor audio = random_tensor(7, 8, s.rng());
    const Tensor text = random_tensor(7, 8, s.rng());
    const std::uint64_t rs = s.next_seed();
    auto run = [&](Graph& g) { return model.forward(g, g.constant(audio), g.constant(text), offsets); };
    s.check("model.fusion", model.params(), [&](Graph& g) { return readout(run(g).logits, rs); });
    s.check("stage.3", model.params(), [&](Graph& g) { return training_loss(run(g), labels); });
  }
  {
    ContextualGru audio_ctx(8, classes, arch, "audio_context");
    ContextualGru text_ctx(8, classes, arch, "text_context");
    FusionModel fusion(classes, arch);
    std::vector<Parameter*> all;
    for (ParameterSet* set : {&audio_ctx.params(), &text_ctx.params(), &fusion.params()}) {
      randomize(*set, s.rng());
      for (Parameter* p : set->all()) all.push_back(p);
    }
    const Tensor audio = random_tensor(7, 8, s.rng());
    const Tensor text = random_tensor(7, 8, s.rng());
    s.check("stage.joint23", all, [&](Graph& g) {
      const ModelOutput a = audio_ctx.forward(g, g.constant(audio), offsets);
      const ModelOutput t = text_ctx.forward(g, g.constant(text), offsets);
      return training_loss(fusion.forward(g, a.embeddings, t.embeddings, offsets), labels);
    });
  }
}

}  // namespace

std::vector<SuiteResult> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& options) {
  Suite s(seed, options);
  op_checks(s);
  block_checks(s);
  loss_checks(s);
  model_checks(s);
  return s.take();
}

}  // namespace hierfuse
