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

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "binio.hpp"
#include "hierfuse/dataio.hpp"
#include "hierfuse/error.hpp"
#include "hierfuse/rng.hpp"
#include "json.hpp"

namespace hierfuse {

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::kContextFree: return "context-free";
    case Regime::kContextual: return "contextual";
    case Regime::kComplementary: return "complementary";
    case Regime::kComposite: return "composite";
  }
  return "?";
}

Regime parse_regime(std::string_view name) {
  for (Regime r : {Regime::kContextFree, Regime::kContextual, Regime::kComplementary, Regime::kComposite})
    if (name == regime_name(r)) return r;
  fail(ErrorCode::kUsage,
       "unknown regime '" + std::string(name) + "' (context-free, contextual, complementary, composite)");
}

namespace {

bool two_factor(Regime r) { return r == Regime::kComplementary || r == Regime::kComposite; }
bool has_context(Regime r) { return r == Regime::kContextual || r == Regime::kComposite; }

// Latent factors. Single-factor regimes use one latent shared by both
// modalities; two-factor regimes give audio a binary factor and text the
// remaining C/2-way factor, with label = audio_part * (C/2) + text_part.
struct Factors {
  std::size_t audio_states;
  std::size_t text_states;
};

Factors factors_of(const SyntheticSpec& spec) {
  if (two_factor(spec.regime)) return {2, spec.num_classes / 2};
  return {spec.num_classes, spec.num_classes};
}

// Label part for one factor at position t given its latent path.
std::size_t label_part(const std::vector<std::size_t>& s, std::size_t t, std::size_t states, std::size_t window,
                       bool context) {
  if (!context || t < window) return s[t];
  return (2 * s[t] + states - s[t - window]) % states;
}

// P(s_{t-w} = b | s_t = a) for the sticky chain with a uniform start.
std::vector<double> lag_kernel(std::size_t states, double stay, std::size_t window) {
  std::vector<double> step(states * states), out(states * states, 0.0);
  for (std::size_t a = 0; a < states; ++a)
    for (std::size_t b = 0; b < states; ++b)
      step[a * states + b] = a == b ? stay : (1.0 - stay) / static_cast<double>(states - 1);
  for (std::size_t a = 0; a < states; ++a) out[a * states + a] = 1.0;
  for (std::size_t k = 0; k < window; ++k) {
    std::vector<double> next(states * states, 0.0);
    for (std::size_t a = 0; a < states; ++a)
      for (std::size_t m = 0; m < states; ++m)
        for (std::size_t b = 0; b < states; ++b) next[a * states + b] += out[a * states + m] * step[m * states + b];
    out = std::move(next);
  }
  return out;  // symmetric, so forward and backward lags coincide
}

// Conditional distribution of a factor's label part given its current
// latent: cond[s * states + y].
std::vector<double> part_given_latent(std::size_t states, double stay, std::size_t window, bool context, bool lagged) {
  std::vector<double> cond(states * states, 0.0);
  if (!context || !lagged) {
    for (std::size_t s = 0; s < states; ++s) cond[s * states + s] = 1.0;
    return cond;
  }
  const auto kernel = lag_kernel(states, stay, window);
  for (std::size_t s = 0; s < states; ++s)
    for (std::size_t prev = 0; prev < states; ++prev)
      cond[s * states + (2 * s + states - prev) % states] += kernel[s * states + prev];
  return cond;
}

struct PartStats {
  double bayes = 0.0;          // E_s max_y P(y | s)
  double best_marginal = 0.0;  // max_y P(y)
  std::vector<double> marginal;
};

PartStats part_stats(const std::vector<double>& cond, std::size_t states) {
  PartStats st;
  st.marginal.assign(states, 0.0);
  const double prior = 1.0 / static_cast<double>(states);
  for (std::size_t s = 0; s < states; ++s) {
    double best = 0.0;
    for (std::size_t y = 0; y < states; ++y) {
      best = std::max(best, cond[s * states + y]);
      st.marginal[y] += prior * cond[s * states + y];
    }
    st.bayes += prior * best;
  }
  st.best_marginal = *std::max_element(st.marginal.begin(), st.marginal.end());
  return st;
}

}  // namespace

void SyntheticSpec::validate() const {
  require(num_conversations >= 3, ErrorCode::kConfig, "need at least 3 conversations (one per split)");
  require(min_length >= 1 && max_length >= min_length, ErrorCode::kConfig, "invalid conversation length range");
  require(num_classes >= 2, ErrorCode::kConfig, "need at least 2 classes");
  if (two_factor(regime))
    require(num_classes >= 4 && num_classes % 2 == 0, ErrorCode::kConfig,
            "complementary regimes need an even class count >= 4");
  require(audio_dim >= 1 && text_dim >= 1, ErrorCode::kConfig, "feature widths must be positive");
  require(min_frames >= 1 && max_frames >= min_frames, ErrorCode::kConfig, "invalid frame count range");
  require(!has_context(regime) || window >= 1, ErrorCode::kConfig, "context window must be >= 1");
  require(stay_probability >= 0.0 && stay_probability <= 1.0, ErrorCode::kConfig, "stay probability must lie in [0, 1]");
  require(audio_noise >= 0.0 && text_noise >= 0.0, ErrorCode::kConfig, "noise levels must be non-negative");
  require(val_fraction > 0.0 && test_fraction > 0.0 && val_fraction + test_fraction < 1.0, ErrorCode::kConfig,
          "split fractions must be positive and leave room for training");
}

BayesReport synthetic_bayes(const SyntheticSpec& spec) {
  spec.validate();
  const Factors fac = factors_of(spec);
  const bool context = has_context(spec.regime);

  // Expected share of utterances at each position under the length mixture.
  std::vector<double> weight(spec.max_length, 0.0);
  const double n_lengths = static_cast<double>(spec.max_length - spec.min_length + 1);
  double mean_length = 0.0;
  for (std::size_t len = spec.min_length; len <= spec.max_length; ++len) {
    mean_length += static_cast<double>(len) / n_lengths;
    for (std::size_t t = 0; t < len; ++t) weight[t] += 1.0 / n_lengths;
  }
  for (double& w : weight) w /= mean_length;

  BayesReport rep;
  rep.class_priors.assign(spec.num_classes, 0.0);
  for (std::size_t t = 0; t < spec.max_length; ++t) {
    const bool lagged = context && t >= spec.window;
    const auto a_cond = part_given_latent(fac.audio_states, spec.stay_probability, spec.window, context, lagged);
    const PartStats a = part_stats(a_cond, fac.audio_states);
    if (!two_factor(spec.regime)) {
      rep.audio_single += weight[t] * a.bayes;
      rep.text_single += weight[t] * a.bayes;
      rep.joint_single += weight[t] * a.bayes;
      for (std::size_t y = 0; y < spec.num_classes; ++y) rep.class_priors[y] += weight[t] * a.marginal[y];
      continue;
    }
    const auto t_cond = part_given_latent(fac.text_states, spec.stay_probability, spec.window, context, lagged);
    const PartStats x = part_stats(t_cond, fac.text_states);
    rep.audio_single += weight[t] * a.bayes * x.best_marginal;
    rep.text_single += weight[t] * x.bayes * a.best_marginal;
    rep.joint_single += weight[t] * a.bayes * x.bayes;
    for (std::size_t ya = 0; ya < fac.audio_states; ++ya)
      for (std::size_t yt = 0; yt < fac.text_states; ++yt)
        rep.class_priors[ya * fac.text_states + yt] += weight[t] * a.marginal[ya] * x.marginal[yt];
  }
  rep.contextual = 1.0;
  return rep;
}

namespace {

std::vector<std::size_t> sample_path(Rng& rng, std::size_t length, std::size_t states, double stay, bool chain) {
  std::vector<std::size_t> s(length);
  for (std::size_t t = 0; t < length; ++t) {
    if (!chain || t == 0) {
      s[t] = rng.below(states);
    } else if (rng.uniform() < stay) {
      s[t] = s[t - 1];
    } else {
      const std::size_t jump = 1 + rng.below(states - 1);
      s[t] = (s[t - 1] + jump) % states;
    }
  }
  return s;
}

Tensor prototypes(Rng& rng, std::size_t states, std::size_t dim) {
  Tensor p = Tensor::zeros(states, dim);
  for (double& v : p.values()) v = rng.normal();
  return p;
}

// Rows are rounded to float32 so the in-memory dataset equals what a reader
// of the written files sees.
Tensor observe(Rng& rng, const Tensor& protos, std::size_t state, std::size_t rows, double noise) {
  Tensor out = Tensor::zeros(rows, protos.cols());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < protos.cols(); ++j)
      out(r, j) = static_cast<double>(static_cast<float>(protos(state, j) + noise * rng.normal()));
  return out;
}

std::string pad_number(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*zu", width, value);
  return buf;
}

}  // namespace

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Factors fac = factors_of(spec);
  const bool context = has_context(spec.regime);
  const bool split_latent = two_factor(spec.regime);

  Rng proto_rng(derive_seed(spec.seed, "prototypes"));
  const Tensor audio_protos = prototypes(proto_rng, fac.audio_states, spec.audio_dim);
  const Tensor text_protos = prototypes(proto_rng, fac.text_states, spec.text_dim);
  Rng latent_rng(derive_seed(spec.seed, "latents"));
  Rng obs_rng(derive_seed(spec.seed, "observations"));
  Rng split_rng(derive_seed(spec.seed, "splits"));

  // Split assignment by conversation.
  const std::size_t n = spec.num_conversations;
  const auto n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.val_fraction * n)));
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.test_fraction * n)));
  require(n_val + n_test < n, ErrorCode::kConfig, "split fractions leave no training conversations");
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  split_rng.shuffle(perm.begin(), perm.end());
  std::vector<Split> split_of(n, Split::kTrain);
  for (std::size_t k = 0; k < n_val; ++k) split_of[perm[k]] = Split::kVal;
  for (std::size_t k = n_val; k < n_val + n_test; ++k) split_of[perm[k]] = Split::kTest;

  const int width = n < 10000 ? 4 : 8;
  SyntheticDataset out;
  out.manifest.num_classes = spec.num_classes;
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t length = spec.min_length + latent_rng.below(spec.max_length - spec.min_length + 1);
    const auto a_path = sample_path(latent_rng, length, fac.audio_states, spec.stay_probability, context);
    const auto t_path =
        split_latent ? sample_path(latent_rng, length, fac.text_states, spec.stay_probability, context) : a_path;
    const std::string conv_id = "c" + pad_number(c, width);
    for (std::size_t t = 0; t < length; ++t) {
      int label = 0;
      if (split_latent) {
        const std::size_t ya = label_part(a_path, t, fac.audio_states, spec.window, context);
        const std::size_t yt = label_part(t_path, t, fac.text_states, spec.window, context);
        label = static_cast<int>(ya * fac.text_states + yt);
      } else {
        label = static_cast<int>(label_part(a_path, t, fac.audio_states, spec.window, context));
      }
      const std::string utt_id = conv_id + "_u" + pad_number(t, 3);
      out.manifest.records.push_back({conv_id, utt_id, t, split_of[c], label, "emb/" + utt_id + ".audio.hfe",
                                      "emb/" + utt_id + ".text.hfe"});
      const std::size_t audio_rows = spec.min_frames + obs_rng.below(spec.max_frames - spec.min_frames + 1);
      const std::size_t text_rows = spec.min_frames + obs_rng.below(spec.max_frames - spec.min_frames + 1);
      out.audio.push_back(observe(obs_rng, audio_protos, a_path[t], audio_rows, spec.audio_noise));
      out.text.push_back(observe(obs_rng, text_protos, t_path[t], text_rows, spec.text_noise));
    }
  }
  out.manifest.index();
  out.bayes = synthetic_bayes(spec);
  return out;
}

std::filesystem::path write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir) {
  if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir))
    fail(ErrorCode::kOutputExists, "output directory " + out_dir.string() + " is not empty");
  const SyntheticDataset data = generate_synthetic(spec);
  std::filesystem::create_directories(out_dir / "emb");
  for (std::size_t i = 0; i < data.manifest.records.size(); ++i) {
    write_embedding_file(out_dir / data.manifest.records[i].audio_path, data.audio[i]);
    write_embedding_file(out_dir / data.manifest.records[i].text_path, data.text[i]);
  }
  const auto manifest_path = out_dir / "manifest.tsv";
  write_manifest(manifest_path, data.manifest);

  nlohmann::ordered_json side;
  side["schema"] = "hierfuse-synthetic/1";
  side["regime"] = regime_name(spec.regime);
  side["seed"] = spec.seed;
  side["num_conversations"] = spec.num_conversations;
  side["length"] = {spec.min_length, spec.max_length};
  side["num_classes"] = spec.num_classes;
  side["window"] = spec.window;
  side["stay_probability"] = spec.stay_probability;
  side["audio_noise"] = spec.audio_noise;
  side["text_noise"] = spec.text_noise;
  side["bayes"] = {{"audio_single_utterance", data.bayes.audio_single},
                   {"text_single_utterance", data.bayes.text_single},
                   {"joint_single_utterance", data.bayes.joint_single},
                   {"whole_conversation", data.bayes.contextual}};
  side["class_priors"] = data.bayes.class_priors;
  detail::write_text_file(out_dir / "synthetic.json", side.dump(2) + "\n");
  return manifest_path;
}

}  // namespace hierfuse
