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
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include "hierfuse/dataio.hpp"
#include "hierfuse/error.hpp"
#include "hierfuse/losses.hpp"
#include "hierfuse/optim.hpp"
#include "test_util.hpp"

namespace hierfuse {
namespace {

namespace fs = std::filesystem;
using testing::random_tensor;
using testing::TempDir;

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

template <typename Fn>
ErrorCode code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kUsage;
}

template <typename Fn>
std::string message_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

// ---------------------------------------------------------------------------
// Embedding files

TEST(EmbeddingFile, RoundTripIsBitwise) {
  TempDir dir("emb");
  Rng rng(1);
  Tensor t = random_tensor(7, 16, rng);
  for (double& v : t.values()) v = static_cast<float>(v);
  write_embedding_file(dir / "a.hfe", t);
  Tensor back = read_embedding_file(dir / "a.hfe");
  EXPECT_EQ(back, t);
  write_embedding_file(dir / "b.hfe", back);
  EXPECT_EQ(file_bytes(dir / "a.hfe"), file_bytes(dir / "b.hfe"));
  EXPECT_EQ(file_bytes(dir / "a.hfe").size(), kEmbeddingHeaderBytes + 7 * 16 * 4);
}

TEST(EmbeddingFile, HeaderLayout) {
  TempDir dir("emb");
  write_embedding_file(dir / "x.hfe", Tensor::from_rows({{1.5, -2.0, 0.25}, {0, 1, 2}}));
  auto bytes = file_bytes(dir / "x.hfe");
  ASSERT_EQ(bytes.size(), 20u + 24u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "HFEM");
  auto u32 = [&](std::size_t off) {
    std::uint32_t v;
    std::memcpy(&v, bytes.data() + off, 4);
    return v;
  };
  EXPECT_EQ(u32(4), 1u);
  EXPECT_EQ(u32(8), 2u);
  EXPECT_EQ(u32(12), 3u);
  EXPECT_EQ(u32(16), 0u);
  float first;
  std::memcpy(&first, bytes.data() + 20, 4);
  EXPECT_EQ(first, 1.5f);
}

TEST(EmbeddingFile, MinimalOneByOne) {
  TempDir dir("emb");
  write_embedding_file(dir / "m.hfe", Tensor::from_rows({{3.0}}));
  Tensor t = read_embedding_file(dir / "m.hfe");
  EXPECT_EQ(t.rows(), 1u);
  EXPECT_EQ(t.cols(), 1u);
  EXPECT_EQ(t[0], 3.0);
}

TEST(EmbeddingFile, TruncationReportsByteCounts) {
  TempDir dir("emb");
  write_embedding_file(dir / "t.hfe", Tensor::zeros(3, 4));
  auto bytes = file_bytes(dir / "t.hfe");
  bytes.resize(bytes.size() - 5);
  write_bytes(dir / "t.hfe", bytes);
  EXPECT_EQ(code_of([&] { read_embedding_file(dir / "t.hfe"); }), ErrorCode::kEmbeddingTruncated);
  const std::string msg = message_of([&] { read_embedding_file(dir / "t.hfe"); });
  EXPECT_NE(msg.find("expected 68 bytes"), std::string::npos) << msg;
  EXPECT_NE(msg.find("found 63"), std::string::npos) << msg;
  EXPECT_EQ(code_of([&] { inspect_embedding_file(dir / "t.hfe"); }), ErrorCode::kEmbeddingTruncated);
}

TEST(EmbeddingFile, BadMagic) {
  TempDir dir("emb");
  write_embedding_file(dir / "m.hfe", Tensor::zeros(1, 2));
  auto bytes = file_bytes(dir / "m.hfe");
  bytes[0] = 'X';
  write_bytes(dir / "m.hfe", bytes);
  EXPECT_EQ(code_of([&] { read_embedding_file(dir / "m.hfe"); }), ErrorCode::kEmbeddingMagic);
}

TEST(EmbeddingFile, NanPayload) {
  TempDir dir("emb");
  write_embedding_file(dir / "n.hfe", Tensor::zeros(2, 2));
  auto bytes = file_bytes(dir / "n.hfe");
  const float nan = std::numeric_limits<float>::quiet_NaN();
  std::memcpy(bytes.data() + 20 + 8, &nan, 4);
  write_bytes(dir / "n.hfe", bytes);
  EXPECT_EQ(code_of([&] { read_embedding_file(dir / "n.hfe"); }), ErrorCode::kEmbeddingNonFinite);
}

TEST(EmbeddingFile, MissingFile) {
  TempDir dir("emb");
  EXPECT_EQ(code_of([&] { read_embedding_file(dir / "none.hfe"); }), ErrorCode::kMissingEmbeddingFile);
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestFixture {
  ManifestFixture() : dir("manifest") {
    fs::create_directories(dir / "emb");
    for (const char* name : {"a0", "a1", "a2", "b0", "b1"}) {
      write_embedding_file(dir / ("emb/" + std::string(name) + ".a"), Tensor::zeros(3, 4));
      write_embedding_file(dir / ("emb/" + std::string(name) + ".t"), Tensor::zeros(2, 5));
    }
  }
  fs::path write(const std::vector<std::string>& lines, const std::string& header = "#hierfuse-manifest\t1\t3") {
    std::ofstream out(dir / "m.tsv");
    out << header << '\n';
    for (const auto& l : lines) out << l << '\n';
    return dir / "m.tsv";
  }
  static std::string row(const std::string& conv, const std::string& utt, const std::string& order,
                         const std::string& split, const std::string& label) {
    return conv + '\t' + utt + '\t' + order + '\t' + split + '\t' + label + "\temb/" + utt + ".a\temb/" + utt + ".t";
  }
  std::vector<std::string> good() const {
    return {row("A", "a1", "1", "train", "2"), row("A", "a0", "0", "train", "0"), row("B", "b0", "0", "val", "1"),
            row("A", "a2", "2", "train", "1"), row("B", "b1", "1", "val", "0")};
  }
  TempDir dir;
};

TEST(Manifest, WellFormedTwoConversations) {
  ManifestFixture f;
  Manifest m = load_manifest(f.write(f.good()));
  EXPECT_EQ(m.num_classes, 3u);
  ASSERT_EQ(m.conversations.size(), 2u);
  EXPECT_EQ(m.conversations[0].id, "A");
  ASSERT_EQ(m.conversations[0].utterances.size(), 3u);
  EXPECT_EQ(m.records[m.conversations[0].utterances[0]].utterance_id, "a0");
  EXPECT_EQ(m.records[m.conversations[0].utterances[2]].utterance_id, "a2");
  EXPECT_EQ(m.conversations[1].split, Split::kVal);
  EXPECT_EQ(m.utterance_count(Split::kTrain), 3u);
  EXPECT_EQ(m.record("b1").label, 0);
  EXPECT_EQ(code_of([&] { m.record("zz"); }), ErrorCode::kMissingUtterance);
}

TEST(Manifest, WriteThenLoadPreservesRecords) {
  ManifestFixture f;
  Manifest m = load_manifest(f.write(f.good()));
  write_manifest(f.dir / "copy.tsv", m);
  Manifest again = load_manifest(f.dir / "copy.tsv");
  ASSERT_EQ(again.records.size(), m.records.size());
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    EXPECT_EQ(again.records[i].utterance_id, m.records[i].utterance_id);
    EXPECT_EQ(again.records[i].label, m.records[i].label);
    EXPECT_EQ(again.records[i].order_index, m.records[i].order_index);
  }
}

TEST(Manifest, OrderGapNamesConversation) {
  ManifestFixture f;
  auto lines = f.good();
  lines.erase(lines.begin());  // drops A's order 1, leaving 0 and 2
  const auto path = f.write(lines);
  EXPECT_EQ(code_of([&] { load_manifest(path); }), ErrorCode::kManifestOrdering);
  EXPECT_NE(message_of([&] { load_manifest(path); }).find("'A'"), std::string::npos);
}

TEST(Manifest, DuplicateOrderIndex) {
  ManifestFixture f;
  auto lines = f.good();
  lines[4] = ManifestFixture::row("B", "b1", "0", "val", "0");
  EXPECT_EQ(code_of([&] { load_manifest(f.write(lines)); }), ErrorCode::kManifestDuplicate);
}

TEST(Manifest, DuplicateUtteranceId) {
  ManifestFixture f;
  auto lines = f.good();
  lines[4] = ManifestFixture::row("B", "b0", "1", "val", "0");
  EXPECT_EQ(code_of([&] { load_manifest(f.write(lines)); }), ErrorCode::kManifestDuplicate);
}

TEST(Manifest, LabelEqualToClassCount) {
  ManifestFixture f;
  auto lines = f.good();
  lines[2] = ManifestFixture::row("B", "b0", "0", "val", "3");
  EXPECT_EQ(code_of([&] { load_manifest(f.write(lines)); }), ErrorCode::kLabelRange);
}

TEST(Manifest, MissingEmbeddingFile) {
  ManifestFixture f;
  fs::remove(f.dir / "emb/b1.t");
  EXPECT_EQ(code_of([&] { load_manifest(f.write(f.good())); }), ErrorCode::kMissingEmbeddingFile);
}

TEST(Manifest, CorruptEmbeddingFileDetectedEagerly) {
  ManifestFixture f;
  auto bytes = file_bytes(f.dir / "emb/a2.a");
  bytes.pop_back();
  write_bytes(f.dir / "emb/a2.a", bytes);
  EXPECT_EQ(code_of([&] { load_manifest(f.write(f.good())); }), ErrorCode::kEmbeddingTruncated);
}

TEST(Manifest, MalformedLinesAreFormatErrors) {
  ManifestFixture f;
  const std::vector<std::vector<std::string>> cases{
      {"A\ta0\t0\ttrain\t0\temb/a0.a"},                        // six fields
      {ManifestFixture::row("A", "a0", "x", "train", "0")},    // non-integer order
      {ManifestFixture::row("A", "a0", "0", "dev", "0")},      // unknown split
      {ManifestFixture::row("A", "a0", "0", "train", "-")},    // non-integer label
      {ManifestFixture::row("A", "a0", "0", "train", "1"), ManifestFixture::row("A", "a1", "1", "val", "1")},
  };
  for (const auto& lines : cases)
    EXPECT_EQ(code_of([&] { load_manifest(f.write(lines)); }), ErrorCode::kManifestFormat) << lines[0];
  EXPECT_EQ(code_of([&] { load_manifest(f.write(f.good(), "conversation\tutterance")); }), ErrorCode::kManifestFormat);
  EXPECT_EQ(code_of([&] { load_manifest(f.write({})); }), ErrorCode::kManifestFormat);
}

TEST(Manifest, NegativeLabelIsRangeError) {
  ManifestFixture f;
  EXPECT_EQ(code_of([&] { load_manifest(f.write({ManifestFixture::row("A", "a0", "0", "train", "-1")})); }),
            ErrorCode::kLabelRange);
}

TEST(Dataset, LoadsEveryUtterance) {
  ManifestFixture f;
  Dataset d = load_dataset(f.write(f.good()));
  EXPECT_EQ(d.audio.size(), 5u);
  EXPECT_EQ(d.audio_dim, 4u);
  EXPECT_EQ(d.text_dim, 5u);
}

TEST(Dataset, InconsistentWidthIsShapeError) {
  ManifestFixture f;
  write_embedding_file(f.dir / "emb/b0.a", Tensor::zeros(3, 6));
  EXPECT_EQ(code_of([&] { load_dataset(f.write(f.good())); }), ErrorCode::kShape);
}

// ---------------------------------------------------------------------------
// Embedding store

TEST(EmbeddingStore, RoundTripAndLookup) {
  TempDir dir("store");
  EmbeddingStore s(2, Modality::kText, 3);
  s.put("u1", std::vector<double>{1.0, 2.0, 3.0});
  s.put("u0", std::vector<double>{-1.0, 0.5, 1e-300});
  s.save(dir / "s.bin");
  EmbeddingStore back = EmbeddingStore::load(dir / "s.bin");
  EXPECT_EQ(back.stage(), 2);
  EXPECT_EQ(back.modality(), Modality::kText);
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.get("u0")[2], 1e-300);
  Tensor g = back.gather({"u0", "u1"});
  EXPECT_EQ(g(1, 1), 2.0);
  back.save(dir / "s2.bin");
  EXPECT_EQ(file_bytes(dir / "s.bin"), file_bytes(dir / "s2.bin"));
  EXPECT_EQ(code_of([&] { back.get("u9"); }), ErrorCode::kMissingUtterance);
}

TEST(EmbeddingStore, CorruptionAndAbsence) {
  TempDir dir("store");
  EXPECT_EQ(code_of([&] { EmbeddingStore::load(dir / "none.bin"); }), ErrorCode::kMissingStore);
  EmbeddingStore s(1, Modality::kAudio, 2);
  s.put("a", std::vector<double>{1.0, 2.0});
  s.save(dir / "s.bin");
  auto bytes = file_bytes(dir / "s.bin");
  bytes[40] ^= 0x10;  // inside the first vector
  write_bytes(dir / "s.bin", bytes);
  EXPECT_EQ(code_of([&] { EmbeddingStore::load(dir / "s.bin"); }), ErrorCode::kCheckpointHash);
  bytes.resize(bytes.size() - 3);
  write_bytes(dir / "s.bin", bytes);
  EXPECT_NE(code_of([&] { EmbeddingStore::load(dir / "s.bin"); }), ErrorCode::kUsage);
}

TEST(EmbeddingStore, RejectsDuplicatesAndWrongWidth) {
  EmbeddingStore s(1, Modality::kAudio, 2);
  s.put("a", std::vector<double>{1.0, 2.0});
  EXPECT_EQ(code_of([&] { s.put("a", std::vector<double>{1.0, 2.0}); }), ErrorCode::kManifestDuplicate);
  EXPECT_EQ(code_of([&] { s.put("b", std::vector<double>{1.0}); }), ErrorCode::kShape);
}

// ---------------------------------------------------------------------------
// Batching

Manifest synthetic_manifest(std::size_t conversations, std::size_t min_len, std::size_t max_len) {
  Manifest m;
  m.num_classes = 2;
  for (std::size_t c = 0; c < conversations; ++c) {
    const std::size_t len = min_len + (c * 7) % (max_len - min_len + 1);
    for (std::size_t t = 0; t < len; ++t)
      m.records.push_back({"c" + std::to_string(c), "c" + std::to_string(c) + "_" + std::to_string(t), t,
                           Split::kTrain, static_cast<int>(t % 2), "a", "t"});
  }
  m.index();
  return m;
}

TEST(Batching, PartitionSizes) {
  Manifest m = synthetic_manifest(10, 1, 5);
  auto batches = batch_conversations(m, Split::kTrain, 4, 7, 0);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[0].conversations.size(), 4u);
  EXPECT_EQ(batches[1].conversations.size(), 4u);
  EXPECT_EQ(batches[2].conversations.size(), 2u);
}

TEST(Batching, SameSeedSameOrderAndEpochsDiffer) {
  Manifest m = synthetic_manifest(12, 1, 5);
  auto a = batch_conversations(m, Split::kTrain, 4, 7, 3);
  auto b = batch_conversations(m, Split::kTrain, 4, 7, 3);
  auto c = batch_conversations(m, Split::kTrain, 4, 7, 4);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].conversations, b[i].conversations);
    differs |= a[i].conversations != c[i].conversations;
  }
  EXPECT_TRUE(differs);
}

TEST(Batching, MaskCountsPaddingAndCoverageIsExact) {
  Manifest m = synthetic_manifest(11, 1, 9);
  auto batches = batch_conversations(m, Split::kTrain, 3, 5, 0);
  std::multiset<std::size_t> seen;
  for (const auto& b : batches) {
    std::size_t real = 0;
    for (std::size_t i = 0; i < b.conversations.size(); ++i) real += b.offsets[i + 1] - b.offsets[i];
    EXPECT_EQ(b.padding_count(), b.conversations.size() * b.max_length - real);
    EXPECT_EQ(b.records.size(), real);
    for (std::size_t i = 0; i < b.conversations.size(); ++i) {
      const auto& utts = m.conversations[b.conversations[i]].utterances;
      EXPECT_TRUE(std::equal(utts.begin(), utts.end(), b.records.begin() + static_cast<std::ptrdiff_t>(b.offsets[i])));
    }
    seen.insert(b.records.begin(), b.records.end());
  }
  std::multiset<std::size_t> expected;
  for (std::size_t i = 0; i < m.records.size(); ++i) expected.insert(i);
  EXPECT_EQ(seen, expected);
}

TEST(Batching, UtteranceBatchesCoverSplit) {
  Manifest m = synthetic_manifest(6, 2, 6);
  auto batches = batch_utterances(m, Split::kTrain, 5, 1, 0);
  std::set<std::size_t> seen;
  std::size_t total = 0;
  for (const auto& b : batches) {
    total += b.size();
    seen.insert(b.begin(), b.end());
  }
  EXPECT_EQ(total, m.records.size());
  EXPECT_EQ(seen.size(), m.records.size());
}

TEST(Batching, EmptySplitIsError) {
  Manifest m = synthetic_manifest(3, 1, 2);
  EXPECT_EQ(code_of([&] { batch_conversations(m, Split::kTest, 2, 1, 0); }), ErrorCode::kEmptySplit);
  EXPECT_EQ(code_of([&] { batch_utterances(m, Split::kVal, 2, 1, 0); }), ErrorCode::kEmptySplit);
}

// ---------------------------------------------------------------------------
// Synthetic generator

// Independent oracle: enumerate every latent window (s_{t-w}, ..., s_t) of the
// sticky chain, accumulate P(label | s_t) and take the best guess per s_t.
double enumerated_single_bayes(std::size_t k, double stay, std::size_t w) {
  std::vector<double> joint(k * k, 0.0);  // [s_t][label]
  std::vector<std::size_t> path(w + 1, 0);
  const std::size_t total = static_cast<std::size_t>(std::pow(k, w + 1));
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t rest = code;
    for (std::size_t i = 0; i <= w; ++i) {
      path[i] = rest % k;
      rest /= k;
    }
    double p = 1.0 / static_cast<double>(k);
    for (std::size_t i = 1; i <= w; ++i)
      p *= path[i] == path[i - 1] ? stay : (1.0 - stay) / static_cast<double>(k - 1);
    const std::size_t now = path[w], then = path[0];
    joint[now * k + (2 * now + k - then) % k] += p;
  }
  double acc = 0.0;
  for (std::size_t s = 0; s < k; ++s) acc += *std::max_element(joint.begin() + s * k, joint.begin() + (s + 1) * k);
  return acc;
}

TEST(Synthetic, DeterministicGivenSeed) {
  SyntheticSpec spec;
  spec.regime = Regime::kContextual;
  spec.num_conversations = 6;
  spec.min_length = 3;
  spec.max_length = 7;
  SyntheticDataset a = generate_synthetic(spec), b = generate_synthetic(spec);
  ASSERT_EQ(a.manifest.records.size(), b.manifest.records.size());
  for (std::size_t i = 0; i < a.audio.size(); ++i) {
    EXPECT_EQ(a.audio[i], b.audio[i]);
    EXPECT_EQ(a.text[i], b.text[i]);
    EXPECT_EQ(a.manifest.records[i].label, b.manifest.records[i].label);
  }
  spec.seed = 2;
  SyntheticDataset c = generate_synthetic(spec);
  EXPECT_FALSE(c.audio[0] == a.audio[0]);
}

TEST(Synthetic, SplitsByConversation) {
  SyntheticSpec spec;
  spec.num_conversations = 40;
  spec.min_length = 2;
  spec.max_length = 4;
  SyntheticDataset d = generate_synthetic(spec);
  EXPECT_EQ(d.manifest.conversations_in(Split::kVal).size(), 6u);
  EXPECT_EQ(d.manifest.conversations_in(Split::kTest).size(), 6u);
  EXPECT_EQ(d.manifest.conversations_in(Split::kTrain).size(), 28u);
}

TEST(Synthetic, ContextFreeNoiselessIsLinearlySeparable) {
  SyntheticSpec spec;
  spec.regime = Regime::kContextFree;
  spec.num_conversations = 20;
  spec.min_length = 5;
  spec.max_length = 5;
  spec.audio_noise = 0.0;
  spec.text_noise = 0.0;
  spec.audio_dim = 6;
  SyntheticDataset d = generate_synthetic(spec);
  EXPECT_DOUBLE_EQ(d.bayes.audio_single, 1.0);

  // Softmax regression on mean-pooled audio frames of the training split.
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.manifest.records.size(); ++i)
    if (d.manifest.records[i].split == Split::kTrain) rows.push_back(i);
  Tensor x = Tensor::zeros(rows.size(), 6);
  std::vector<int> y;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Tensor& f = d.audio[rows[r]];
    for (std::size_t t = 0; t < f.rows(); ++t)
      for (std::size_t j = 0; j < 6; ++j) x(r, j) += f(t, j) / static_cast<double>(f.rows());
    y.push_back(d.manifest.records[rows[r]].label);
  }
  ParameterSet params;
  Parameter& w = params.add("w", {4, 6});
  Parameter& b = params.add("b", {4});
  Adam opt(AdamConfig{.learning_rate = 0.05});
  for (int step = 0; step < 500; ++step) {
    params.zero_grad();
    Graph g(true);
    Var logits = add(matmul_bt(g.constant(x), g.param(w)), g.param(b));
    g.backward(cross_entropy(logits, y));
    opt.step(params.all());
  }
  Graph g;
  Tensor logits = add(matmul_bt(g.constant(x), g.param(w)), g.param(b)).value();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto row = logits.row(r);
    correct += static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()) == y[r];
  }
  EXPECT_EQ(correct, rows.size());
}

TEST(Synthetic, ContextualSingleUtteranceBoundMatchesEnumeration) {
  SyntheticSpec spec;
  spec.regime = Regime::kContextual;
  spec.window = 2;
  spec.min_length = 20;
  spec.max_length = 20;
  const BayesReport rep = synthetic_bayes(spec);
  const double per_position = enumerated_single_bayes(4, spec.stay_probability, 2);
  EXPECT_LT(per_position, 1.0);
  EXPECT_NEAR(rep.audio_single, (2.0 + 18.0 * per_position) / 20.0, 1e-12);
  EXPECT_LT(rep.audio_single, 1.0);
  EXPECT_DOUBLE_EQ(rep.contextual, 1.0);
  double prior_sum = 0.0;
  for (double p : rep.class_priors) prior_sum += p;
  EXPECT_NEAR(prior_sum, 1.0, 1e-12);
}

TEST(Synthetic, ContextualBoundHandlesLengthMixture) {
  SyntheticSpec spec;
  spec.regime = Regime::kContextual;
  spec.window = 3;
  spec.min_length = 2;
  spec.max_length = 6;
  const double b = enumerated_single_bayes(4, spec.stay_probability, 3);
  // Lengths 2..6 equally likely: utterances at positions >= 3 number 0+0+1+2+3.
  const double lagged = 6.0, total = 2 + 3 + 4 + 5 + 6;
  EXPECT_NEAR(synthetic_bayes(spec).audio_single, ((total - lagged) + lagged * b) / total, 1e-12);
}

TEST(Synthetic, ComplementaryModalitiesBelowJoint) {
  SyntheticSpec spec;
  spec.regime = Regime::kComplementary;
  spec.num_classes = 4;
  const BayesReport rep = synthetic_bayes(spec);
  EXPECT_NEAR(rep.audio_single, 0.5, 1e-12);
  EXPECT_NEAR(rep.text_single, 0.5, 1e-12);
  EXPECT_NEAR(rep.joint_single, 1.0, 1e-12);

  spec.num_classes = 6;
  const BayesReport six = synthetic_bayes(spec);
  EXPECT_NEAR(six.audio_single, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(six.text_single, 0.5, 1e-12);
  EXPECT_LT(std::max(six.audio_single, six.text_single), six.joint_single);
}

TEST(Synthetic, CompositeBoundsFactorise) {
  SyntheticSpec spec;
  spec.regime = Regime::kComposite;
  spec.window = 2;
  spec.min_length = 10;
  spec.max_length = 10;
  const double b = enumerated_single_bayes(2, spec.stay_probability, 2);
  const BayesReport rep = synthetic_bayes(spec);
  EXPECT_NEAR(rep.joint_single, (2.0 + 8.0 * b * b) / 10.0, 1e-12);
  EXPECT_NEAR(rep.audio_single, (2.0 * 0.5 + 8.0 * b * 0.5) / 10.0, 1e-12);
  EXPECT_LT(rep.audio_single, rep.joint_single);
}

TEST(Synthetic, ComplementaryLabelsFactorAcrossModalities) {
  SyntheticSpec spec;
  spec.regime = Regime::kComplementary;
  spec.num_conversations = 10;
  spec.min_length = 4;
  spec.max_length = 4;
  spec.audio_noise = 0.0;
  spec.text_noise = 0.0;
  SyntheticDataset d = generate_synthetic(spec);
  // Noiseless audio rows identify label / 2; text rows identify label % 2.
  std::map<std::vector<double>, std::set<int>> audio_parts, text_parts;
  for (std::size_t i = 0; i < d.audio.size(); ++i) {
    const int y = d.manifest.records[i].label;
    auto a = d.audio[i].row(0), t = d.text[i].row(0);
    audio_parts[{a.begin(), a.end()}].insert(y / 2);
    text_parts[{t.begin(), t.end()}].insert(y % 2);
  }
  EXPECT_EQ(audio_parts.size(), 2u);
  EXPECT_EQ(text_parts.size(), 2u);
  for (const auto& [k, v] : audio_parts) EXPECT_EQ(v.size(), 1u);
  for (const auto& [k, v] : text_parts) EXPECT_EQ(v.size(), 1u);
}

TEST(Synthetic, WrittenDatasetLoadsIdentically) {
  TempDir dir("synth");
  SyntheticSpec spec;
  spec.regime = Regime::kComposite;
  spec.num_conversations = 5;
  spec.min_length = 2;
  spec.max_length = 4;
  const auto manifest = write_synthetic(spec, dir / "data");
  Dataset loaded = load_dataset(manifest);
  SyntheticDataset mem = generate_synthetic(spec);
  ASSERT_EQ(loaded.audio.size(), mem.audio.size());
  for (std::size_t i = 0; i < mem.audio.size(); ++i) {
    EXPECT_EQ(loaded.audio[i], mem.audio[i]);
    EXPECT_EQ(loaded.text[i], mem.text[i]);
  }
  EXPECT_TRUE(fs::exists(dir / "data" / "synthetic.json"));
  EXPECT_EQ(code_of([&] { write_synthetic(spec, dir / "data"); }), ErrorCode::kOutputExists);
}

TEST(Synthetic, SpecValidation) {
  SyntheticSpec spec;
  spec.regime = Regime::kComplementary;
  spec.num_classes = 3;
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::kConfig);
  spec = SyntheticSpec{};
  spec.max_length = 5;
  spec.min_length = 6;
  EXPECT_EQ(code_of([&] { spec.validate(); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace hierfuse
