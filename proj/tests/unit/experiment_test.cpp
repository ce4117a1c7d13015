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

#include <fstream>
#include <sstream>

#include "hierfuse/experiment.hpp"
#include "test_util.hpp"

namespace hierfuse {
namespace {

namespace fs = std::filesystem;
using testing::error_code_of;
using testing::read_file;
using testing::TempDir;

SyntheticSpec tiny_spec() {
  SyntheticSpec s;
  s.regime = Regime::kContextual;
  s.num_conversations = 16;
  s.min_length = s.max_length = 5;
  s.audio_dim = s.text_dim = 6;
  s.min_frames = 2;
  s.max_frames = 3;
  s.seed = 9;
  return s;
}

/// Config for a tiny, fast experiment writing under `out`.
std::string tiny_config(const fs::path& manifest, const fs::path& out, const std::string& seeds = "[1]") {
  std::ostringstream s;
  s << R"({"manifest": ")" << manifest.string() << R"(", "output_dir": ")" << out.string() << R"(", "seeds": )" << seeds
    << R"(, "arch": {"d_model": 8, "d_ff": 16},)"
    << R"( "train": {"learning_rate": 0.003, "batch_size": 16, "max_epochs": 2, "patience": 2},)"
    << R"( "stage2": {"batch_size": 4}, "ensemble": {"grid_step": 0.25}})";
  return s.str();
}

/// Row count of a result file (excluding the header and column lines).
std::size_t result_rows(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) ++n;
  return n < 2 ? 0 : n - 2;
}

/// Every regular file under `dir`, relative path to bytes.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = read_file(e.path());
  return out;
}

class ExperimentTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_dir_ = new TempDir("exp_data");
    synthesize(tiny_spec(), data_dir_->path());
    manifest_ = new fs::path(data_dir_->path() / "manifest.tsv");
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete data_dir_;
  }

  Experiment make(const fs::path& out, const std::string& seeds = "[1]") {
    return Experiment(parse_experiment_config(tiny_config(*manifest_, out, seeds), fs::current_path()));
  }

  static TempDir* data_dir_;
  static fs::path* manifest_;
};

TempDir* ExperimentTest::data_dir_ = nullptr;
fs::path* ExperimentTest::manifest_ = nullptr;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(ExperimentConfig, Defaults) {
  const ExperimentConfig c = parse_experiment_config(R"({"manifest": "m.tsv", "output_dir": "out"})", "/base");
  EXPECT_EQ(c.manifest, fs::path("/base/m.tsv"));
  EXPECT_EQ(c.output_dir, fs::path("/base/out"));
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{1});
  EXPECT_EQ(c.stage1.learning_rate, 1e-5);
  EXPECT_EQ(c.stage3.max_epochs, 100u);
  EXPECT_EQ(c.stage2.clip_norm, 0.25);
  EXPECT_EQ(c.loss.beta, 0.9);
  EXPECT_EQ(c.grid_step, 0.1);
  EXPECT_NO_THROW(c.validate());
}

TEST(ExperimentConfig, StageBlocksOverrideTrainBlock) {
  const ExperimentConfig c = parse_experiment_config(
      R"({"manifest": "/m", "output_dir": "/o", "train": {"max_epochs": 7, "learning_rate": 0.01},
          "stage2": {"max_epochs": 3}})",
      "/");
  EXPECT_EQ(c.stage1.max_epochs, 7u);
  EXPECT_EQ(c.stage2.max_epochs, 3u);
  EXPECT_EQ(c.stage2.learning_rate, 0.01);
  EXPECT_EQ(c.joint23.max_epochs, 7u);
  EXPECT_EQ(c.train_config(Schedule::kStage2, Modality::kText, 4).max_epochs, 3u);
  EXPECT_EQ(c.train_config(Schedule::kStage2, Modality::kText, 4).seed, 4u);
}

TEST(ExperimentConfig, OverridesWin) {
  const ExperimentConfig c = parse_experiment_config(
      R"({"manifest": "/m", "output_dir": "/o", "loss": {"beta": 0.5, "tau": 0.2}, "seeds": [1, 2]})", "/",
      R"({"loss": {"beta": 1.0}, "seeds": [3]})");
  EXPECT_EQ(c.loss.beta, 1.0);
  EXPECT_EQ(c.loss.tau, 0.2);
  EXPECT_EQ(c.seeds, std::vector<std::uint64_t>{3});
}

TEST(ExperimentConfig, RejectsUnknownKeysAndWrongTypes) {
  auto code = [](const std::string& text) {
    return error_code_of([&] { parse_experiment_config(text, "/").validate(); });
  };
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "epochs": 3})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "arch": {"width": 3}})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "stage1": {"lr": 3}})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "loss": {"beta": "high"}})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "seeds": 3})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "seeds": []})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "seeds": [2, 2]})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "ensemble": {"grid_step": 0.3}})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", "output_dir": "/o", "loss": {"beta": 1.5}})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"output_dir": "/o"})"), ErrorCode::kConfig);
  EXPECT_EQ(code(R"({"manifest": "/m", )"), ErrorCode::kConfig);
  EXPECT_EQ(error_code_of([] { load_experiment_config("/nonexistent/config.json"); }), ErrorCode::kConfig);
}

TEST(ExperimentConfig, CanonicalJsonRoundTrips) {
  const ExperimentConfig c = parse_experiment_config(
      R"({"manifest": "/m", "output_dir": "/o", "seeds": [4, 5], "arch": {"d_model": 12, "self_attention": false},
          "loss": {"class_weights": [1, 2, 3, 4], "self_exclusion": false}, "stage3": {"batch_size": 2}})",
      "/");
  const ExperimentConfig back = parse_experiment_config(c.to_json(), "/elsewhere");
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_EQ(back.manifest, fs::path("/m"));
}

TEST(ExperimentConfig, ShippedConfigsAreValid) {
  const fs::path dir = fs::path(HIERFUSE_SOURCE_DIR) / "configs";
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".json") continue;
    const ExperimentConfig c = load_experiment_config(e.path());
    EXPECT_NO_THROW(c.validate()) << e.path();
    EXPECT_TRUE(c.manifest.is_absolute());
    ++n;
  }
  EXPECT_GE(n, 2u);
}

TEST(ResultTable, VersionedHeader) {
  const ResultTable t{"evaluate", {"a", "b"}, {{"1", "2"}, {"3", "4"}}};
  EXPECT_EQ(t.to_text(), "# hierfuse-result v1 evaluate\na\tb\n1\t2\n3\t4\n");
}

TEST(MeanStd, SampleDeviation) {
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m, 2.5);
  EXPECT_NEAR(s, std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_EQ(mean_std({7.0}).second, 0.0);
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

TEST_F(ExperimentTest, SynthesizeWritesDatasetAndBayesReport) {
  TempDir dir("synth");
  const CommandOutput out = synthesize(tiny_spec(), dir.path());
  EXPECT_TRUE(fs::exists(dir / "manifest.tsv"));
  EXPECT_EQ(out.result_path, dir.path() / "results" / "synth.tsv");
  EXPECT_NE(read_file(out.result_path).find("bayes_audio_single"), std::string::npos);
  EXPECT_EQ(load_dataset(dir / "manifest.tsv").manifest.records.size(), 80u);
  // Same spec, same bytes. The summary quotes the directory.
  TempDir again("synth");
  synthesize(tiny_spec(), again.path());
  const auto ta = tree(dir.path()), tb = tree(again.path());
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta)
    if (!name.ends_with(".txt")) EXPECT_TRUE(tb.count(name) && bytes == tb.at(name)) << name;
}

TEST_F(ExperimentTest, RunAllIsDeterministic) {
  TempDir a("run_a"), b("run_b");
  make(a.path(), "[1, 2]").run_all();
  make(b.path(), "[1, 2]").run_all();
  const auto ta = tree(a.path()), tb = tree(b.path());
  ASSERT_EQ(ta.size(), tb.size());
  for (const auto& [name, bytes] : ta) {
    ASSERT_TRUE(tb.count(name)) << name;
    // Summaries quote the output directory; everything else must match exactly.
    if (name.ends_with(".txt")) continue;
    EXPECT_EQ(bytes, tb.at(name)) << name;
  }
  for (const char* stem : {"stage1-audio", "stage1-text", "stage2-audio", "stage2-text", "stage3", "joint23"})
    for (const char* ext : {".ckpt", ".store", ".predictions.tsv"})
      EXPECT_TRUE(ta.count(std::string("seed-2/") + stem + ext)) << stem << ext;
  EXPECT_TRUE(ta.count("results/run.tsv"));
  EXPECT_EQ(result_rows(a / "results/run.tsv"), 2u * 7u);
}

TEST_F(ExperimentTest, CheckpointsAndStoresRoundTripBitwise) {
  TempDir dir("roundtrip");
  Experiment e = make(dir.path());
  e.train(Schedule::kStage1, Modality::kText);
  e.extract(Schedule::kStage1, Modality::kText);
  const fs::path ckpt = e.seed_dir(1) / "stage1-text.ckpt";
  const fs::path store = e.seed_dir(1) / "stage1-text.store";
  save_checkpoint(dir / "copy.ckpt", load_checkpoint(ckpt));
  EmbeddingStore::load(store).save(dir / "copy.store");
  EXPECT_EQ(read_file(ckpt), read_file(dir / "copy.ckpt"));
  EXPECT_EQ(read_file(store), read_file(dir / "copy.store"));
}

TEST_F(ExperimentTest, RefusesToOverwrite) {
  TempDir dir("overwrite");
  Experiment e = make(dir.path());
  e.train(Schedule::kStage1, Modality::kAudio);
  EXPECT_EQ(error_code_of([&] { e.train(Schedule::kStage1, Modality::kAudio); }), ErrorCode::kOutputExists);
  // Removing the result file alone is not enough: the checkpoint is guarded too.
  fs::remove(dir / "results/train-stage1-audio.tsv");
  fs::remove(dir / "results/train-stage1-audio.txt");
  EXPECT_EQ(error_code_of([&] { e.train(Schedule::kStage1, Modality::kAudio); }), ErrorCode::kOutputExists);
}

TEST_F(ExperimentTest, LaterStagesNeedEarlierArtifacts) {
  TempDir dir("order");
  Experiment e = make(dir.path());
  EXPECT_EQ(error_code_of([&] { e.train(Schedule::kStage2, Modality::kAudio); }), ErrorCode::kMissingCheckpoint);
  e.train(Schedule::kStage1, Modality::kAudio);
  EXPECT_EQ(error_code_of([&] { e.train(Schedule::kStage2, Modality::kAudio); }), ErrorCode::kMissingStore);
  EXPECT_EQ(error_code_of([&] { e.extract(Schedule::kStage1, Modality::kText); }), ErrorCode::kMissingCheckpoint);
  EXPECT_EQ(error_code_of([&] { e.train(Schedule::kStage3, Modality::kAudio); }), ErrorCode::kUsage);
  EXPECT_EQ(error_code_of([&] { e.evaluate(true); }), ErrorCode::kMissingStore);
}

TEST_F(ExperimentTest, EvaluateReportsEverySource) {
  TempDir dir("evaluate");
  Experiment e = make(dir.path());
  for (Schedule s : {Schedule::kStage1, Schedule::kStage2, Schedule::kStage3}) {
    e.train(s);
    e.extract(s);
  }
  const CommandOutput with = e.evaluate(true);
  ASSERT_EQ(with.table.rows.size(), 6u);
  std::vector<std::string> sources;
  for (const auto& r : with.table.rows) sources.push_back(r[1]);
  EXPECT_EQ(sources, (std::vector<std::string>{"a1", "t1", "a2", "t2", "c", "ensemble"}));
  // The searched ensemble is at least as good as every single stage on validation.
  const double ens = std::stod(with.table.rows.back()[2]);
  for (std::size_t i = 0; i + 1 < with.table.rows.size(); ++i) EXPECT_GE(ens, std::stod(with.table.rows[i][2]));
  const CommandOutput without = e.evaluate(false);
  ASSERT_EQ(without.table.rows.size(), 1u);
  EXPECT_EQ(without.table.rows[0], with.table.rows[4]);
  EXPECT_EQ(error_code_of([&] { e.evaluate(false); }), ErrorCode::kOutputExists);
}

TEST_F(ExperimentTest, BetaSweepHasOneRowPerValue) {
  TempDir dir("sweep");
  Experiment e = make(dir.path());
  const CommandOutput out = e.sweep("beta", {0.0, 0.25, 0.5, 0.75, 1.0});
  EXPECT_EQ(out.table.rows.size(), 5u);
  EXPECT_EQ(result_rows(out.result_path), 5u);
  EXPECT_TRUE(fs::exists(dir / "sweep-beta/beta-0.25/seed-1/stage3.ckpt"));
  EXPECT_EQ(error_code_of([&] { e.sweep("gamma", {0.1}); }), ErrorCode::kUsage);
  EXPECT_EQ(error_code_of([&] { e.sweep("tau", {}); }), ErrorCode::kUsage);
}

TEST_F(ExperimentTest, AlphaSweepUsesStageTwoPredictions) {
  TempDir dir("alpha");
  Experiment e = make(dir.path());
  for (Schedule s : {Schedule::kStage1, Schedule::kStage2}) {
    e.train(s);
    e.extract(s);
  }
  const CommandOutput out = e.sweep("alpha", {0.0, 0.5, 1.0});
  ASSERT_EQ(out.table.rows.size(), 3u);
  EXPECT_EQ(out.table.columns.front(), "alpha");
  EXPECT_EQ(error_code_of([&] { make(dir.path()).sweep("alpha", {1.5}); }), ErrorCode::kOutputExists);
}

TEST_F(ExperimentTest, AblationIsDeterministic) {
  TempDir a("ablate_a"), b("ablate_b");
  const CommandOutput x = make(a.path()).ablate_self_attention();
  const CommandOutput y = make(b.path()).ablate_self_attention();
  ASSERT_EQ(x.table.rows.size(), 2u);
  EXPECT_EQ(x.table.to_text(), y.table.to_text());
  EXPECT_EQ(read_file(x.result_path), read_file(y.result_path));
}

TEST(Gradcheck, SuiteCommandPasses) {
  const CommandOutput out = gradcheck(1, std::nullopt);
  EXPECT_EQ(out.failures, 0u) << out.summary;
  EXPECT_TRUE(out.result_path.empty());
  EXPECT_GT(out.table.rows.size(), 30u);
}

TEST(SyntheticSpecJson, ParsesAndRejects) {
  const SyntheticSpec s = parse_synthetic_spec(R"({"regime": "complementary", "conversations": 12, "seed": 3})");
  EXPECT_EQ(s.regime, Regime::kComplementary);
  EXPECT_EQ(s.num_conversations, 12u);
  EXPECT_EQ(s.seed, 3u);
  EXPECT_EQ(error_code_of([] { parse_synthetic_spec(R"({"speakers": 2})"); }), ErrorCode::kConfig);
  EXPECT_EQ(error_code_of([] { parse_synthetic_spec(R"({"conversations": "many"})"); }), ErrorCode::kConfig);
}

}  // namespace
}  // namespace hierfuse
