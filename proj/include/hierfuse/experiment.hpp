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
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hierfuse/dataio.hpp"
#include "hierfuse/pipeline.hpp"

namespace hierfuse {

/// Optimization settings of one training schedule.
struct StageSettings {
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  double clip_norm = 0.25;
  std::size_t patience = 20;
};

/// Contents of an experiment configuration file (JSON):
///   manifest, output_dir     paths, relative to the file's directory
///   seeds                    list of unsigned integers
///   arch {d_model, d_ff, conv_layers, conv_kernel, dropout, self_attention}
///   loss {beta, tau, self_exclusion, class_weights}
///   train {learning_rate, batch_size, max_epochs, clip_norm, patience}
///   stage1 / stage2 / stage3 / joint23   same keys as train; override it
///   ensemble {grid_step}
/// Every key is optional; unknown keys are rejected.
struct ExperimentConfig {
  std::filesystem::path manifest;
  std::filesystem::path output_dir;
  std::vector<std::uint64_t> seeds = {1};
  ArchConfig arch;
  LossConfig loss;
  StageSettings stage1;
  StageSettings stage2;
  StageSettings stage3;
  StageSettings joint23;
  double grid_step = 0.1;

  void validate() const;
  /// Canonical JSON; parse_experiment_config(to_json()) reproduces the config.
  std::string to_json() const;
  const StageSettings& settings(Schedule s) const;
  TrainConfig train_config(Schedule s, Modality m, std::uint64_t seed) const;
};

/// `overrides` is a JSON object merged over the file contents before
/// parsing (RFC 7386 merge patch), so flags win over the file. Paths in the
/// overrides should be absolute.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir,
                                         const std::string& overrides = "");
ExperimentConfig load_experiment_config(const std::filesystem::path& path, const std::string& overrides = "");

/// Machine-readable command result: tab-separated with a versioned header
///   # hierfuse-result v1 <command>
///   col<TAB>col...
///   value<TAB>value...
struct ResultTable {
  std::string command;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  std::string to_text() const;
};

struct CommandOutput {
  ResultTable table;
  std::string summary;
  std::filesystem::path result_path;   // empty when nothing was written
  std::filesystem::path summary_path;
  std::size_t failures = 0;  // checks that did not pass, for verification commands
};

/// Writes `<dir>/results/<name>.tsv` and `.txt`; refuses to replace either.
void write_command_output(CommandOutput& out, const std::filesystem::path& dir, const std::string& name);

/// Artifacts of one seed live in `<output_dir>/seed-<seed>/` as
/// `<stem>.ckpt`, `<stem>.store` and `<stem>.predictions.tsv`, with stems
/// stage1-audio, stage1-text, stage2-audio, stage2-text, stage3, joint23.
/// Every command refuses to overwrite an existing artifact or result.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig config);
  Experiment(ExperimentConfig config, std::shared_ptr<const Dataset> data);

  const ExperimentConfig& config() const { return config_; }
  const Dataset& dataset();
  std::filesystem::path seed_dir(std::uint64_t seed) const;
  static std::string artifact_stem(Schedule s, Modality m);

  /// Trains the schedule for every seed; stages 1 and 2 cover both
  /// modalities unless one is given.
  CommandOutput train(Schedule s, std::optional<Modality> m = std::nullopt);
  /// Writes embedding stores and predictions of trained checkpoints.
  CommandOutput extract(Schedule s, std::optional<Modality> m = std::nullopt);
  /// Test F1 per stage; with ensembling, weights are searched on validation.
  CommandOutput evaluate(bool with_ensembling);
  /// beta or tau: full hierarchy per grid value. alpha: stage-2 ensemble
  /// curves from existing predictions. One result row per grid value.
  CommandOutput sweep(const std::string& param, const std::vector<double>& grid);
  /// Stage 2 with and without self-attention on shared stage-1 embeddings.
  CommandOutput ablate_self_attention();
  /// Every schedule (including joint23) trained and extracted, then evaluated
  /// with ensembling.
  CommandOutput run_all();

 private:
  std::vector<std::vector<std::string>> train_seed(std::uint64_t seed, Schedule s, const std::vector<Modality>& ms);
  std::vector<std::vector<std::string>> extract_seed(std::uint64_t seed, Schedule s,
                                                     const std::vector<Modality>& ms);
  void require_fresh(const std::string& name) const;
  CommandOutput finish(const std::string& name, ResultTable table, std::string summary);

  ExperimentConfig config_;
  std::shared_ptr<const Dataset> data_;
};

/// Synthetic spec from a JSON object with any of the keys regime,
/// conversations, min_length, max_length, classes, audio_dim, text_dim,
/// min_frames, max_frames, window, stay_probability, audio_noise, text_noise,
/// val_fraction, test_fraction, seed. Unknown keys are rejected.
SyntheticSpec parse_synthetic_spec(const std::string& text);

/// Generates a synthetic dataset into `out_dir` and records its Bayes
/// accuracies as a result file.
CommandOutput synthesize(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

/// Runs the gradient suite; results are written only when `out_dir` is set.
/// Failed checks are counted in `failures`, not thrown.
CommandOutput gradcheck(std::uint64_t seed, const std::optional<std::filesystem::path>& out_dir);

/// Mean and sample standard deviation (0 for fewer than two values).
std::pair<double, double> mean_std(const std::vector<double>& values);

}  // namespace hierfuse
