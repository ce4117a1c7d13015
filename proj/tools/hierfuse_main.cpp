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

// Command-line front end. Every subcommand maps to one call of the C API;
// the returned status is the process exit code.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hierfuse/hierfuse.h"
#include "json.hpp"

namespace {

using json = nlohmann::json;

/// Flags shared by every command that runs on an experiment configuration.
struct ExperimentFlags {
  std::string config;
  std::string manifest;
  std::string out;
  std::vector<std::uint64_t> seeds;
  std::optional<std::size_t> d_model;
  std::optional<double> dropout;
  std::optional<double> lr;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> patience;
  std::optional<double> clip;
  std::optional<double> beta;
  std::optional<double> tau;
  std::optional<std::string> self_exclusion;
  std::optional<double> grid_step;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "Experiment configuration file (JSON)")->check(CLI::ExistingFile);
    app->add_option("--manifest", manifest, "Dataset manifest; overrides the config");
    app->add_option("--out", out, "Output directory; overrides the config");
    app->add_option("--seeds", seeds, "Seed list, e.g. --seeds 1,2,3")->delimiter(',');
    app->add_option("--d-model", d_model, "Model width");
    app->add_option("--dropout", dropout, "Dropout rate");
    app->add_option("--lr", lr, "Learning rate for every stage");
    app->add_option("--epochs", epochs, "Maximum epochs for every stage");
    app->add_option("--batch-size", batch_size, "Batch size for every stage");
    app->add_option("--patience", patience, "Early-stopping patience for every stage");
    app->add_option("--clip", clip, "Gradient clipping L2 norm for every stage");
    app->add_option("--beta", beta, "Cross-entropy weight of the combined loss");
    app->add_option("--tau", tau, "Contrastive temperature");
    app->add_option("--self-exclusion", self_exclusion, "Exclude the anchor from its contrastive sums")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--grid-step", grid_step, "Ensemble weight grid step");
  }

  std::string overrides() const {
    json j = json::object();
    auto abs = [](const std::string& p) { return std::filesystem::absolute(p).lexically_normal().string(); };
    if (!manifest.empty()) j["manifest"] = abs(manifest);
    if (!out.empty()) j["output_dir"] = abs(out);
    if (!seeds.empty()) j["seeds"] = seeds;
    if (d_model) j["arch"]["d_model"] = *d_model;
    if (dropout) j["arch"]["dropout"] = *dropout;
    if (beta) j["loss"]["beta"] = *beta;
    if (tau) j["loss"]["tau"] = *tau;
    if (self_exclusion) j["loss"]["self_exclusion"] = *self_exclusion == "on";
    if (grid_step) j["ensemble"]["grid_step"] = *grid_step;
    json train = json::object();
    if (lr) train["learning_rate"] = *lr;
    if (epochs) train["max_epochs"] = *epochs;
    if (batch_size) train["batch_size"] = *batch_size;
    if (patience) train["patience"] = *patience;
    if (clip) train["clip_norm"] = *clip;
    // Flags win over stage-specific file settings too.
    if (!train.empty())
      for (const char* block : {"train", "stage1", "stage2", "stage3", "joint23"}) j[block] = train;
    return j.dump();
  }
};

int report_failure(hf_status status) {
  std::fprintf(stderr, "hierfuse: %s\n", hf_last_error());
  return static_cast<int>(status);
}

/// Prints the summary of a finished command and releases it.
int finish(hf_status status, hf_result* result) {
  if (result != nullptr) {
    std::fputs(hf_result_summary(result), stdout);
    if (*hf_result_path(result) != '\0') std::printf("results: %s\n", hf_result_path(result));
    hf_result_free(result);
  }
  return status == HF_OK ? 0 : report_failure(status);
}

template <typename F>
int with_experiment(const ExperimentFlags& flags, F&& command) {
  hf_experiment* experiment = nullptr;
  const std::string overrides = flags.overrides();
  hf_status status =
      hf_experiment_open(flags.config.empty() ? nullptr : flags.config.c_str(), overrides.c_str(), &experiment);
  if (status != HF_OK) return report_failure(status);
  hf_result* result = nullptr;
  status = command(experiment, &result);
  const int code = finish(status, result);
  hf_experiment_free(experiment);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical multi-modal emotion recognition: training, evaluation and verification"};
  app.set_version_flag("--version", hf_version());
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with known Bayes accuracy");
  std::string synth_out, regime = "context-free";
  std::optional<std::size_t> conversations, length, min_length, max_length, classes, audio_dim, text_dim, window;
  std::optional<double> stay, audio_noise, text_noise;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("--out", synth_out, "Output directory (must be empty or absent)")->required();
  synth->add_option("--regime", regime, "Label regime")
      ->check(CLI::IsMember({"context-free", "contextual", "complementary", "composite"}));
  synth->add_option("--conversations", conversations, "Number of conversations");
  synth->add_option("--length", length, "Conversation length (sets min and max)");
  synth->add_option("--min-length", min_length, "Minimum conversation length");
  synth->add_option("--max-length", max_length, "Maximum conversation length");
  synth->add_option("--classes", classes, "Number of classes");
  synth->add_option("--audio-dim", audio_dim, "Audio frame width");
  synth->add_option("--text-dim", text_dim, "Text token width");
  synth->add_option("--window", window, "Context window of the label rule");
  synth->add_option("--stay", stay, "Probability that the latent state persists");
  synth->add_option("--audio-noise", audio_noise, "Audio observation noise");
  synth->add_option("--text-noise", text_noise, "Text observation noise");
  synth->add_option("--seed", synth_seed, "Generator seed");

  // train / extract
  ExperimentFlags train_flags, extract_flags, eval_flags, sweep_flags, ablate_flags, run_flags;
  std::string train_stage, extract_stage;
  std::optional<std::string> train_modality, extract_modality;
  auto* train = app.add_subcommand("train", "Train one stage of the hierarchy");
  train->add_option("--stage", train_stage, "1, 2, 3 or joint23")
      ->required()
      ->check(CLI::IsMember({"1", "2", "3", "joint23"}));
  train->add_option("--modality", train_modality, "audio or text (default: both)")
      ->check(CLI::IsMember({"audio", "text", "fused"}));
  train_flags.attach(train);

  auto* extract = app.add_subcommand("extract", "Write embeddings and predictions of a trained stage");
  extract->add_option("--stage", extract_stage, "1, 2, 3 or joint23")
      ->required()
      ->check(CLI::IsMember({"1", "2", "3", "joint23"}));
  extract->add_option("--modality", extract_modality, "audio or text (default: both)")
      ->check(CLI::IsMember({"audio", "text", "fused"}));
  extract_flags.attach(extract);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Score every stage on validation and test data");
  bool no_ensembling = false;
  auto* with_flag = evaluate->add_flag("--with-ensembling", "Search ensemble weights on validation (default)");
  auto* without_flag = evaluate->add_flag("--no-ensembling", no_ensembling, "Report the fused stage alone");
  with_flag->excludes(without_flag);
  eval_flags.attach(evaluate);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Vary one hyperparameter over a grid");
  std::string sweep_param;
  std::vector<double> sweep_grid;
  sweep->add_option("--param", sweep_param, "beta, tau or alpha")
      ->required()
      ->check(CLI::IsMember({"beta", "tau", "alpha"}));
  sweep->add_option("--grid", sweep_grid, "Comma-separated values")->required()->delimiter(',');
  sweep_flags.attach(sweep);

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference verification of every gradient");
  std::uint64_t grad_seed = 1;
  std::string grad_out;
  grad->add_option("--seed", grad_seed, "Seed for the random fixtures");
  grad->add_option("--out", grad_out, "Directory for the result files");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "Paired comparison with a component removed");
  std::string self_attention;
  ablate->add_option("--self-attention", self_attention, "Remove the contextual self-attention block")
      ->required()
      ->check(CLI::IsMember({"off"}));
  ablate_flags.attach(ablate);

  // run
  auto* run = app.add_subcommand("run", "Train and extract every stage, then evaluate with ensembling");
  run_flags.attach(run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return HF_ERR_USAGE;
  }

  if (synth->parsed()) {
    json spec = {{"regime", regime}};
    if (conversations) spec["conversations"] = *conversations;
    if (length) spec["min_length"] = spec["max_length"] = *length;
    if (min_length) spec["min_length"] = *min_length;
    if (max_length) spec["max_length"] = *max_length;
    if (classes) spec["classes"] = *classes;
    if (audio_dim) spec["audio_dim"] = *audio_dim;
    if (text_dim) spec["text_dim"] = *text_dim;
    if (window) spec["window"] = *window;
    if (stay) spec["stay_probability"] = *stay;
    if (audio_noise) spec["audio_noise"] = *audio_noise;
    if (text_noise) spec["text_noise"] = *text_noise;
    if (synth_seed) spec["seed"] = *synth_seed;
    hf_result* result = nullptr;
    const hf_status status = hf_synth(spec.dump().c_str(), synth_out.c_str(), &result);
    return finish(status, result);
  }
  if (grad->parsed()) {
    hf_result* result = nullptr;
    const hf_status status = hf_gradcheck(grad_seed, grad_out.empty() ? nullptr : grad_out.c_str(), &result);
    return finish(status, result);
  }
  if (train->parsed())
    return with_experiment(train_flags, [&](hf_experiment* e, hf_result** r) {
      return hf_train(e, train_stage.c_str(), train_modality ? train_modality->c_str() : nullptr, r);
    });
  if (extract->parsed())
    return with_experiment(extract_flags, [&](hf_experiment* e, hf_result** r) {
      return hf_extract(e, extract_stage.c_str(), extract_modality ? extract_modality->c_str() : nullptr, r);
    });
  if (evaluate->parsed())
    return with_experiment(eval_flags, [&](hf_experiment* e, hf_result** r) {
      return hf_evaluate(e, no_ensembling ? 0 : 1, r);
    });
  if (sweep->parsed())
    return with_experiment(sweep_flags, [&](hf_experiment* e, hf_result** r) {
      return hf_sweep(e, sweep_param.c_str(), sweep_grid.data(), sweep_grid.size(), r);
    });
  if (ablate->parsed())
    return with_experiment(ablate_flags, [&](hf_experiment* e, hf_result** r) { return hf_ablate_self_attention(e, r); });
  if (run->parsed())
    return with_experiment(run_flags, [&](hf_experiment* e, hf_result** r) { return hf_run_all(e, r); });
  return HF_ERR_USAGE;
}
