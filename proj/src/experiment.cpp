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

#include "hierfuse/experiment.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "hierfuse/error.hpp"
#include "hierfuse/gradient_suite.hpp"
#include "json.hpp"

namespace hierfuse {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
  return buf;
}

/// Shortest form that reads back to the same double, for grid values.
std::string shortest(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string mean_pm_std(const std::vector<double>& values) {
  const auto [m, s] = mean_std(values);
  return fixed6(m) + " +/- " + fixed6(s);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  require(obj.is_object(), ErrorCode::kConfig, where + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    require(known, ErrorCode::kConfig, "unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read_key(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

void read_settings(const json& obj, const std::string& where, StageSettings& s) {
  check_keys(obj, {"learning_rate", "batch_size", "max_epochs", "clip_norm", "patience"}, where);
  read_key(obj, "learning_rate", s.learning_rate);
  read_key(obj, "batch_size", s.batch_size);
  read_key(obj, "max_epochs", s.max_epochs);
  read_key(obj, "clip_norm", s.clip_norm);
  read_key(obj, "patience", s.patience);
}

json settings_json(const StageSettings& s) {
  return {{"learning_rate", s.learning_rate},
          {"batch_size", s.batch_size},
          {"max_epochs", s.max_epochs},
          {"clip_norm", s.clip_norm},
          {"patience", s.patience}};
}

std::vector<Modality> modalities_for(Schedule s, std::optional<Modality> m) {
  if (schedule_stage(s) == 3) {
    require(!m || *m == Modality::kFused, ErrorCode::kUsage,
            "stage " + std::string(schedule_name(s)) + " only has the fused modality");
    return {Modality::kFused};
  }
  if (m) {
    require(*m != Modality::kFused, ErrorCode::kUsage,
            "stage " + std::string(schedule_name(s)) + " trains audio or text, not fused");
    return {*m};
  }
  return {Modality::kAudio, Modality::kText};
}

std::string command_name(const std::string& verb, Schedule s, std::optional<Modality> m) {
  std::string name = verb + "-stage" + std::string(schedule_name(s));
  if (s == Schedule::kJoint23) name = verb + "-joint23";
  if (m && *m != Modality::kFused) name += "-" + std::string(modality_name(*m));
  return name;
}

void refuse_existing(const fs::path& p) {
  if (fs::exists(p)) fail(ErrorCode::kOutputExists, p.string() + " already exists; refusing to overwrite");
}

fs::path artifact(const fs::path& dir, const std::string& stem, const char* ext) { return dir / (stem + ext); }

EmbeddingStore load_store(const fs::path& dir, const std::string& stem) {
  return EmbeddingStore::load(artifact(dir, stem, ".store"));
}

std::vector<fs::path> frozen_inputs(const fs::path& dir, const std::vector<std::string>& stems, bool with_stores) {
  std::vector<fs::path> paths;
  for (const auto& stem : stems) {
    const fs::path ckpt = artifact(dir, stem, ".ckpt");
    if (!fs::exists(ckpt)) fail(ErrorCode::kMissingCheckpoint, "checkpoint not found: " + ckpt.string());
    paths.push_back(ckpt);
    if (with_stores) {
      const fs::path store = artifact(dir, stem, ".store");
      if (!fs::exists(store))
        fail(ErrorCode::kMissingStore, "embedding store not found: " + store.string() + " (run extract first)");
      paths.push_back(store);
    }
  }
  return paths;
}

/// Stems of the stores a schedule consumes, audio first.
std::vector<std::string> upstream_stems(Schedule s, Modality m) {
  switch (s) {
    case Schedule::kStage1: return {};
    case Schedule::kStage2: return {Experiment::artifact_stem(Schedule::kStage1, m)};
    case Schedule::kStage3:
      return {Experiment::artifact_stem(Schedule::kStage2, Modality::kAudio),
              Experiment::artifact_stem(Schedule::kStage2, Modality::kText)};
    case Schedule::kJoint23:
      return {Experiment::artifact_stem(Schedule::kStage1, Modality::kAudio),
              Experiment::artifact_stem(Schedule::kStage1, Modality::kText)};
  }
  return {};
}

/// Earlier-stage artifacts that must stay untouched while `s` trains.
std::vector<std::string> frozen_stems(Schedule s, Modality m) {
  std::vector<std::string> stems = upstream_stems(s, m);
  if (s == Schedule::kStage3) {
    stems.push_back(Experiment::artifact_stem(Schedule::kStage1, Modality::kAudio));
    stems.push_back(Experiment::artifact_stem(Schedule::kStage1, Modality::kText));
  }
  return stems;
}

PredictionStore load_predictions(const fs::path& dir, const std::string& stem) {
  const fs::path p = artifact(dir, stem, ".predictions.tsv");
  if (!fs::exists(p)) fail(ErrorCode::kMissingStore, "predictions not found: " + p.string() + " (run extract first)");
  return PredictionStore::load(p);
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  if (values.size() < 2) return {m, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return {m, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  require(!manifest.empty(), ErrorCode::kConfig, "manifest path is required");
  require(!output_dir.empty(), ErrorCode::kConfig, "output_dir is required");
  require(!seeds.empty(), ErrorCode::kConfig, "seeds must not be empty");
  require(std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() == seeds.size(), ErrorCode::kConfig,
          "seeds must be distinct");
  arch.validate();
  loss.validate();
  for (Schedule s : {Schedule::kStage1, Schedule::kStage2, Schedule::kStage3, Schedule::kJoint23})
    train_config(s, schedule_stage(s) == 3 ? Modality::kFused : Modality::kAudio, seeds.front()).validate();
  try {
    alpha_grid(grid_step);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("ensemble.grid_step: ") + e.what());
  }
}

const StageSettings& ExperimentConfig::settings(Schedule s) const {
  switch (s) {
    case Schedule::kStage1: return stage1;
    case Schedule::kStage2: return stage2;
    case Schedule::kStage3: return stage3;
    case Schedule::kJoint23: return joint23;
  }
  return stage1;
}

TrainConfig ExperimentConfig::train_config(Schedule s, Modality m, std::uint64_t seed) const {
  const StageSettings& st = settings(s);
  TrainConfig c;
  c.schedule = s;
  c.modality = m;
  c.arch = arch;
  c.loss = loss;
  c.learning_rate = st.learning_rate;
  c.batch_size = st.batch_size;
  c.max_epochs = st.max_epochs;
  c.clip_norm = st.clip_norm;
  c.patience = st.patience;
  c.seed = seed;
  return c;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["manifest"] = manifest.string();
  j["output_dir"] = output_dir.string();
  j["seeds"] = seeds;
  j["arch"] = {{"d_model", arch.d_model},         {"d_ff", arch.d_ff},       {"conv_layers", arch.conv_layers},
               {"conv_kernel", arch.conv_kernel}, {"dropout", arch.dropout}, {"self_attention", arch.self_attention}};
  j["loss"] = {{"beta", loss.beta},
               {"tau", loss.tau},
               {"self_exclusion", loss.self_exclusion},
               {"class_weights", loss.class_weights}};
  j["stage1"] = settings_json(stage1);
  j["stage2"] = settings_json(stage2);
  j["stage3"] = settings_json(stage3);
  j["joint23"] = settings_json(joint23);
  j["ensemble"] = {{"grid_step", grid_step}};
  return j.dump(2);
}

ExperimentConfig parse_experiment_config(const std::string& text, const fs::path& base_dir,
                                         const std::string& overrides) {
  json j;
  try {
    j = text.empty() ? json::object() : json::parse(text);
    if (!overrides.empty()) j.merge_patch(json::parse(overrides));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c;
  try {
    check_keys(j, {"manifest", "output_dir", "seeds", "arch", "loss", "train", "stage1", "stage2", "stage3", "joint23",
                   "ensemble"},
               "config");
    auto path_key = [&](const char* key, fs::path& out) {
      if (!j.contains(key)) return;
      const fs::path p = j.at(key).get<std::string>();
      out = p.is_absolute() ? p : base_dir / p;
    };
    path_key("manifest", c.manifest);
    path_key("output_dir", c.output_dir);
    read_key(j, "seeds", c.seeds);
    if (j.contains("arch")) {
      const json& a = j.at("arch");
      check_keys(a, {"d_model", "d_ff", "conv_layers", "conv_kernel", "dropout", "self_attention"}, "arch");
      read_key(a, "d_model", c.arch.d_model);
      read_key(a, "d_ff", c.arch.d_ff);
      read_key(a, "conv_layers", c.arch.conv_layers);
      read_key(a, "conv_kernel", c.arch.conv_kernel);
      read_key(a, "dropout", c.arch.dropout);
      read_key(a, "self_attention", c.arch.self_attention);
    }
    if (j.contains("loss")) {
      const json& l = j.at("loss");
      check_keys(l, {"beta", "tau", "self_exclusion", "class_weights"}, "loss");
      read_key(l, "beta", c.loss.beta);
      read_key(l, "tau", c.loss.tau);
      read_key(l, "self_exclusion", c.loss.self_exclusion);
      read_key(l, "class_weights", c.loss.class_weights);
    }
    StageSettings defaults;
    if (j.contains("train")) read_settings(j.at("train"), "train", defaults);
    c.stage1 = c.stage2 = c.stage3 = c.joint23 = defaults;
    if (j.contains("stage1")) read_settings(j.at("stage1"), "stage1", c.stage1);
    if (j.contains("stage2")) read_settings(j.at("stage2"), "stage2", c.stage2);
    if (j.contains("stage3")) read_settings(j.at("stage3"), "stage3", c.stage3);
    if (j.contains("joint23")) read_settings(j.at("joint23"), "joint23", c.joint23);
    if (j.contains("ensemble")) {
      check_keys(j.at("ensemble"), {"grid_step"}, "ensemble");
      read_key(j.at("ensemble"), "grid_step", c.grid_step);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("config value has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path, const std::string& overrides) {
  if (!fs::exists(path)) fail(ErrorCode::kConfig, "config file not found: " + path.string());
  return parse_experiment_config(detail::read_text_file(path, ErrorCode::kConfig), path.parent_path(), overrides);
}

// ---------------------------------------------------------------------------
// Result files
// ---------------------------------------------------------------------------

std::string ResultTable::to_text() const {
  std::string out = "# hierfuse-result v1 " + command + "\n";
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "\t" : "") + cells[i];
    out += "\n";
  };
  line(columns);
  for (const auto& r : rows) line(r);
  return out;
}

void write_command_output(CommandOutput& out, const fs::path& dir, const std::string& name) {
  const fs::path results = dir / "results";
  out.result_path = results / (name + ".tsv");
  out.summary_path = results / (name + ".txt");
  refuse_existing(out.result_path);
  refuse_existing(out.summary_path);
  detail::write_text_file(out.result_path, out.table.to_text());
  detail::write_text_file(out.summary_path, out.summary);
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

Experiment::Experiment(ExperimentConfig config) : config_(std::move(config)) { config_.validate(); }

Experiment::Experiment(ExperimentConfig config, std::shared_ptr<const Dataset> data)
    : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
}

const Dataset& Experiment::dataset() {
  if (!data_) data_ = std::make_shared<const Dataset>(load_dataset(config_.manifest));
  return *data_;
}

fs::path Experiment::seed_dir(std::uint64_t seed) const {
  return config_.output_dir / ("seed-" + std::to_string(seed));
}

std::string Experiment::artifact_stem(Schedule s, Modality m) {
  switch (s) {
    case Schedule::kStage1: return "stage1-" + std::string(modality_name(m));
    case Schedule::kStage2: return "stage2-" + std::string(modality_name(m));
    case Schedule::kStage3: return "stage3";
    case Schedule::kJoint23: return "joint23";
  }
  return "";
}

void Experiment::require_fresh(const std::string& name) const {
  refuse_existing(config_.output_dir / "results" / (name + ".tsv"));
  refuse_existing(config_.output_dir / "results" / (name + ".txt"));
}

CommandOutput Experiment::finish(const std::string& name, ResultTable table, std::string summary) {
  CommandOutput out{std::move(table), std::move(summary), {}, {}};
  write_command_output(out, config_.output_dir, name);
  return out;
}

std::vector<std::vector<std::string>> Experiment::train_seed(std::uint64_t seed, Schedule s,
                                                             const std::vector<Modality>& ms) {
  const Dataset& data = dataset();
  const fs::path dir = seed_dir(seed);
  std::vector<std::vector<std::string>> rows;
  for (Modality m : ms) {
    const fs::path ckpt_path = artifact(dir, artifact_stem(s, m), ".ckpt");
    refuse_existing(ckpt_path);
    const TrainConfig tc = config_.train_config(s, m, seed);
    const FrozenGuard guard(frozen_inputs(dir, frozen_stems(s, m), true));
    const auto up = upstream_stems(s, m);
    TrainResult r;
    switch (s) {
      case Schedule::kStage1: r = train_stage1(tc, data); break;
      case Schedule::kStage2: r = train_stage2(tc, data, load_store(dir, up[0])); break;
      case Schedule::kStage3: r = train_stage3(tc, data, load_store(dir, up[0]), load_store(dir, up[1])); break;
      case Schedule::kJoint23:
        r = train_nonhierarchical(tc, data, load_store(dir, up[0]), load_store(dir, up[1]));
        break;
    }
    guard.verify();
    save_checkpoint(ckpt_path, r.checkpoint);
    rows.push_back({std::to_string(seed), std::string(schedule_name(s)), std::string(modality_name(m)),
                    std::to_string(r.best_epoch), std::to_string(r.history.size()), fixed6(r.best_val_f1),
                    hex64(r.checkpoint.content_hash())});
  }
  return rows;
}

std::vector<std::vector<std::string>> Experiment::extract_seed(std::uint64_t seed, Schedule s,
                                                               const std::vector<Modality>& ms) {
  const Dataset& data = dataset();
  const fs::path dir = seed_dir(seed);
  std::vector<std::vector<std::string>> rows;
  for (Modality m : ms) {
    const std::string stem = artifact_stem(s, m);
    const fs::path store_path = artifact(dir, stem, ".store");
    const fs::path pred_path = artifact(dir, stem, ".predictions.tsv");
    refuse_existing(store_path);
    refuse_existing(pred_path);
    const Checkpoint ckpt =
        load_checkpoint(artifact(dir, stem, ".ckpt"), schedule_stage(s), m, config_.arch.d_model);
    require(ckpt.config().schedule == s, ErrorCode::kStageMismatch,
            artifact(dir, stem, ".ckpt").string() + " was trained with schedule " +
                std::string(schedule_name(ckpt.config().schedule)));
    const auto up_stems = upstream_stems(s, m);
    const FrozenGuard guard(frozen_inputs(dir, up_stems, true));
    std::vector<EmbeddingStore> stores;
    for (const auto& stem_up : up_stems) stores.push_back(load_store(dir, stem_up));
    Upstream up;
    if (s == Schedule::kStage2)
      (m == Modality::kAudio ? up.audio : up.text) = &stores[0];
    else if (stores.size() == 2)
      up = {&stores[0], &stores[1]};
    const Extraction ex = hierfuse::extract(ckpt, data, up);
    guard.verify();
    ex.embeddings.save(store_path);
    ex.predictions.save(pred_path);
    const StageKey key = prediction_key(ckpt);
    rows.push_back({std::to_string(seed), std::string(schedule_name(s)), std::string(modality_name(m)),
                    std::to_string(ex.embeddings.size()), hex64(file_hash(store_path)),
                    fixed6(split_f1(ex.predictions, key, data.manifest, Split::kVal)),
                    fixed6(split_f1(ex.predictions, key, data.manifest, Split::kTest))});
  }
  return rows;
}

CommandOutput Experiment::train(Schedule s, std::optional<Modality> m) {
  const std::string name = command_name("train", s, m);
  require_fresh(name);
  const auto ms = modalities_for(s, m);
  ResultTable table{name, {"seed", "stage", "modality", "best_epoch", "epochs_run", "best_val_f1", "checkpoint_hash"}, {}};
  for (std::uint64_t seed : config_.seeds)
    for (auto& row : train_seed(seed, s, ms)) table.rows.push_back(std::move(row));
  std::ostringstream summary;
  summary << "train stage " << schedule_name(s) << "\n";
  for (Modality mod : ms) {
    std::vector<double> f1;
    for (const auto& row : table.rows)
      if (row[2] == modality_name(mod)) f1.push_back(std::stod(row[5]));
    summary << "  " << modality_name(mod) << ": best validation weighted F1 " << mean_pm_std(f1) << " over "
            << f1.size() << " seed(s)\n";
  }
  return finish(name, std::move(table), summary.str());
}

CommandOutput Experiment::extract(Schedule s, std::optional<Modality> m) {
  const std::string name = command_name("extract", s, m);
  require_fresh(name);
  const auto ms = modalities_for(s, m);
  ResultTable table{name, {"seed", "stage", "modality", "utterances", "store_hash", "val_f1", "test_f1"}, {}};
  for (std::uint64_t seed : config_.seeds)
    for (auto& row : extract_seed(seed, s, ms)) table.rows.push_back(std::move(row));
  std::ostringstream summary;
  summary << "extract stage " << schedule_name(s) << "\n";
  for (Modality mod : ms) {
    std::vector<double> val, test;
    for (const auto& row : table.rows)
      if (row[2] == modality_name(mod)) val.push_back(std::stod(row[5])), test.push_back(std::stod(row[6]));
    summary << "  " << modality_name(mod) << ": validation F1 " << mean_pm_std(val) << ", test F1 "
            << mean_pm_std(test) << "\n";
  }
  return finish(name, std::move(table), summary.str());
}

CommandOutput Experiment::evaluate(bool with_ensembling) {
  const std::string name = with_ensembling ? "evaluate-ensembling" : "evaluate-no-ensembling";
  require_fresh(name);
  const Manifest& manifest = dataset().manifest;
  const auto val_ids = split_ids(manifest, Split::kVal);
  const auto val_labels = split_labels(manifest, Split::kVal);
  const auto test_ids = split_ids(manifest, Split::kTest);
  const auto test_labels = split_labels(manifest, Split::kTest);
  require(!val_ids.empty() && !test_ids.empty(), ErrorCode::kEmptySplit, "evaluation needs validation and test data");
  const std::size_t C = manifest.num_classes;

  ResultTable table{name, {"seed", "source", "val_f1", "test_f1"}, {}};
  std::ostringstream detail_text;
  for (std::uint64_t seed : config_.seeds) {
    const fs::path dir = seed_dir(seed);
    PredictionStore preds(C);
    preds.merge(load_predictions(dir, "stage3"));
    std::vector<StageKey> keys = {StageKey::kC};
    if (with_ensembling) {
      for (Schedule s : {Schedule::kStage1, Schedule::kStage2})
        for (Modality m : {Modality::kAudio, Modality::kText}) preds.merge(load_predictions(dir, artifact_stem(s, m)));
      keys = {StageKey::kA1, StageKey::kT1, StageKey::kA2, StageKey::kT2, StageKey::kC};
    }
    auto f1_of = [&](const Tensor& probs, const std::vector<int>& labels) {
      return weighted_f1(argmax_rows(probs), labels, C);
    };
    for (StageKey k : keys)
      table.rows.push_back({std::to_string(seed), std::string(stage_key_name(k)),
                            fixed6(f1_of(preds.gather(k, val_ids), val_labels)),
                            fixed6(f1_of(preds.gather(k, test_ids), test_labels))});
    Tensor final_test = preds.gather(StageKey::kC, test_ids);
    if (with_ensembling) {
      const EnsembleSearch es = search_ensemble_weights(preds, val_ids, val_labels, config_.grid_step);
      final_test = apply_ensemble(preds, test_ids, es.weights);
      table.rows.push_back(
          {std::to_string(seed), "ensemble", fixed6(es.f1_final), fixed6(f1_of(final_test, test_labels))});
      const EnsembleWeights& w = es.weights;
      detail_text << "seed " << seed << " weights: alpha_a_12=" << shortest(w.alpha_a_12)
                  << " alpha_t_12=" << shortest(w.alpha_t_12) << " alpha_c=" << shortest(w.alpha_c)
                  << " alpha_a_23=" << shortest(w.alpha_a_23) << " alpha_t_23=" << shortest(w.alpha_t_23) << "\n";
    }
    const fs::path joint = artifact(dir, "joint23", ".predictions.tsv");
    if (fs::exists(joint)) {
      const PredictionStore jp = PredictionStore::load(joint);
      table.rows.push_back({std::to_string(seed), "joint23", fixed6(f1_of(jp.gather(StageKey::kC, val_ids), val_labels)),
                            fixed6(f1_of(jp.gather(StageKey::kC, test_ids), test_labels))});
    }
    detail_text << "seed " << seed << " test report (" << (with_ensembling ? "ensemble" : "stage 3") << "):\n"
                << evaluate_predictions(argmax_rows(final_test), test_labels, C).to_text();
  }

  std::ostringstream summary;
  summary << "evaluate " << (with_ensembling ? "with" : "without") << " ensembling, " << config_.seeds.size()
          << " seed(s)\n";
  std::vector<std::string> sources;
  for (const auto& row : table.rows)
    if (std::find(sources.begin(), sources.end(), row[1]) == sources.end()) sources.push_back(row[1]);
  for (const auto& src : sources) {
    std::vector<double> val, test;
    for (const auto& row : table.rows)
      if (row[1] == src) val.push_back(std::stod(row[2])), test.push_back(std::stod(row[3]));
    summary << "  " << src << ": validation F1 " << mean_pm_std(val) << ", test F1 " << mean_pm_std(test) << "\n";
  }
  summary << detail_text.str();
  return finish(name, std::move(table), summary.str());
}

CommandOutput Experiment::sweep(const std::string& param, const std::vector<double>& grid) {
  require(param == "beta" || param == "tau" || param == "alpha", ErrorCode::kUsage,
          "unknown sweep parameter '" + param + "' (expected beta, tau or alpha)");
  require(!grid.empty(), ErrorCode::kUsage, "sweep grid is empty");
  const std::string name = "sweep-" + param;
  require_fresh(name);
  const Manifest& manifest = dataset().manifest;
  const std::size_t C = manifest.num_classes;
  const auto val_ids = split_ids(manifest, Split::kVal);
  const auto val_labels = split_labels(manifest, Split::kVal);
  const auto test_ids = split_ids(manifest, Split::kTest);
  const auto test_labels = split_labels(manifest, Split::kTest);
  auto f1_of = [&](const Tensor& probs, const std::vector<int>& labels) {
    return weighted_f1(argmax_rows(probs), labels, C);
  };

  ResultTable table{name, {}, {}};
  std::ostringstream summary;
  if (param == "alpha") {
    for (double a : grid)
      require(a >= 0.0 && a <= 1.0, ErrorCode::kUsage, "alpha grid values must lie in [0, 1]");
    table.columns = {"alpha", "audio_val_f1", "audio_test_f1", "text_val_f1", "text_test_f1"};
    std::vector<PredictionStore> stores;
    for (std::uint64_t seed : config_.seeds) {
      PredictionStore p(C);
      for (Schedule s : {Schedule::kStage1, Schedule::kStage2})
        for (Modality m : {Modality::kAudio, Modality::kText}) p.merge(load_predictions(seed_dir(seed), artifact_stem(s, m)));
      stores.push_back(std::move(p));
    }
    summary << "stage-2 ensemble F1 versus alpha (mean over " << stores.size() << " seed(s))\n";
    for (double a : grid) {
      std::vector<std::string> row = {shortest(a)};
      for (auto [k2, k1] : {std::pair{StageKey::kA2, StageKey::kA1}, std::pair{StageKey::kT2, StageKey::kT1}}) {
        std::vector<double> val, test;
        for (const auto& p : stores) {
          val.push_back(f1_of(ensemble_stage2(p.gather(k2, val_ids), p.gather(k1, val_ids), a), val_labels));
          test.push_back(f1_of(ensemble_stage2(p.gather(k2, test_ids), p.gather(k1, test_ids), a), test_labels));
        }
        row.push_back(fixed6(mean_std(val).first));
        row.push_back(fixed6(mean_std(test).first));
      }
      summary << "  alpha " << row[0] << ": audio test " << row[2] << ", text test " << row[4] << "\n";
      table.rows.push_back(std::move(row));
    }
    return finish(name, std::move(table), summary.str());
  }

  table.columns = {param, "val_f1_mean", "val_f1_std", "test_f1_mean", "test_f1_std"};
  summary << "stage-3 F1 versus " << param << " (" << config_.seeds.size() << " seed(s) per value)\n";
  for (double v : grid) {
    ExperimentConfig sub = config_;
    (param == "beta" ? sub.loss.beta : sub.loss.tau) = v;
    sub.output_dir = config_.output_dir / name / (param + "-" + shortest(v));
    Experiment e(sub, data_);
    std::vector<double> val, test;
    for (std::uint64_t seed : sub.seeds) {
      for (Schedule s : {Schedule::kStage1, Schedule::kStage2, Schedule::kStage3}) {
        e.train_seed(seed, s, modalities_for(s, std::nullopt));
        e.extract_seed(seed, s, modalities_for(s, std::nullopt));
      }
      const PredictionStore p = load_predictions(e.seed_dir(seed), "stage3");
      val.push_back(f1_of(p.gather(StageKey::kC, val_ids), val_labels));
      test.push_back(f1_of(p.gather(StageKey::kC, test_ids), test_labels));
    }
    const auto [vm, vs] = mean_std(val);
    const auto [tm, ts] = mean_std(test);
    table.rows.push_back({shortest(v), fixed6(vm), fixed6(vs), fixed6(tm), fixed6(ts)});
    summary << "  " << param << " " << shortest(v) << ": validation " << fixed6(vm) << " +/- " << fixed6(vs)
            << ", test " << fixed6(tm) << " +/- " << fixed6(ts) << "\n";
  }
  return finish(name, std::move(table), summary.str());
}

CommandOutput Experiment::ablate_self_attention() {
  const std::string name = "ablate-self-attention";
  require_fresh(name);
  const Dataset& data = dataset();
  const Manifest& manifest = data.manifest;
  ExperimentConfig sub = config_;
  sub.output_dir = config_.output_dir / name;
  Experiment e(sub, data_);

  ResultTable table{name,
                    {"seed", "modality", "val_f1_with", "val_f1_without", "test_f1_with", "test_f1_without",
                     "test_delta"},
                    {}};
  for (std::uint64_t seed : config_.seeds) {
    const auto both = modalities_for(Schedule::kStage1, std::nullopt);
    e.train_seed(seed, Schedule::kStage1, both);
    e.extract_seed(seed, Schedule::kStage1, both);
    const fs::path dir = e.seed_dir(seed);
    for (Modality m : both) {
      const EmbeddingStore stage1 = load_store(dir, artifact_stem(Schedule::kStage1, m));
      const FrozenGuard guard(frozen_inputs(dir, {artifact_stem(Schedule::kStage1, m)}, true));
      Upstream up;
      (m == Modality::kAudio ? up.audio : up.text) = &stage1;
      double f1[2][2];  // [with/without][val/test]
      for (int variant = 0; variant < 2; ++variant) {
        TrainConfig tc = config_.train_config(Schedule::kStage2, m, seed);
        tc.arch.self_attention = variant == 0;
        const std::string stem = artifact_stem(Schedule::kStage2, m) + (variant == 0 ? "" : "-no-attention");
        refuse_existing(artifact(dir, stem, ".ckpt"));
        const TrainResult r = train_stage2(tc, data, stage1);
        save_checkpoint(artifact(dir, stem, ".ckpt"), r.checkpoint);
        const Extraction ex = hierfuse::extract(r.checkpoint, data, up);
        ex.predictions.save(artifact(dir, stem, ".predictions.tsv"));
        const StageKey key = prediction_key(r.checkpoint);
        f1[variant][0] = split_f1(ex.predictions, key, manifest, Split::kVal);
        f1[variant][1] = split_f1(ex.predictions, key, manifest, Split::kTest);
      }
      guard.verify();
      table.rows.push_back({std::to_string(seed), std::string(modality_name(m)), fixed6(f1[0][0]), fixed6(f1[1][0]),
                            fixed6(f1[0][1]), fixed6(f1[1][1]), fixed6(f1[0][1] - f1[1][1])});
    }
  }
  std::ostringstream summary;
  summary << "stage-2 self-attention ablation, test delta = F1 with - F1 without\n";
  for (Modality m : {Modality::kAudio, Modality::kText}) {
    std::vector<double> delta;
    for (const auto& row : table.rows)
      if (row[1] == modality_name(m)) delta.push_back(std::stod(row[6]));
    const double mean = mean_std(delta).first;
    summary << "  " << modality_name(m) << ": delta " << mean_pm_std(delta) << " ("
            << (mean > 0 ? "self-attention helps" : mean < 0 ? "self-attention hurts" : "no difference") << ")\n";
  }
  return finish(name, std::move(table), summary.str());
}

CommandOutput Experiment::run_all() {
  require_fresh("run");
  std::string summary;
  for (Schedule s : {Schedule::kStage1, Schedule::kStage2, Schedule::kStage3, Schedule::kJoint23}) {
    summary += train(s).summary;
    summary += extract(s).summary;
  }
  CommandOutput eval = evaluate(true);
  summary += eval.summary;
  return finish("run", eval.table, summary);
}

// ---------------------------------------------------------------------------
// Stand-alone commands
// ---------------------------------------------------------------------------

SyntheticSpec parse_synthetic_spec(const std::string& text) {
  SyntheticSpec spec;
  try {
    const json j = text.empty() ? json::object() : json::parse(text);
    check_keys(j,
               {"regime", "conversations", "min_length", "max_length", "classes", "audio_dim", "text_dim",
                "min_frames", "max_frames", "window", "stay_probability", "audio_noise", "text_noise", "val_fraction",
                "test_fraction", "seed"},
               "synthetic spec");
    if (j.contains("regime")) spec.regime = parse_regime(j.at("regime").get<std::string>());
    read_key(j, "conversations", spec.num_conversations);
    read_key(j, "min_length", spec.min_length);
    read_key(j, "max_length", spec.max_length);
    read_key(j, "classes", spec.num_classes);
    read_key(j, "audio_dim", spec.audio_dim);
    read_key(j, "text_dim", spec.text_dim);
    read_key(j, "min_frames", spec.min_frames);
    read_key(j, "max_frames", spec.max_frames);
    read_key(j, "window", spec.window);
    read_key(j, "stay_probability", spec.stay_probability);
    read_key(j, "audio_noise", spec.audio_noise);
    read_key(j, "text_noise", spec.text_noise);
    read_key(j, "val_fraction", spec.val_fraction);
    read_key(j, "test_fraction", spec.test_fraction);
    read_key(j, "seed", spec.seed);
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("synthetic spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

CommandOutput synthesize(const SyntheticSpec& spec, const fs::path& out_dir) {
  const fs::path manifest_path = write_synthetic(spec, out_dir);
  const Manifest manifest = load_manifest(manifest_path);
  const BayesReport bayes = synthetic_bayes(spec);
  ResultTable table{"synth", {"key", "value"}, {}};
  auto add = [&](const std::string& k, const std::string& v) { table.rows.push_back({k, v}); };
  add("regime", std::string(regime_name(spec.regime)));
  add("seed", std::to_string(spec.seed));
  add("conversations", std::to_string(manifest.conversations.size()));
  add("utterances", std::to_string(manifest.records.size()));
  add("classes", std::to_string(manifest.num_classes));
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest})
    add(std::string(split_name(s)) + "_utterances", std::to_string(manifest.utterance_count(s)));
  add("bayes_audio_single", fixed6(bayes.audio_single));
  add("bayes_text_single", fixed6(bayes.text_single));
  add("bayes_joint_single", fixed6(bayes.joint_single));
  add("bayes_contextual", fixed6(bayes.contextual));
  std::ostringstream summary;
  summary << "synthetic regime " << regime_name(spec.regime) << ": " << manifest.conversations.size()
          << " conversations, " << manifest.records.size() << " utterances, " << manifest.num_classes
          << " classes\n  single-utterance Bayes accuracy: audio " << fixed6(bayes.audio_single) << ", text "
          << fixed6(bayes.text_single) << ", both " << fixed6(bayes.joint_single) << "\n  manifest: "
          << manifest_path.string() << "\n";
  CommandOutput out{std::move(table), summary.str(), {}, {}};
  write_command_output(out, out_dir, "synth");
  return out;
}

CommandOutput gradcheck(std::uint64_t seed, const std::optional<fs::path>& out_dir) {
  const auto results = run_gradient_suite(seed);
  ResultTable table{"gradcheck", {"check", "entries", "max_rel_error", "worst_parameter", "status"}, {}};
  std::size_t failed = 0;
  std::ostringstream summary;
  for (const auto& r : results) {
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", r.report.max_rel_error);
    table.rows.push_back({r.name, std::to_string(r.report.entries_checked), err, r.report.worst_parameter,
                          r.report.passed ? "pass" : "FAIL"});
    summary << "  " << (r.report.passed ? "pass " : "FAIL ") << r.name << "  max rel err " << err << "\n";
    failed += r.report.passed ? 0 : 1;
  }
  summary << results.size() - failed << "/" << results.size() << " gradient checks passed\n";
  CommandOutput out{std::move(table), summary.str(), {}, {}, failed};
  if (out_dir) write_command_output(out, *out_dir, "gradcheck");
  return out;
}

}  // namespace hierfuse
