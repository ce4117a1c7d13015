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

#include "hierfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>

#include "binio.hpp"
#include "hierfuse/error.hpp"
#include "hierfuse/optim.hpp"
#include "hierfuse/rng.hpp"
#include "json.hpp"

namespace hierfuse {

using detail::ByteReader;
using detail::ByteWriter;
using json = nlohmann::ordered_json;

namespace {

constexpr char kCheckpointMagic[4] = {'H', 'F', 'C', 'K'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::size_t kEvalChunk = 256;

}  // namespace

std::string_view schedule_name(Schedule s) {
  switch (s) {
    case Schedule::kStage1: return "1";
    case Schedule::kStage2: return "2";
    case Schedule::kStage3: return "3";
    case Schedule::kJoint23: return "joint23";
  }
  return "?";
}

Schedule parse_schedule(std::string_view name) {
  if (name == "1") return Schedule::kStage1;
  if (name == "2") return Schedule::kStage2;
  if (name == "3") return Schedule::kStage3;
  if (name == "joint23") return Schedule::kJoint23;
  fail(ErrorCode::kUsage, "unknown stage '" + std::string(name) + "' (expected 1, 2, 3 or joint23)");
}

int schedule_stage(Schedule s) {
  switch (s) {
    case Schedule::kStage1: return 1;
    case Schedule::kStage2: return 2;
    default: return 3;
  }
}

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  arch.validate();
  loss.validate();
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorCode::kConfig, "learning_rate must be positive");
  require(batch_size >= 1, ErrorCode::kConfig, "batch_size must be at least 1");
  require(max_epochs >= 1, ErrorCode::kConfig, "max_epochs must be at least 1");
  require(clip_norm > 0.0 && std::isfinite(clip_norm), ErrorCode::kConfig, "clip_norm must be positive");
  require(patience >= 1, ErrorCode::kConfig, "patience must be at least 1");
  const bool fused = schedule_stage(schedule) == 3;
  require(fused == (modality == Modality::kFused), ErrorCode::kConfig,
          "stage " + std::string(schedule_name(schedule)) + " cannot train modality " +
              std::string(modality_name(modality)));
}

std::string TrainConfig::to_json() const {
  json j;
  j["schedule"] = schedule_name(schedule);
  j["modality"] = modality_name(modality);
  j["arch"] = {{"d_model", arch.d_model},         {"d_ff", arch.d_ff},       {"conv_layers", arch.conv_layers},
               {"conv_kernel", arch.conv_kernel}, {"dropout", arch.dropout}, {"self_attention", arch.self_attention}};
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["max_epochs"] = max_epochs;
  j["clip_norm"] = clip_norm;
  j["loss"] = {{"beta", loss.beta},
               {"tau", loss.tau},
               {"self_exclusion", loss.self_exclusion},
               {"class_weights", loss.class_weights}};
  j["seed"] = seed;
  j["patience"] = patience;
  return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    TrainConfig c;
    c.schedule = parse_schedule(j.at("schedule").get<std::string>());
    c.modality = parse_modality(j.at("modality").get<std::string>());
    const json& a = j.at("arch");
    c.arch.d_model = a.at("d_model").get<std::size_t>();
    c.arch.d_ff = a.at("d_ff").get<std::size_t>();
    c.arch.conv_layers = a.at("conv_layers").get<std::size_t>();
    c.arch.conv_kernel = a.at("conv_kernel").get<std::size_t>();
    c.arch.dropout = a.at("dropout").get<double>();
    c.arch.self_attention = a.at("self_attention").get<bool>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.clip_norm = j.at("clip_norm").get<double>();
    const json& l = j.at("loss");
    c.loss.beta = l.at("beta").get<double>();
    c.loss.tau = l.at("tau").get<double>();
    c.loss.self_exclusion = l.at("self_exclusion").get<bool>();
    c.loss.class_weights = l.at("class_weights").get<std::vector<double>>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.patience = j.at("patience").get<std::size_t>();
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::kCheckpointFormat, std::string("training config snapshot: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Checkpoint
// ---------------------------------------------------------------------------

std::size_t Checkpoint::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.value.size();
  return n;
}

std::uint64_t Checkpoint::content_hash() const {
  const auto bytes = serialize_checkpoint(*this);
  return detail::fnv1a64(bytes.data(), bytes.size());
}

void Checkpoint::apply_to(ParameterSet& params) const {
  for (Parameter* p : params.all()) {
    const auto it = std::find_if(tensors.begin(), tensors.end(), [&](const NamedTensor& t) { return t.name == p->name; });
    require(it != tensors.end(), ErrorCode::kStageMismatch, "checkpoint has no tensor '" + p->name + "'");
    require(it->value.same_shape(p->value), ErrorCode::kStageMismatch,
            "checkpoint tensor '" + p->name + "' has shape " + it->value.shape_string() + ", model expects " +
                p->value.shape_string());
    p->value = it->value;
  }
}

void Checkpoint::capture(const ParameterSet& params) {
  for (const Parameter* p : params.all()) tensors.push_back({p->name, p->value});
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.bytes(kCheckpointMagic, 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(c.stage));
  w.put(static_cast<std::uint32_t>(c.modality));
  w.put(static_cast<std::uint32_t>(c.d_model));
  w.put(static_cast<std::uint32_t>(c.input_dim));
  w.put(static_cast<std::uint32_t>(c.num_classes));
  w.str(c.config_json);
  w.put(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& t : c.tensors) {
    w.str(t.name);
    w.put(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t extent : t.value.shape()) w.put(static_cast<std::uint64_t>(extent));
    w.bytes(t.value.values().data(), t.value.size() * sizeof(double));
  }
  w.put(detail::fnv1a64(w.data().data(), w.data().size()));
  return std::move(w.data());
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what) {
  require(bytes.size() >= 16 && std::equal(kCheckpointMagic, kCheckpointMagic + 4, bytes.begin()),
          ErrorCode::kCheckpointFormat, what + ": not a checkpoint");
  // The trailer is checked first so any damaged byte reports as corruption.
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (stored != detail::fnv1a64(bytes.data(), body)) fail(ErrorCode::kCheckpointHash, what + ": checkpoint hash mismatch");

  ByteReader r(bytes, ErrorCode::kCheckpointFormat, what);
  char magic[4];
  r.bytes(magic, 4);
  const auto version = r.get<std::uint32_t>();
  require(version == kCheckpointVersion, ErrorCode::kCheckpointFormat,
          what + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.stage = static_cast<int>(r.get<std::uint32_t>());
  const auto modality = r.get<std::uint32_t>();
  require(c.stage >= 1 && c.stage <= 3 && modality <= 2, ErrorCode::kCheckpointFormat, what + ": bad header");
  c.modality = static_cast<Modality>(modality);
  c.d_model = r.get<std::uint32_t>();
  c.input_dim = r.get<std::uint32_t>();
  c.num_classes = r.get<std::uint32_t>();
  c.config_json = r.str();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str();
    const auto rank = r.get<std::uint32_t>();
    require(rank >= 1 && rank <= 2, ErrorCode::kCheckpointFormat, what + ": tensor '" + t.name + "' has bad rank");
    std::vector<std::size_t> shape(rank);
    std::size_t n = 1;
    for (auto& extent : shape) {
      extent = static_cast<std::size_t>(r.get<std::uint64_t>());
      require(extent >= 1 && extent <= (1u << 24), ErrorCode::kCheckpointFormat,
              what + ": tensor '" + t.name + "' has bad extent");
      n *= extent;
    }
    require(n * sizeof(double) <= r.remaining(), ErrorCode::kCheckpointFormat,
            what + ": tensor '" + t.name + "' runs past the end of the file");
    t.value = Tensor(shape);
    r.bytes(t.value.values().data(), n * sizeof(double));
    c.tensors.push_back(std::move(t));
  }
  require(r.position() == body, ErrorCode::kCheckpointFormat, what + ": trailing bytes before the hash");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  detail::write_file_bytes(path, serialize_checkpoint(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kMissingCheckpoint, "checkpoint not found: " + path.string());
  return deserialize_checkpoint(detail::read_file_bytes(path, ErrorCode::kMissingCheckpoint), path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, int stage, Modality modality, std::size_t d_model) {
  Checkpoint c = load_checkpoint(path);
  auto describe = [](int s, Modality m, std::size_t d) {
    return "stage " + std::to_string(s) + "/" + std::string(modality_name(m)) + "/d_model " + std::to_string(d);
  };
  if (c.stage != stage || c.modality != modality || c.d_model != d_model)
    fail(ErrorCode::kStageMismatch, path.string() + " holds " + describe(c.stage, c.modality, c.d_model) +
                                        ", expected " + describe(stage, modality, d_model));
  return c;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path, ErrorCode::kMissingStore);
  return detail::fnv1a64(bytes.data(), bytes.size());
}

FrozenGuard::FrozenGuard(std::vector<std::filesystem::path> paths) : paths_(std::move(paths)) {
  for (const auto& p : paths_) {
    if (!std::filesystem::exists(p)) fail(ErrorCode::kMissingStore, "required artifact not found: " + p.string());
    hashes_.push_back(file_hash(p));
  }
}

void FrozenGuard::verify() const {
  for (std::size_t i = 0; i < paths_.size(); ++i) {
    const bool same = std::filesystem::exists(paths_[i]) && file_hash(paths_[i]) == hashes_[i];
    if (!same) fail(ErrorCode::kFrozenStageViolation, "frozen artifact changed during training: " + paths_[i].string());
  }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

std::vector<std::string> split_ids(const Manifest& manifest, Split split) {
  std::vector<std::string> ids;
  for (const auto& r : manifest.records)
    if (r.split == split) ids.push_back(r.utterance_id);
  return ids;
}

std::vector<int> split_labels(const Manifest& manifest, Split split) {
  std::vector<int> labels;
  for (const auto& r : manifest.records)
    if (r.split == split) labels.push_back(r.label);
  return labels;
}

double split_f1(const PredictionStore& preds, StageKey key, const Manifest& manifest, Split split) {
  const auto ids = split_ids(manifest, split);
  require(!ids.empty(), ErrorCode::kEmptySplit, "split '" + std::string(split_name(split)) + "' is empty");
  return weighted_f1(argmax_rows(preds.gather(key, ids)), split_labels(manifest, split), manifest.num_classes);
}

StageKey prediction_key(const Checkpoint& c) {
  if (c.stage == 3) return StageKey::kC;
  const bool audio = c.modality == Modality::kAudio;
  if (c.stage == 1) return audio ? StageKey::kA1 : StageKey::kT1;
  return audio ? StageKey::kA2 : StageKey::kT2;
}

namespace {

std::vector<int> labels_of(const Manifest& manifest, const std::vector<std::size_t>& records) {
  std::vector<int> labels;
  labels.reserve(records.size());
  for (std::size_t r : records) labels.push_back(manifest.records[r].label);
  return labels;
}

std::vector<std::string> ids_of(const Manifest& manifest, const std::vector<std::size_t>& records) {
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (std::size_t r : records) ids.push_back(manifest.records[r].utterance_id);
  return ids;
}

StackedSequences stack_records(const std::vector<Tensor>& seqs, const std::vector<std::size_t>& records) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(records.size());
  for (std::size_t r : records) ptrs.push_back(&seqs[r]);
  return stack_sequences(ptrs);
}

/// Whole conversations in manifest order, grouped into chunks, optionally
/// restricted to one split.
std::vector<ConversationBatch> ordered_conversations(const Manifest& manifest, const Split* split) {
  std::vector<ConversationBatch> out;
  ConversationBatch cur;
  cur.offsets.push_back(0);
  for (std::size_t c = 0; c < manifest.conversations.size(); ++c) {
    const Conversation& conv = manifest.conversations[c];
    if (split != nullptr && conv.split != *split) continue;
    cur.conversations.push_back(c);
    cur.records.insert(cur.records.end(), conv.utterances.begin(), conv.utterances.end());
    cur.offsets.push_back(cur.records.size());
    if (cur.records.size() >= kEvalChunk) {
      out.push_back(std::move(cur));
      cur = ConversationBatch{};
      cur.offsets.push_back(0);
    }
  }
  if (!cur.records.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::vector<std::size_t>> ordered_utterances(const Manifest& manifest, const Split* split) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  for (std::size_t r = 0; r < manifest.records.size(); ++r) {
    if (split != nullptr && manifest.records[r].split != *split) continue;
    cur.push_back(r);
    if (cur.size() >= kEvalChunk) out.push_back(std::move(cur)), cur.clear();
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

void require_store(const EmbeddingStore* store, int stage, Modality modality, std::size_t dim) {
  const std::string want = "stage-" + std::to_string(stage) + " " + std::string(modality_name(modality));
  if (store == nullptr) fail(ErrorCode::kMissingStore, "missing " + want + " embedding store");
  require(store->stage() == stage && store->modality() == modality, ErrorCode::kStageMismatch,
          "expected a " + want + " embedding store, got stage-" + std::to_string(store->stage()) + " " +
              std::string(modality_name(store->modality())));
  require(store->dim() == dim, ErrorCode::kShape,
          want + " embedding store has width " + std::to_string(store->dim()) + ", expected " + std::to_string(dim));
}

/// A model rebuilt from (or destined for) a checkpoint, with a uniform
/// forward interface over batches of records.
class StageModel {
 public:
  virtual ~StageModel() = default;
  /// Flat record batches for stage 1; whole conversations otherwise.
  virtual bool conversational() const = 0;
  virtual ModelOutput forward(Graph& g, const std::vector<std::size_t>& records,
                              const std::vector<std::size_t>& offsets) = 0;
  virtual std::vector<ParameterSet*> parameter_sets() = 0;

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> all;
    for (ParameterSet* s : parameter_sets())
      for (Parameter* p : s->all()) all.push_back(p);
    return all;
  }
  void capture(Checkpoint& c) {
    c.tensors.clear();
    for (ParameterSet* s : parameter_sets()) c.capture(*s);
  }
  void restore(const Checkpoint& c) {
    std::size_t expected = 0;
    for (ParameterSet* s : parameter_sets()) {
      c.apply_to(*s);
      expected += s->size();
    }
    require(expected == c.tensors.size(), ErrorCode::kStageMismatch, "checkpoint holds tensors the model does not use");
  }
  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, "init"));
    for (ParameterSet* s : parameter_sets()) init_default(*s, rng);
  }
};

class Stage1Model final : public StageModel {
 public:
  Stage1Model(const Dataset& data, Modality m, const ArchConfig& arch, std::size_t input_dim)
      : seqs_(data.modality(m)) {
    if (m == Modality::kAudio)
      audio_ = std::make_unique<AudioEncoder>(input_dim, data.manifest.num_classes, arch);
    else
      text_ = std::make_unique<TextEncoder>(input_dim, data.manifest.num_classes, arch);
  }
  bool conversational() const override { return false; }
  ModelOutput forward(Graph& g, const std::vector<std::size_t>& records, const std::vector<std::size_t>&) override {
    const StackedSequences s = stack_records(seqs_, records);
    return audio_ ? audio_->forward(g, s) : text_->forward(g, s);
  }
  std::vector<ParameterSet*> parameter_sets() override { return {audio_ ? &audio_->params() : &text_->params()}; }

 private:
  const std::vector<Tensor>& seqs_;
  std::unique_ptr<AudioEncoder> audio_;
  std::unique_ptr<TextEncoder> text_;
};

class Stage2Model final : public StageModel {
 public:
  Stage2Model(const Manifest& manifest, const EmbeddingStore& stage1, const ArchConfig& arch)
      : manifest_(manifest), stage1_(stage1), model_(stage1.dim(), manifest.num_classes, arch) {}
  bool conversational() const override { return true; }
  ModelOutput forward(Graph& g, const std::vector<std::size_t>& records,
                      const std::vector<std::size_t>& offsets) override {
    return model_.forward(g, g.constant(stage1_.gather(ids_of(manifest_, records))), offsets);
  }
  std::vector<ParameterSet*> parameter_sets() override { return {&model_.params()}; }

 private:
  const Manifest& manifest_;
  const EmbeddingStore& stage1_;
  ContextualGru model_;
};

class Stage3Model final : public StageModel {
 public:
  Stage3Model(const Manifest& manifest, const EmbeddingStore& audio2, const EmbeddingStore& text2,
              const ArchConfig& arch)
      : manifest_(manifest), audio_(audio2), text_(text2), model_(manifest.num_classes, arch) {}
  bool conversational() const override { return true; }
  ModelOutput forward(Graph& g, const std::vector<std::size_t>& records,
                      const std::vector<std::size_t>& offsets) override {
    const auto ids = ids_of(manifest_, records);
    return model_.forward(g, g.constant(audio_.gather(ids)), g.constant(text_.gather(ids)), offsets);
  }
  std::vector<ParameterSet*> parameter_sets() override { return {&model_.params()}; }

 private:
  const Manifest& manifest_;
  const EmbeddingStore& audio_;
  const EmbeddingStore& text_;
  FusionModel model_;
};

class JointModel final : public StageModel {
 public:
  JointModel(const Manifest& manifest, const EmbeddingStore& audio1, const EmbeddingStore& text1,
             const ArchConfig& arch)
      : manifest_(manifest),
        audio_(audio1),
        text_(text1),
        audio_context_(audio1.dim(), manifest.num_classes, arch, "audio_context"),
        text_context_(text1.dim(), manifest.num_classes, arch, "text_context"),
        fusion_(manifest.num_classes, arch) {}
  bool conversational() const override { return true; }
  ModelOutput forward(Graph& g, const std::vector<std::size_t>& records,
                      const std::vector<std::size_t>& offsets) override {
    const auto ids = ids_of(manifest_, records);
    const ModelOutput a = audio_context_.forward(g, g.constant(audio_.gather(ids)), offsets);
    const ModelOutput t = text_context_.forward(g, g.constant(text_.gather(ids)), offsets);
    return fusion_.forward(g, a.embeddings, t.embeddings, offsets);
  }
  std::vector<ParameterSet*> parameter_sets() override {
    return {&audio_context_.params(), &text_context_.params(), &fusion_.params()};
  }

 private:
  const Manifest& manifest_;
  const EmbeddingStore& audio_;
  const EmbeddingStore& text_;
  ContextualGru audio_context_;
  ContextualGru text_context_;
  FusionModel fusion_;
};

std::unique_ptr<StageModel> build_model(Schedule schedule, Modality modality, const ArchConfig& arch,
                                        std::size_t input_dim, const Dataset& data, const Upstream& up) {
  const std::size_t d = arch.d_model;
  switch (schedule) {
    case Schedule::kStage1:
      return std::make_unique<Stage1Model>(data, modality, arch, input_dim);
    case Schedule::kStage2: {
      const EmbeddingStore* s = modality == Modality::kAudio ? up.audio : up.text;
      require_store(s, 1, modality, d);
      return std::make_unique<Stage2Model>(data.manifest, *s, arch);
    }
    case Schedule::kStage3:
      require_store(up.audio, 2, Modality::kAudio, d);
      require_store(up.text, 2, Modality::kText, d);
      return std::make_unique<Stage3Model>(data.manifest, *up.audio, *up.text, arch);
    case Schedule::kJoint23:
      require_store(up.audio, 1, Modality::kAudio, d);
      require_store(up.text, 1, Modality::kText, d);
      return std::make_unique<JointModel>(data.manifest, *up.audio, *up.text, arch);
  }
  fail(ErrorCode::kConfig, "unknown schedule");
}

/// Logits over the records of `split` in manifest order (all records when
/// `split` is null), with the matching record indices.
struct Evaluated {
  std::vector<std::size_t> records;
  Tensor embeddings;
  Tensor probs;
};

Evaluated evaluate_model(StageModel& model, const Manifest& manifest, const Split* split) {
  Evaluated out;
  std::vector<Tensor> emb_parts;
  std::vector<Tensor> prob_parts;
  auto run = [&](const std::vector<std::size_t>& records, const std::vector<std::size_t>& offsets) {
    Graph g(false);
    const ModelOutput o = model.forward(g, records, offsets);
    emb_parts.push_back(o.embeddings.value());
    prob_parts.push_back(softmax_rows(o.logits).value());
    out.records.insert(out.records.end(), records.begin(), records.end());
  };
  if (model.conversational()) {
    for (const auto& b : ordered_conversations(manifest, split)) run(b.records, b.offsets);
  } else {
    for (const auto& b : ordered_utterances(manifest, split)) run(b, {});
  }
  auto stack = [](const std::vector<Tensor>& parts) {
    std::size_t rows = 0;
    for (const auto& p : parts) rows += p.rows();
    Tensor t({rows, parts.empty() ? 0 : parts.front().cols()});
    std::size_t at = 0;
    for (const auto& p : parts) {
      std::copy(p.values().begin(), p.values().end(), t.values().begin() + static_cast<std::ptrdiff_t>(at));
      at += p.size();
    }
    return t;
  };
  out.embeddings = stack(emb_parts);
  out.probs = stack(prob_parts);
  return out;
}

double validation_f1(StageModel& model, const Manifest& manifest) {
  const Split val = Split::kVal;
  const Evaluated e = evaluate_model(model, manifest, &val);
  require(!e.records.empty(), ErrorCode::kEmptySplit, "validation split is empty");
  return weighted_f1(argmax_rows(e.probs), labels_of(manifest, e.records), manifest.num_classes);
}

Checkpoint checkpoint_header(const TrainConfig& cfg, std::size_t input_dim, std::size_t num_classes) {
  Checkpoint c;
  c.stage = schedule_stage(cfg.schedule);
  c.modality = cfg.modality;
  c.d_model = cfg.arch.d_model;
  c.input_dim = input_dim;
  c.num_classes = num_classes;
  c.config_json = cfg.to_json();
  return c;
}

TrainResult train_model(const TrainConfig& cfg, const Dataset& data, StageModel& model, std::size_t input_dim) {
  const Manifest& manifest = data.manifest;
  model.initialize(cfg.seed);
  std::vector<Parameter*> params = model.parameters();
  Adam adam(AdamConfig{.learning_rate = cfg.learning_rate});

  TrainResult result;
  result.checkpoint = checkpoint_header(cfg, input_dim, manifest.num_classes);
  result.best_val_f1 = -1.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::vector<std::vector<std::size_t>> record_batches;
    std::vector<std::vector<std::size_t>> offset_batches;
    if (model.conversational()) {
      for (auto& b : batch_conversations(manifest, Split::kTrain, cfg.batch_size, cfg.seed, epoch)) {
        record_batches.push_back(std::move(b.records));
        offset_batches.push_back(std::move(b.offsets));
      }
    } else {
      record_batches = batch_utterances(manifest, Split::kTrain, cfg.batch_size, cfg.seed, epoch);
      offset_batches.resize(record_batches.size());
    }

    double loss_sum = 0.0;
    for (std::size_t step = 0; step < record_batches.size(); ++step) {
      for (Parameter* p : params) p->zero_grad();
      Graph g(true, derive_seed(cfg.seed, "dropout/" + std::to_string(epoch) + "/" + std::to_string(step)));
      const ModelOutput out = model.forward(g, record_batches[step], offset_batches[step]);
      const std::vector<int> labels = labels_of(manifest, record_batches[step]);
      const Var loss = combined_loss(out.logits, l2_normalize_rows(out.embeddings), labels, cfg.loss);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        fail(ErrorCode::kDivergence, "non-finite training loss at epoch " + std::to_string(epoch + 1) + ", step " +
                                         std::to_string(step + 1));
      g.backward(loss);
      clip_gradients_l2(params, cfg.clip_norm);
      adam.step(params);
      loss_sum += value;
    }

    const double f1 = validation_f1(model, manifest);
    result.history.push_back({epoch + 1, loss_sum / static_cast<double>(record_batches.size()), f1});
    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch + 1;
      model.capture(result.checkpoint);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

void require_schedule(const TrainConfig& cfg, Schedule s) {
  require(cfg.schedule == s, ErrorCode::kStageMismatch,
          "config is for stage " + std::string(schedule_name(cfg.schedule)) + ", trainer is for stage " +
              std::string(schedule_name(s)));
  cfg.validate();
}

}  // namespace

TrainResult train_stage1(const TrainConfig& cfg, const Dataset& data) {
  require_schedule(cfg, Schedule::kStage1);
  const std::size_t input_dim = cfg.modality == Modality::kAudio ? data.audio_dim : data.text_dim;
  auto model = build_model(cfg.schedule, cfg.modality, cfg.arch, input_dim, data, {});
  return train_model(cfg, data, *model, input_dim);
}

TrainResult train_stage2(const TrainConfig& cfg, const Dataset& data, const EmbeddingStore& stage1) {
  require_schedule(cfg, Schedule::kStage2);
  Upstream up;
  (cfg.modality == Modality::kAudio ? up.audio : up.text) = &stage1;
  auto model = build_model(cfg.schedule, cfg.modality, cfg.arch, cfg.arch.d_model, data, up);
  return train_model(cfg, data, *model, cfg.arch.d_model);
}

TrainResult train_stage3(const TrainConfig& cfg, const Dataset& data, const EmbeddingStore& audio2,
                         const EmbeddingStore& text2) {
  require_schedule(cfg, Schedule::kStage3);
  auto model = build_model(cfg.schedule, cfg.modality, cfg.arch, cfg.arch.d_model, data, {&audio2, &text2});
  return train_model(cfg, data, *model, cfg.arch.d_model);
}

TrainResult train_nonhierarchical(const TrainConfig& cfg, const Dataset& data, const EmbeddingStore& audio1,
                                  const EmbeddingStore& text1) {
  require_schedule(cfg, Schedule::kJoint23);
  auto model = build_model(cfg.schedule, cfg.modality, cfg.arch, cfg.arch.d_model, data, {&audio1, &text1});
  return train_model(cfg, data, *model, cfg.arch.d_model);
}

Extraction extract(const Checkpoint& checkpoint, const Dataset& data, const Upstream& upstream) {
  const TrainConfig cfg = checkpoint.config();
  require(schedule_stage(cfg.schedule) == checkpoint.stage && cfg.modality == checkpoint.modality &&
              cfg.arch.d_model == checkpoint.d_model,
          ErrorCode::kCheckpointFormat, "checkpoint header disagrees with its config snapshot");
  require(checkpoint.num_classes == data.manifest.num_classes, ErrorCode::kStageMismatch,
          "checkpoint has " + std::to_string(checkpoint.num_classes) + " classes, dataset has " +
              std::to_string(data.manifest.num_classes));
  if (cfg.schedule == Schedule::kStage1) {
    const std::size_t dim = cfg.modality == Modality::kAudio ? data.audio_dim : data.text_dim;
    require(dim == checkpoint.input_dim, ErrorCode::kStageMismatch,
            "checkpoint expects input width " + std::to_string(checkpoint.input_dim) + ", dataset has " +
                std::to_string(dim));
  }
  auto model = build_model(cfg.schedule, cfg.modality, cfg.arch, checkpoint.input_dim, data, upstream);
  model->restore(checkpoint);

  const Evaluated e = evaluate_model(*model, data.manifest, nullptr);
  Extraction out{EmbeddingStore(checkpoint.stage, checkpoint.modality, e.embeddings.cols()),
                 PredictionStore(data.manifest.num_classes)};
  const StageKey key = prediction_key(checkpoint);
  for (std::size_t i = 0; i < e.records.size(); ++i) {
    const std::string& id = data.manifest.records[e.records[i]].utterance_id;
    out.embeddings.put(id, e.embeddings.row(i));
    out.predictions.put(key, id, e.probs.row(i));
  }
  return out;
}

}  // namespace hierfuse
