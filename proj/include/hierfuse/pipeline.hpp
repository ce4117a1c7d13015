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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hierfuse/dataio.hpp"
#include "hierfuse/inference.hpp"
#include "hierfuse/losses.hpp"
#include "hierfuse/sequence.hpp"

namespace hierfuse {

/// Which model a training run produces. kJoint23 trains the contextual GRUs
/// and the fusion block in one optimization from stage-1 embeddings.
enum class Schedule { kStage1, kStage2, kStage3, kJoint23 };

std::string_view schedule_name(Schedule s);
Schedule parse_schedule(std::string_view name);
/// 1, 2, 3; the joint schedule produces a stage-3 model.
int schedule_stage(Schedule s);

struct TrainConfig {
  Schedule schedule = Schedule::kStage1;
  Modality modality = Modality::kAudio;
  ArchConfig arch;
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  double clip_norm = 0.25;
  LossConfig loss;
  std::uint64_t seed = 1;
  std::size_t patience = 20;

  void validate() const;
  /// Canonical JSON text; stored verbatim in checkpoints.
  std::string to_json() const;
  static TrainConfig from_json(const std::string& text);
};

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// ---------------------------------------------------------------------------
// Checkpoint file, binary little-endian:
//   "HFCK", u32 version, u32 stage, u32 modality, u32 d_model,
//   u32 input_dim, u32 num_classes, u32 config_len, config JSON bytes,
//   u32 tensor_count, tensor_count x { u32 name_len, name, u32 rank,
//   rank x u64 extent, f64 values }, u64 FNV-1a of all prior bytes.
// ---------------------------------------------------------------------------

struct Checkpoint {
  int stage = 1;
  Modality modality = Modality::kAudio;
  std::size_t d_model = 0;
  std::size_t input_dim = 0;
  std::size_t num_classes = 0;
  std::string config_json;
  std::vector<NamedTensor> tensors;

  TrainConfig config() const { return TrainConfig::from_json(config_json); }
  std::size_t scalar_count() const;
  /// FNV-1a of the serialized bytes.
  std::uint64_t content_hash() const;
  /// Copies tensors into a parameter set holding exactly the same names and shapes.
  void apply_to(ParameterSet& params) const;
  void capture(const ParameterSet& params);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Loads and checks the header against what the caller needs; any
/// difference raises kStageMismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path, int stage, Modality modality, std::size_t d_model);

/// FNV-1a over a file's bytes.
std::uint64_t file_hash(const std::filesystem::path& path);

/// Records the hashes of earlier-stage artifacts and verifies they did not
/// change while a later stage trained.
class FrozenGuard {
 public:
  explicit FrozenGuard(std::vector<std::filesystem::path> paths);
  /// Throws kFrozenStageViolation naming the first changed file.
  void verify() const;

 private:
  std::vector<std::filesystem::path> paths_;
  std::vector<std::uint64_t> hashes_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_f1 = 0.0;
};

struct TrainResult {
  Checkpoint checkpoint;  // the best-validation epoch
  double best_val_f1 = 0.0;
  std::size_t best_epoch = 0;
  std::vector<EpochLog> history;
};

/// Context-free utterance encoder for cfg.modality on flat utterance batches.
TrainResult train_stage1(const TrainConfig& cfg, const Dataset& data);
/// Contextual GRU over frozen stage-1 embeddings of cfg.modality.
TrainResult train_stage2(const TrainConfig& cfg, const Dataset& data, const EmbeddingStore& stage1);
/// Co-attention fusion over frozen stage-2 embeddings of both modalities.
TrainResult train_stage3(const TrainConfig& cfg, const Dataset& data, const EmbeddingStore& audio2,
                         const EmbeddingStore& text2);
/// Both contextual GRUs and the fusion block trained together from stage-1
/// embeddings. Same architecture as stages 2 and 3 combined.
TrainResult train_nonhierarchical(const TrainConfig& cfg, const Dataset& data, const EmbeddingStore& audio1,
                                  const EmbeddingStore& text1);

struct Extraction {
  EmbeddingStore embeddings;     // pre-classifier vectors, one per utterance
  PredictionStore predictions;   // softmax outputs under the checkpoint's stage key
};

/// Upstream stores required per checkpoint: none for stage 1; the stage-1
/// store of the same modality for stage 2; audio then text stage-2 stores for
/// stage 3, or stage-1 stores for a joint checkpoint.
struct Upstream {
  const EmbeddingStore* audio = nullptr;
  const EmbeddingStore* text = nullptr;
};

/// Runs the frozen model over every utterance of the manifest.
Extraction extract(const Checkpoint& checkpoint, const Dataset& data, const Upstream& upstream = {});

/// Stage key of a checkpoint's predictions.
StageKey prediction_key(const Checkpoint& checkpoint);

/// Weighted F1 of argmax predictions of `key` over the utterances of `split`.
double split_f1(const PredictionStore& preds, StageKey key, const Manifest& manifest, Split split);

/// Utterance ids and labels of a split in manifest order.
std::vector<std::string> split_ids(const Manifest& manifest, Split split);
std::vector<int> split_labels(const Manifest& manifest, Split split);

}  // namespace hierfuse
