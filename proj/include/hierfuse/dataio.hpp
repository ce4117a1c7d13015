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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "hierfuse/tensor.hpp"

namespace hierfuse {

enum class Modality { kAudio, kText, kFused };
enum class Split { kTrain, kVal, kTest };

std::string_view modality_name(Modality m);
Modality parse_modality(std::string_view name);
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

// ---------------------------------------------------------------------------
// Embedding files.
//
// Layout (little-endian):
//   offset 0   4 bytes  magic "HFEM"
//   offset 4   u32      version (1)
//   offset 8   u32      rows T
//   offset 12  u32      cols D
//   offset 16  u32      dtype (0 = float32)
//   offset 20  T*D*4    payload, row-major float32
// ---------------------------------------------------------------------------

inline constexpr char kEmbeddingMagic[4] = {'H', 'F', 'E', 'M'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;
inline constexpr std::size_t kEmbeddingHeaderBytes = 20;

struct EmbeddingInfo {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
};

/// Values are rounded to float32 on write.
void write_embedding_file(const std::filesystem::path& path, const Tensor& values);
Tensor read_embedding_file(const std::filesystem::path& path);
/// Validates the header and payload length without reading the payload.
EmbeddingInfo inspect_embedding_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Manifest.
//
// Tab-separated text. The first line is "#hierfuse-manifest<TAB>1<TAB><C>"
// with C the number of classes; every other non-empty line not starting
// with '#' is one utterance:
//   conversation_id  utterance_id  order_index  split  label  audio_path  text_path
// Relative paths resolve against the manifest's directory.
// ---------------------------------------------------------------------------

struct UtteranceRecord {
  std::string conversation_id;
  std::string utterance_id;
  std::size_t order_index = 0;
  Split split = Split::kTrain;
  int label = 0;
  std::string audio_path;  // as written in the manifest
  std::string text_path;
};

struct Conversation {
  std::string id;
  Split split = Split::kTrain;
  std::vector<std::size_t> utterances;  // record indices in order_index order
};

class Manifest {
 public:
  std::size_t num_classes = 0;
  std::filesystem::path base_dir;
  std::vector<UtteranceRecord> records;
  std::vector<Conversation> conversations;  // in order of first appearance

  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
  std::vector<std::size_t> conversations_in(Split split) const;
  std::size_t utterance_count(Split split) const;
  const UtteranceRecord& record(std::string_view utterance_id) const;

  /// Rebuilds `conversations` and the utterance index from `records` and
  /// validates every invariant except file existence.
  void index();

 private:
  std::unordered_map<std::string, std::size_t> by_utterance_;
};

/// Parses and validates a manifest, including the header and payload length
/// of every referenced embedding file.
Manifest load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);

/// Frames/tokens of every utterance of a manifest, read eagerly.
struct Dataset {
  Manifest manifest;
  std::vector<Tensor> audio;  // per record
  std::vector<Tensor> text;   // per record
  std::size_t audio_dim = 0;
  std::size_t text_dim = 0;

  const std::vector<Tensor>& modality(Modality m) const { return m == Modality::kAudio ? audio : text; }
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

// ---------------------------------------------------------------------------
// Embedding store: per-utterance vectors produced by a frozen stage, keyed by
// utterance id. Binary, little-endian:
//   "HFST", u32 version, u32 stage, u32 modality, u32 dim, u64 count,
//   count x { u32 id_len, id bytes, dim x f64 }, u64 FNV-1a of all prior bytes.
// ---------------------------------------------------------------------------

class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(int stage, Modality modality, std::size_t dim) : stage_(stage), modality_(modality), dim_(dim) {}

  void put(const std::string& utterance_id, std::span<const double> vector);
  std::span<const double> get(std::string_view utterance_id) const;
  bool contains(std::string_view utterance_id) const { return index_.count(std::string(utterance_id)) > 0; }

  /// Rows for the given utterance ids, in order.
  Tensor gather(const std::vector<std::string>& utterance_ids) const;

  int stage() const { return stage_; }
  Modality modality() const { return modality_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  void save(const std::filesystem::path& path) const;
  static EmbeddingStore load(const std::filesystem::path& path);

 private:
  int stage_ = 0;
  Modality modality_ = Modality::kAudio;
  std::size_t dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> values_;
  std::map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Batching.
// ---------------------------------------------------------------------------

/// A batch of whole conversations. `mask` is rows() x max_length with 1 for a
/// real utterance and 0 for padding; `offsets` delimit the conversations in a
/// stacked (unpadded) layout.
struct ConversationBatch {
  std::vector<std::size_t> conversations;  // indices into Manifest::conversations
  std::vector<std::size_t> records;        // stacked record indices
  std::vector<std::size_t> offsets;
  std::size_t max_length = 0;
  std::vector<std::uint8_t> mask;

  std::size_t padding_count() const;
};

/// Conversations of `split` shuffled with (seed, epoch) and cut into batches
/// of `batch_size`. Every utterance of the split appears exactly once.
std::vector<ConversationBatch> batch_conversations(const Manifest& manifest, Split split, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch);

/// Flat utterance batches (record indices) for context-free training.
std::vector<std::vector<std::size_t>> batch_utterances(const Manifest& manifest, Split split, std::size_t batch_size,
                                                       std::uint64_t seed, std::size_t epoch);

// ---------------------------------------------------------------------------
// Synthetic data.
// ---------------------------------------------------------------------------

enum class Regime {
  kContextFree,     // label is the utterance's own latent state
  kContextual,      // label depends on the latent state w steps back
  kComplementary,   // audio and text carry disjoint label factors
  kComposite,       // contextual rule applied to each complementary factor
};

std::string_view regime_name(Regime r);
Regime parse_regime(std::string_view name);

struct SyntheticSpec {
  Regime regime = Regime::kContextFree;
  std::size_t num_conversations = 200;
  std::size_t min_length = 20;
  std::size_t max_length = 20;
  std::size_t num_classes = 4;
  std::size_t audio_dim = 16;
  std::size_t text_dim = 16;
  std::size_t min_frames = 4;
  std::size_t max_frames = 8;
  std::size_t window = 2;
  double stay_probability = 0.8;
  double audio_noise = 0.5;
  double text_noise = 0.5;
  double val_fraction = 0.15;
  double test_fraction = 0.15;
  std::uint64_t seed = 1;

  void validate() const;
};

/// Latent-level Bayes accuracies, computed by enumerating the generator's
/// label rule: the best achievable accuracy when the classifier sees a
/// single utterance's latent state(s) exactly, per modality and jointly.
struct BayesReport {
  double audio_single = 0.0;
  double text_single = 0.0;
  double joint_single = 0.0;
  double contextual = 1.0;  // with the whole conversation visible
  std::vector<double> class_priors;
};

BayesReport synthetic_bayes(const SyntheticSpec& spec);

struct SyntheticDataset {
  Manifest manifest;
  std::vector<Tensor> audio;
  std::vector<Tensor> text;
  BayesReport bayes;
};

/// Pure function of the spec.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Writes manifest.tsv, one embedding file per utterance and modality under
/// emb/, and synthetic.json with the regime, seed and Bayes accuracies.
/// Refuses to write into a non-empty directory. Returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

}  // namespace hierfuse
