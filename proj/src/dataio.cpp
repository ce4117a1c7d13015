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

#include "hierfuse/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "binio.hpp"
#include "hierfuse/error.hpp"
#include "hierfuse/rng.hpp"

namespace hierfuse {

namespace detail {

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path, ErrorCode missing) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(missing, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) fail(ErrorCode::kIo, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path, ErrorCode missing) {
  auto bytes = read_file_bytes(path, missing);
  return {bytes.begin(), bytes.end()};
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace detail

using detail::ByteReader;
using detail::ByteWriter;

std::string_view modality_name(Modality m) {
  switch (m) {
    case Modality::kAudio: return "audio";
    case Modality::kText: return "text";
    case Modality::kFused: return "fused";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  if (name == "audio") return Modality::kAudio;
  if (name == "text") return Modality::kText;
  if (name == "fused") return Modality::kFused;
  fail(ErrorCode::kUsage, "unknown modality '" + std::string(name) + "' (audio, text, fused)");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail(ErrorCode::kManifestFormat, "unknown split '" + std::string(name) + "' (train, val, test)");
}

// ---------------------------------------------------------------------------
// Embedding files
// ---------------------------------------------------------------------------

void write_embedding_file(const std::filesystem::path& path, const Tensor& values) {
  require(values.rank() == 2, ErrorCode::kShape, "embedding file payload must be rank 2");
  require(values.all_finite(), ErrorCode::kEmbeddingNonFinite, "refusing to write non-finite values to " + path.string());
  ByteWriter w;
  w.bytes(kEmbeddingMagic, 4);
  w.put<std::uint32_t>(kEmbeddingVersion);
  w.put(static_cast<std::uint32_t>(values.rows()));
  w.put(static_cast<std::uint32_t>(values.cols()));
  w.put<std::uint32_t>(0);
  for (double v : values.values()) w.put(static_cast<float>(v));
  detail::write_file_bytes(path, w.data());
}

namespace {

EmbeddingInfo parse_embedding_header(ByteReader& r, std::size_t total, const std::filesystem::path& path) {
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kEmbeddingMagic))
    fail(ErrorCode::kEmbeddingMagic, path.string() + ": bad magic, not an embedding file");
  const auto version = r.get<std::uint32_t>();
  require(version == kEmbeddingVersion, ErrorCode::kEmbeddingMagic,
          path.string() + ": unsupported version " + std::to_string(version));
  EmbeddingInfo info;
  info.rows = r.get<std::uint32_t>();
  info.cols = r.get<std::uint32_t>();
  const auto dtype = r.get<std::uint32_t>();
  require(dtype == 0, ErrorCode::kEmbeddingMagic, path.string() + ": unsupported dtype " + std::to_string(dtype));
  require(info.rows >= 1 && info.cols >= 1, ErrorCode::kEmbeddingTruncated, path.string() + ": empty embedding");
  const std::size_t expected = kEmbeddingHeaderBytes + std::size_t{info.rows} * info.cols * 4;
  if (total != expected)
    fail(ErrorCode::kEmbeddingTruncated, path.string() + ": expected " + std::to_string(expected) +
                                             " bytes, found " + std::to_string(total));
  return info;
}

}  // namespace

Tensor read_embedding_file(const std::filesystem::path& path) {
  const auto bytes = detail::read_file_bytes(path, ErrorCode::kMissingEmbeddingFile);
  ByteReader r(bytes, ErrorCode::kEmbeddingTruncated, path.string());
  const EmbeddingInfo info = parse_embedding_header(r, bytes.size(), path);
  Tensor t = Tensor::zeros(info.rows, info.cols);
  for (double& v : t.values()) {
    const float f = r.get<float>();
    if (!std::isfinite(f)) fail(ErrorCode::kEmbeddingNonFinite, path.string() + ": non-finite payload value");
    v = f;
  }
  return t;
}

EmbeddingInfo inspect_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingEmbeddingFile, "missing embedding file " + path.string());
  std::vector<std::uint8_t> header(kEmbeddingHeaderBytes);
  in.read(reinterpret_cast<char*>(header.data()), static_cast<std::streamsize>(header.size()));
  header.resize(static_cast<std::size_t>(in.gcount()));
  const auto total = static_cast<std::size_t>(std::filesystem::file_size(path));
  ByteReader r(header, ErrorCode::kEmbeddingTruncated, path.string());
  return parse_embedding_header(r, total, path);
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

std::vector<std::size_t> Manifest::conversations_in(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < conversations.size(); ++i)
    if (conversations[i].split == split) out.push_back(i);
  return out;
}

std::size_t Manifest::utterance_count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [&](const UtteranceRecord& r) { return r.split == split; }));
}

const UtteranceRecord& Manifest::record(std::string_view utterance_id) const {
  auto it = by_utterance_.find(std::string(utterance_id));
  if (it == by_utterance_.end()) fail(ErrorCode::kMissingUtterance, "unknown utterance '" + std::string(utterance_id) + "'");
  return records[it->second];
}

void Manifest::index() {
  require(num_classes >= 2, ErrorCode::kManifestFormat, "manifest needs at least 2 classes");
  require(!records.empty(), ErrorCode::kManifestFormat, "manifest has no utterances");
  by_utterance_.clear();
  conversations.clear();
  std::unordered_map<std::string, std::size_t> conv_index;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const UtteranceRecord& r = records[i];
    if (r.label < 0 || static_cast<std::size_t>(r.label) >= num_classes)
      fail(ErrorCode::kLabelRange, "utterance '" + r.utterance_id + "': label " + std::to_string(r.label) +
                                       " outside [0, " + std::to_string(num_classes) + ")");
    if (!by_utterance_.emplace(r.utterance_id, i).second)
      fail(ErrorCode::kManifestDuplicate, "duplicate utterance id '" + r.utterance_id + "'");
    auto [it, inserted] = conv_index.emplace(r.conversation_id, conversations.size());
    if (inserted) conversations.push_back({r.conversation_id, r.split, {}});
    Conversation& c = conversations[it->second];
    if (c.split != r.split)
      fail(ErrorCode::kManifestFormat, "conversation '" + c.id + "' spans splits " + std::string(split_name(c.split)) +
                                           " and " + std::string(split_name(r.split)));
    c.utterances.push_back(i);
  }
  for (Conversation& c : conversations) {
    std::sort(c.utterances.begin(), c.utterances.end(),
              [&](std::size_t a, std::size_t b) { return records[a].order_index < records[b].order_index; });
    for (std::size_t k = 0; k < c.utterances.size(); ++k) {
      const std::size_t order = records[c.utterances[k]].order_index;
      if (k > 0 && order == records[c.utterances[k - 1]].order_index)
        fail(ErrorCode::kManifestDuplicate,
             "conversation '" + c.id + "': duplicate order_index " + std::to_string(order));
      if (order != k)
        fail(ErrorCode::kManifestOrdering, "conversation '" + c.id + "': order_index " + std::to_string(order) +
                                               " found where " + std::to_string(k) + " was expected");
    }
  }
}

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

template <typename T>
T parse_int(const std::string& text, const std::string& what, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
    fail(ErrorCode::kManifestFormat,
         "line " + std::to_string(line_no) + ": " + what + " '" + text + "' is not a valid integer");
  return value;
}

constexpr std::string_view kManifestTag = "#hierfuse-manifest";

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open manifest " + path.string());
  Manifest m;
  m.base_dir = path.parent_path();
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      const auto fields = split_tabs(line);
      if (fields.size() != 3 || fields[0] != kManifestTag)
        fail(ErrorCode::kManifestFormat, path.string() + ": first line must be '#hierfuse-manifest<TAB>1<TAB><classes>'");
      const int version = parse_int<int>(fields[1], "version", line_no);
      require(version == 1, ErrorCode::kManifestFormat, "unsupported manifest version " + fields[1]);
      m.num_classes = parse_int<std::size_t>(fields[2], "class count", line_no);
      header_seen = true;
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_tabs(line);
    if (f.size() != 7)
      fail(ErrorCode::kManifestFormat,
           "line " + std::to_string(line_no) + ": expected 7 tab-separated fields, found " + std::to_string(f.size()));
    for (std::size_t k = 0; k < f.size(); ++k)
      require(!f[k].empty(), ErrorCode::kManifestFormat,
              "line " + std::to_string(line_no) + ": field " + std::to_string(k + 1) + " is empty");
    UtteranceRecord r;
    r.conversation_id = f[0];
    r.utterance_id = f[1];
    r.order_index = parse_int<std::size_t>(f[2], "order_index", line_no);
    try {
      r.split = parse_split(f[3]);
    } catch (const Error& e) {
      fail(ErrorCode::kManifestFormat, "line " + std::to_string(line_no) + ": " + e.what());
    }
    r.label = parse_int<int>(f[4], "label", line_no);
    r.audio_path = f[5];
    r.text_path = f[6];
    m.records.push_back(std::move(r));
  }
  require(header_seen, ErrorCode::kManifestFormat, path.string() + ": empty manifest");
  m.index();
  for (const UtteranceRecord& r : m.records) {
    for (const std::string* rel : {&r.audio_path, &r.text_path}) {
      const auto full = m.resolve(*rel);
      if (!std::filesystem::exists(full))
        fail(ErrorCode::kMissingEmbeddingFile,
             "utterance '" + r.utterance_id + "': missing embedding file " + full.string());
      inspect_embedding_file(full);
    }
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& manifest) {
  std::ostringstream out;
  out << kManifestTag << "\t1\t" << manifest.num_classes << '\n';
  out << "# conversation_id\tutterance_id\torder_index\tsplit\tlabel\taudio_path\ttext_path\n";
  for (const UtteranceRecord& r : manifest.records)
    out << r.conversation_id << '\t' << r.utterance_id << '\t' << r.order_index << '\t' << split_name(r.split) << '\t'
        << r.label << '\t' << r.audio_path << '\t' << r.text_path << '\n';
  detail::write_text_file(path, out.str());
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  Dataset d;
  d.manifest = load_manifest(manifest_path);
  d.audio.reserve(d.manifest.records.size());
  d.text.reserve(d.manifest.records.size());
  for (const UtteranceRecord& r : d.manifest.records) {
    d.audio.push_back(read_embedding_file(d.manifest.resolve(r.audio_path)));
    d.text.push_back(read_embedding_file(d.manifest.resolve(r.text_path)));
  }
  d.audio_dim = d.audio.front().cols();
  d.text_dim = d.text.front().cols();
  for (std::size_t i = 0; i < d.audio.size(); ++i) {
    const std::string& id = d.manifest.records[i].utterance_id;
    require(d.audio[i].cols() == d.audio_dim, ErrorCode::kShape,
            "utterance '" + id + "': audio width " + std::to_string(d.audio[i].cols()) + ", expected " +
                std::to_string(d.audio_dim));
    require(d.text[i].cols() == d.text_dim, ErrorCode::kShape,
            "utterance '" + id + "': text width " + std::to_string(d.text[i].cols()) + ", expected " +
                std::to_string(d.text_dim));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Embedding store
// ---------------------------------------------------------------------------

namespace {
constexpr char kStoreMagic[4] = {'H', 'F', 'S', 'T'};
constexpr std::uint32_t kStoreVersion = 1;
}  // namespace

void EmbeddingStore::put(const std::string& utterance_id, std::span<const double> vector) {
  require(vector.size() == dim_, ErrorCode::kShape,
          "store vector width " + std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
  for (double v : vector)
    require(std::isfinite(v), ErrorCode::kEmbeddingNonFinite, "non-finite embedding for '" + utterance_id + "'");
  if (!index_.emplace(utterance_id, ids_.size()).second)
    fail(ErrorCode::kManifestDuplicate, "store already holds '" + utterance_id + "'");
  ids_.push_back(utterance_id);
  values_.insert(values_.end(), vector.begin(), vector.end());
}

std::span<const double> EmbeddingStore::get(std::string_view utterance_id) const {
  auto it = index_.find(std::string(utterance_id));
  if (it == index_.end())
    fail(ErrorCode::kMissingUtterance, "stage-" + std::to_string(stage_) + " " + std::string(modality_name(modality_)) +
                                           " store has no entry for '" + std::string(utterance_id) + "'");
  return {values_.data() + it->second * dim_, dim_};
}

Tensor EmbeddingStore::gather(const std::vector<std::string>& utterance_ids) const {
  Tensor out = Tensor::zeros(utterance_ids.size(), dim_);
  for (std::size_t i = 0; i < utterance_ids.size(); ++i) {
    auto v = get(utterance_ids[i]);
    std::copy(v.begin(), v.end(), out.row(i).begin());
  }
  return out;
}

void EmbeddingStore::save(const std::filesystem::path& path) const {
  ByteWriter w;
  w.bytes(kStoreMagic, 4);
  w.put(kStoreVersion);
  w.put(static_cast<std::uint32_t>(stage_));
  w.put(static_cast<std::uint32_t>(modality_));
  w.put(static_cast<std::uint32_t>(dim_));
  w.put(static_cast<std::uint64_t>(ids_.size()));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    w.str(ids_[i]);
    w.bytes(values_.data() + i * dim_, dim_ * sizeof(double));
  }
  w.put(detail::fnv1a64(w.data().data(), w.data().size()));
  detail::write_file_bytes(path, w.data());
}

EmbeddingStore EmbeddingStore::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail(ErrorCode::kMissingStore, "embedding store not found: " + path.string());
  const auto bytes = detail::read_file_bytes(path, ErrorCode::kMissingStore);
  require(bytes.size() >= 8, ErrorCode::kEmbeddingTruncated, path.string() + ": too short for an embedding store");
  ByteReader r(bytes, ErrorCode::kEmbeddingTruncated, path.string());
  char magic[4];
  r.bytes(magic, 4);
  require(std::equal(magic, magic + 4, kStoreMagic), ErrorCode::kEmbeddingMagic,
          path.string() + ": not an embedding store");
  require(r.get<std::uint32_t>() == kStoreVersion, ErrorCode::kEmbeddingMagic, path.string() + ": unsupported version");
  const auto stage = r.get<std::uint32_t>();
  const auto modality = r.get<std::uint32_t>();
  const auto dim = r.get<std::uint32_t>();
  require(modality <= 2, ErrorCode::kEmbeddingMagic, path.string() + ": bad modality field");
  EmbeddingStore store(static_cast<int>(stage), static_cast<Modality>(modality), dim);
  const auto count = r.get<std::uint64_t>();
  std::vector<double> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string id = r.str();
    r.bytes(row.data(), dim * sizeof(double));
    store.put(id, row);
  }
  const std::size_t body = r.position();
  const auto stored = r.get<std::uint64_t>();
  require(r.remaining() == 0, ErrorCode::kEmbeddingTruncated, path.string() + ": trailing bytes");
  if (stored != detail::fnv1a64(bytes.data(), body))
    fail(ErrorCode::kCheckpointHash, path.string() + ": embedding store hash mismatch");
  return store;
}

// ---------------------------------------------------------------------------
// Batching
// ---------------------------------------------------------------------------

std::size_t ConversationBatch::padding_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{0}));
}

namespace {

std::uint64_t epoch_seed(std::uint64_t seed, std::string_view what, std::size_t epoch) {
  return derive_seed(seed, std::string(what) + "/" + std::to_string(epoch));
}

}  // namespace

std::vector<ConversationBatch> batch_conversations(const Manifest& manifest, Split split, std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  require(batch_size >= 1, ErrorCode::kConfig, "batch size must be >= 1");
  std::vector<std::size_t> order = manifest.conversations_in(split);
  require(!order.empty(), ErrorCode::kEmptySplit, "split '" + std::string(split_name(split)) + "' has no conversations");
  Rng rng(epoch_seed(seed, "conversations", epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<ConversationBatch> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    ConversationBatch b;
    b.offsets.push_back(0);
    for (std::size_t k = start; k < std::min(order.size(), start + batch_size); ++k) {
      const Conversation& c = manifest.conversations[order[k]];
      b.conversations.push_back(order[k]);
      b.records.insert(b.records.end(), c.utterances.begin(), c.utterances.end());
      b.offsets.push_back(b.records.size());
      b.max_length = std::max(b.max_length, c.utterances.size());
    }
    b.mask.assign(b.conversations.size() * b.max_length, 0);
    for (std::size_t i = 0; i < b.conversations.size(); ++i)
      std::fill_n(b.mask.begin() + static_cast<std::ptrdiff_t>(i * b.max_length), b.offsets[i + 1] - b.offsets[i], 1);
    batches.push_back(std::move(b));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> batch_utterances(const Manifest& manifest, Split split, std::size_t batch_size,
                                                       std::uint64_t seed, std::size_t epoch) {
  require(batch_size >= 1, ErrorCode::kConfig, "batch size must be >= 1");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < manifest.records.size(); ++i)
    if (manifest.records[i].split == split) order.push_back(i);
  require(!order.empty(), ErrorCode::kEmptySplit, "split '" + std::string(split_name(split)) + "' has no utterances");
  Rng rng(epoch_seed(seed, "utterances", epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
  return batches;
}

}  // namespace hierfuse
