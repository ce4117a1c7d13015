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

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hierfuse/error.hpp"

namespace hierfuse::detail {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

inline std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  template <typename T>
  void put(T value) {
    bytes(&value, sizeof value);
  }
  void str(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; running off the end raises `truncated` with the
/// byte counts.
class ByteReader {
 public:
  ByteReader(const std::vector<std::uint8_t>& buf, ErrorCode truncated, std::string what)
      : buf_(buf), truncated_(truncated), what_(std::move(what)) {}

  void bytes(void* out, std::size_t n) {
    if (pos_ + n > buf_.size())
      fail(truncated_, what_ + ": expected at least " + std::to_string(pos_ + n) + " bytes, found " +
                           std::to_string(buf_.size()));
    std::memcpy(out, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T get() {
    T value;
    bytes(&value, sizeof value);
    return value;
  }
  std::string str() {
    const auto n = get<std::uint32_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return buf_.size() - pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t pos_ = 0;
  ErrorCode truncated_;
  std::string what_;
};

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path, ErrorCode missing);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& data);
std::string read_text_file(const std::filesystem::path& path, ErrorCode missing);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace hierfuse::detail
