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

#include <stdexcept>
#include <string>
#include <string_view>

namespace hierfuse {

// Every failure the library surfaces carries one of these codes. The code
// determines the process exit status of the command-line tool.
enum class ErrorCode {
  kUsage,
  kConfig,
  kShape,
  kNumericDomain,
  kDivergence,
  kNonFiniteGradient,
  kAllMasked,
  kUnnormalizedFeatures,
  kLabelRange,
  kLengthMismatch,
  kNotDistribution,
  kWeightConstraint,
  kIo,
  kManifestFormat,
  kManifestOrdering,
  kManifestDuplicate,
  kMissingEmbeddingFile,
  kEmbeddingMagic,
  kEmbeddingTruncated,
  kEmbeddingNonFinite,
  kMissingStore,
  kMissingUtterance,
  kMissingCheckpoint,
  kCheckpointFormat,
  kCheckpointHash,
  kStageMismatch,
  kFrozenStageViolation,
  kEmptySplit,
  kOutputExists,
  kGradientCheck,
};

// Exit-status classes: 1 usage, 2 data contract, 3 numeric failure.
enum class ErrorClass { kUsage = 1, kDataContract = 2, kNumeric = 3 };

std::string_view error_code_name(ErrorCode code);
ErrorClass error_class(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorClass error_class() const noexcept { return hierfuse::error_class(code_); }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace hierfuse
