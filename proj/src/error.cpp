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

#include "hierfuse/error.hpp"

namespace hierfuse {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage: return "usage error";
    case ErrorCode::kConfig: return "config error";
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kNumericDomain: return "numeric-domain error";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kNonFiniteGradient: return "non-finite gradient";
    case ErrorCode::kAllMasked: return "all-masked input";
    case ErrorCode::kUnnormalizedFeatures: return "unnormalized features";
    case ErrorCode::kLabelRange: return "label range error";
    case ErrorCode::kLengthMismatch: return "length mismatch";
    case ErrorCode::kNotDistribution: return "not a distribution";
    case ErrorCode::kWeightConstraint: return "weight constraint violation";
    case ErrorCode::kIo: return "i/o error";
    case ErrorCode::kManifestFormat: return "manifest format error";
    case ErrorCode::kManifestOrdering: return "manifest ordering error";
    case ErrorCode::kManifestDuplicate: return "manifest duplicate error";
    case ErrorCode::kMissingEmbeddingFile: return "missing embedding file";
    case ErrorCode::kEmbeddingMagic: return "embedding magic mismatch";
    case ErrorCode::kEmbeddingTruncated: return "embedding truncated";
    case ErrorCode::kEmbeddingNonFinite: return "embedding non-finite payload";
    case ErrorCode::kMissingStore: return "missing embedding store";
    case ErrorCode::kMissingUtterance: return "missing utterance";
    case ErrorCode::kMissingCheckpoint: return "missing checkpoint";
    case ErrorCode::kCheckpointFormat: return "checkpoint format error";
    case ErrorCode::kCheckpointHash: return "checkpoint hash mismatch";
    case ErrorCode::kStageMismatch: return "stage mismatch";
    case ErrorCode::kFrozenStageViolation: return "frozen-stage violation";
    case ErrorCode::kEmptySplit: return "empty split";
    case ErrorCode::kOutputExists: return "output exists";
    case ErrorCode::kGradientCheck: return "gradient check failure";
  }
  return "unknown error";
}

ErrorClass error_class(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUsage:
    case ErrorCode::kConfig:
      return ErrorClass::kUsage;
    case ErrorCode::kNumericDomain:
    case ErrorCode::kDivergence:
    case ErrorCode::kNonFiniteGradient:
    case ErrorCode::kGradientCheck:
      return ErrorClass::kNumeric;
    default:
      return ErrorClass::kDataContract;
  }
}

}  // namespace hierfuse
