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
#include <string>
#include <vector>

#include "hierfuse/gradcheck.hpp"

namespace hierfuse {

struct SuiteResult {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference checks of every differentiable operation, block, model,
/// loss and whole-stage training graph at small sizes (sequence lengths up
/// to 4, d_model 8). Each check reduces its output to a scalar through a
/// fixed random read-out.
std::vector<SuiteResult> run_gradient_suite(std::uint64_t seed = 1, const GradCheckOptions& options = {});

}  // namespace hierfuse
