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
#include <memory>
#include <string>
#include <vector>

#include "hierfuse/rng.hpp"
#include "hierfuse/tensor.hpp"

namespace hierfuse {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad();
};

/// Owns a model's parameters with stable addresses, in registration order.
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  Parameter& add(std::string name, std::vector<std::size_t> shape);
  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& get(const std::string& name);

  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;
  void zero_grad();

  /// Copies values from `other` by name; both sets must hold the same names and shapes.
  void copy_values_from(const ParameterSet& other);

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
};

/// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)).
void init_fan_in_uniform(Parameter& p, std::size_t fan_in, Rng& rng);

/// Applies the default initialization to every parameter: weights (rank 2)
/// use fan-in uniform with fan_in = cols, vectors named "*.gamma" are ones,
/// all other vectors are zeros.
void init_default(ParameterSet& params, Rng& rng);

}  // namespace hierfuse
