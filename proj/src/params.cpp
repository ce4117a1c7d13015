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

#include "hierfuse/params.hpp"

#include <cmath>

#include "hierfuse/error.hpp"

namespace hierfuse {

void Parameter::zero_grad() {
  if (grad.empty() || !grad.same_shape(value))
    grad = Tensor(value.shape());
  else
    grad.fill(0.0);
}

Parameter& ParameterSet::add(std::string name, std::vector<std::size_t> shape) {
  require(find(name) == nullptr, ErrorCode::kShape, "duplicate parameter name '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = std::move(name);
  p->value = Tensor(shape);
  p->grad = Tensor(std::move(shape));
  params_.push_back(std::move(p));
  return *params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

const Parameter* ParameterSet::find(const std::string& name) const {
  for (const auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

Parameter& ParameterSet::get(const std::string& name) {
  Parameter* p = find(name);
  require(p != nullptr, ErrorCode::kShape, "unknown parameter '" + name + "'");
  return *p;
}

std::vector<Parameter*> ParameterSet::all() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> ParameterSet::all() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  require(other.size() == size(), ErrorCode::kShape, "parameter sets differ in size");
  for (auto& p : params_) {
    const Parameter* src = other.find(p->name);
    require(src != nullptr, ErrorCode::kShape, "missing parameter '" + p->name + "'");
    require(src->value.same_shape(p->value), ErrorCode::kShape,
            "parameter '" + p->name + "' has shape " + src->value.shape_string() + ", expected " +
                p->value.shape_string());
    p->value = src->value;
  }
}

void init_fan_in_uniform(Parameter& p, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (double& v : p.value.values()) v = rng.uniform(-bound, bound);
}

void init_default(ParameterSet& params, Rng& rng) {
  for (Parameter* p : params.all()) {
    if (p->value.rank() == 2) {
      init_fan_in_uniform(*p, p->value.cols(), rng);
    } else if (p->name.size() >= 6 && p->name.ends_with(".gamma")) {
      p->value.fill(1.0);
    } else {
      p->value.fill(0.0);
    }
  }
}

}  // namespace hierfuse
