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

#include "hierfuse/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace hierfuse {

double relative_error(double analytic, double numeric, double abs_floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const LossBuilder& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var root = loss(g);
    g.backward(root);
  }
  auto evaluate = [&]() {
    Graph g;
    return loss(g).value()[0];
  };

  GradCheckReport report;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double original = p->value[i];
      p->value[i] = original + options.eps;
      const double plus = evaluate();
      p->value[i] = original - options.eps;
      const double minus = evaluate();
      p->value[i] = original;
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double analytic = p->grad[i];
      const double err = relative_error(analytic, numeric, options.abs_floor);
      ++report.entries_checked;
      if (!(err <= report.max_rel_error)) {
        report.max_rel_error = err;
        report.worst_parameter = p->name;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = std::isfinite(report.max_rel_error) && report.max_rel_error < options.tolerance;
  return report;
}

}  // namespace hierfuse
