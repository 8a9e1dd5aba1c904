// Copyright 2026 The slmfg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "slmfg/core.hpp"

namespace slmfg {

// Shifted weights below this are flushed to zero before normalizing.
inline constexpr double kGibbsUnderflow = 1e-300;

// Minimizes sum p c + eps sum p log p over the simplex. For eps > 0 the
// minimizer is p ∝ exp(-c / eps) and the minimum is -eps log sum exp(-c/eps);
// both are computed shifted by min(c). For eps == 0 the result is a point
// mass on the first minimal cost. Writes `probs` and returns the value.
inline double gibbs_step(std::span<const double> costs, double eps,
                         std::span<double> probs) {
  if (costs.empty()) throw InternalError("gibbs_step on an empty cost vector");
  std::size_t arg = 0;
  double lo = costs[0];
  for (std::size_t i = 1; i < costs.size(); ++i) {
    if (costs[i] < lo) {
      lo = costs[i];
      arg = i;
    }
  }
  if (!std::isfinite(lo)) throw NumericError("non-finite candidate cost");
  if (eps <= 0.0) {
    for (std::size_t i = 0; i < costs.size(); ++i) probs[i] = 0.0;
    probs[arg] = 1.0;
    return lo;
  }
  double z = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (!std::isfinite(costs[i])) throw NumericError("non-finite candidate cost");
    double w = std::exp(-(costs[i] - lo) / eps);
    if (w < kGibbsUnderflow) w = 0.0;
    probs[i] = w;
    z += w;
  }
  const double inv = 1.0 / z;
  for (std::size_t i = 0; i < costs.size(); ++i) probs[i] *= inv;
  return lo - eps * std::log(z);
}

struct GibbsResult {
  double value = 0.0;
  std::vector<double> probs;
};

inline GibbsResult gibbs_step(std::span<const double> costs, double eps) {
  GibbsResult r;
  r.probs.resize(costs.size());
  r.value = gibbs_step(costs, eps, std::span<double>(r.probs));
  return r;
}

// sum p log p with 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
  double s = 0.0;
  for (double v : p) {
    if (v > 0.0) s += v * std::log(v);
  }
  return s;
}

}  // namespace slmfg
