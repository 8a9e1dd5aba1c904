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
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/lattice.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

// Time marginals M_0 .. M_{N_t}; marginal k is indexed by the node ids of S_k.
struct Flow {
  std::vector<std::vector<double>> marginals;

  int n_steps() const { return static_cast<int>(marginals.size()) - 1; }
  const std::vector<double>& operator[](int k) const { return marginals[k]; }
  std::vector<double>& operator[](int k) { return marginals[k]; }

  friend bool operator==(const Flow&, const Flow&) = default;
};

// M_k = m for every k; `m` must live on S_0 and is zero-extended to S_k by
// matching lattice indices.
template <int D>
Flow constant_flow(const LevelSets<D>& ls, const std::vector<double>& m) {
  Flow f;
  f.marginals.resize(ls.sets.size());
  for (std::size_t k = 0; k < ls.sets.size(); ++k) {
    f.marginals[k].assign(ls.sets[k].size(), 0.0);
    for (std::size_t i = 0; i < ls.sets[0].size(); ++i) {
      const NodeId id = ls.sets[k].find(ls.sets[0].node(static_cast<NodeId>(i)));
      if (id == kNoNode) {
        throw InternalError("S_0 node missing from a later level set");
      }
      f.marginals[k][id] = m[i];
    }
  }
  return f;
}

// Uniform probability on every S_k.
template <int D>
Flow uniform_flow(const LevelSets<D>& ls) {
  Flow f;
  for (const auto& s : ls.sets) {
    f.marginals.emplace_back(s.size(), 1.0 / static_cast<double>(s.size()));
  }
  return f;
}

template <int D>
DiscreteMeasure<D> marginal_measure(const LevelSet<D>& level,
                                    const std::vector<double>& mass,
                                    double dx) {
  DiscreteMeasure<D> mu;
  mu.atoms = level.coordinates(dx);
  mu.weights = mass;
  return mu;
}

inline void check_same_shape(const Flow& a, const Flow& b) {
  if (a.marginals.size() != b.marginals.size()) {
    throw UsageError("flows have different numbers of time steps");
  }
  for (std::size_t k = 0; k < a.marginals.size(); ++k) {
    if (a.marginals[k].size() != b.marginals[k].size()) {
      throw UsageError("flows live on different level sets");
    }
  }
}

}  // namespace slmfg
