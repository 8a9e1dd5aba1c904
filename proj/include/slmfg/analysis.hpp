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

// Equilibrium diagnostics: 1D Wasserstein-1 distances, path sampling from
// the lattice Markov chain, and path-wise state/velocity bounds.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/lattice.hpp"
#include "slmfg/parallel.hpp"
#include "slmfg/transport.hpp"

namespace slmfg {

// Atomic probability measure on the real line.
struct Measure1D {
  std::vector<double> points;
  std::vector<double> weights;
};

inline constexpr double kNormTolerance = 1e-9;

// Area between the two CDFs, exact for atomic measures.
inline double wasserstein1_1d(const Measure1D& mu, const Measure1D& nu) {
  auto check = [](const Measure1D& m, const char* name) {
    if (m.points.size() != m.weights.size() || m.points.empty()) {
      throw UsageError(std::string("wasserstein1_1d: malformed measure ") + name);
    }
    double s = 0.0;
    for (double w : m.weights) {
      if (w < 0.0) throw UsageError("wasserstein1_1d: negative weight");
      s += w;
    }
    if (std::abs(s - 1.0) > kNormTolerance) {
      throw UsageError(std::string("wasserstein1_1d: measure ") + name +
                       " is not normalized");
    }
  };
  check(mu, "mu");
  check(nu, "nu");
  struct Jump {
    double x;
    double dw;
  };
  std::vector<Jump> jumps;
  jumps.reserve(mu.points.size() + nu.points.size());
  for (std::size_t i = 0; i < mu.points.size(); ++i) {
    jumps.push_back({mu.points[i], mu.weights[i]});
  }
  for (std::size_t i = 0; i < nu.points.size(); ++i) {
    jumps.push_back({nu.points[i], -nu.weights[i]});
  }
  std::sort(jumps.begin(), jumps.end(),
            [](const Jump& a, const Jump& b) { return a.x < b.x; });
  double diff = 0.0, area = 0.0;
  for (std::size_t i = 0; i + 1 < jumps.size(); ++i) {
    diff += jumps[i].dw;
    area += std::abs(diff) * (jumps[i + 1].x - jumps[i].x);
  }
  return area;
}

// Projection of a lattice marginal onto one coordinate axis.
template <int D>
Measure1D axis_marginal(const LevelSet<D>& level, const std::vector<double>& mass,
                        double dx, int axis) {
  std::vector<std::pair<std::int64_t, double>> acc;
  acc.reserve(level.size());
  for (std::size_t i = 0; i < level.size(); ++i) {
    acc.emplace_back(level.node(static_cast<NodeId>(i))[axis], mass[i]);
  }
  std::sort(acc.begin(), acc.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  Measure1D m;
  for (const auto& [i, w] : acc) {
    if (!m.points.empty() && m.points.back() == static_cast<double>(i) * dx) {
      m.weights.back() += w;
    } else {
      m.points.push_back(static_cast<double>(i) * dx);
      m.weights.push_back(w);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Sampling.

// splitmix64 (Steele, Lea, Flood 2014), used as a counter-based stream: the
// n-th draw of a stream keyed by s is mix(s + n * golden).
inline constexpr const char* kRngName = "splitmix64";

inline std::uint64_t splitmix64_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t key) : state_(key) {}
  std::uint64_t next() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return splitmix64_mix(state_);
  }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

template <int D>
struct SampledPath {
  std::vector<double> times;
  std::vector<Vec<D>> states;
  std::vector<NodeId> nodes;  // node id of states[k] in S_k
};

// Index drawn from an unnormalized weight list by inversion.
inline std::size_t draw_index(const double* w, std::size_t n, double u) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += w[i];
  const double target = u * total;
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (w[i] <= 0.0) continue;
    cum += w[i];
    last = i;
    if (target < cum) return i;
  }
  return last;
}

// gamma(0) ~ m0, gamma(t_{k+1}) ~ P_k(gamma(t_k), .). Path p uses the stream
// keyed by seed + p, so results do not depend on the thread count.
template <int D, KernelSource K>
std::vector<SampledPath<D>> sample_trajectories(const std::vector<double>& m0,
                                                const K& kernel,
                                                const LevelSets<D>& levels,
                                                double dt, std::size_t count,
                                                std::uint64_t seed,
                                                int threads = 1) {
  std::vector<SampledPath<D>> paths(count);
  if (count == 0) return paths;
  if (m0.size() != levels[0].size()) {
    throw UsageError("initial vector does not live on S_0");
  }
  const int n = kernel.n_steps();
  parallel_for(count, threads, [&](std::size_t b, std::size_t e, int) {
    std::vector<KernelEntry> row;
    std::vector<double> w;
    for (std::size_t p = b; p < e; ++p) {
      SplitMix64 rng(seed + p);
      SampledPath<D>& path = paths[p];
      path.times.resize(n + 1);
      path.states.resize(n + 1);
      path.nodes.resize(n + 1);
      NodeId x = static_cast<NodeId>(draw_index(m0.data(), m0.size(), rng.uniform()));
      for (int k = 0; k <= n; ++k) {
        path.times[k] = k * dt;
        path.nodes[k] = x;
        path.states[k] = coords<D>(levels[k].node(x), levels.dx);
        if (k == n) break;
        kernel.row(k, x, row);
        w.resize(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) w[i] = row[i].prob;
        x = row[draw_index(w.data(), w.size(), rng.uniform())].target;
      }
    }
  });
  return paths;
}

struct PathBounds {
  double max_state = 0.0;
  double max_velocity = 0.0;
};

template <int D>
PathBounds path_bounds_check(const std::vector<SampledPath<D>>& paths) {
  if (paths.empty()) throw UsageError("path_bounds_check needs at least one path");
  PathBounds b;
  for (const auto& p : paths) {
    for (std::size_t k = 0; k < p.states.size(); ++k) {
      b.max_state = std::max(b.max_state, norm_inf<D>(p.states[k]));
      if (k + 1 < p.states.size()) {
        const double h = p.times[k + 1] - p.times[k];
        for (int i = 0; i < D; ++i) {
          b.max_velocity = std::max(
              b.max_velocity, std::abs(p.states[k + 1][i] - p.states[k][i]) / h);
        }
      }
    }
  }
  return b;
}

// Empirical law of coordinate `axis` at time index k.
template <int D>
Measure1D empirical_marginal(const std::vector<SampledPath<D>>& paths, int k,
                             int axis) {
  std::vector<double> xs;
  xs.reserve(paths.size());
  for (const auto& p : paths) xs.push_back(p.states[k][axis]);
  std::sort(xs.begin(), xs.end());
  Measure1D m;
  const double w = 1.0 / static_cast<double>(xs.size());
  for (double x : xs) {
    if (!m.points.empty() && m.points.back() == x) {
      m.weights.back() += w;
    } else {
      m.points.push_back(x);
      m.weights.push_back(w);
    }
  }
  return m;
}

// CSV: path_id, k, t, x0..
template <int D>
void write_paths_csv(std::ostream& os, const std::vector<SampledPath<D>>& paths) {
  os << "path_id,k,t";
  for (int i = 0; i < D; ++i) os << ",x" << i;
  os << "\n";
  char buf[64];
  for (std::size_t p = 0; p < paths.size(); ++p) {
    for (std::size_t k = 0; k < paths[p].states.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", paths[p].times[k]);
      os << p << ',' << k << ',' << buf;
      for (int i = 0; i < D; ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g", paths[p].states[k][i]);
        os << buf;
      }
      os << "\n";
    }
  }
}

}  // namespace slmfg
