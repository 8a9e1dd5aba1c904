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

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <string>
#include <ostream>
#include <sstream>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/flow.hpp"
#include "slmfg/hjb.hpp"
#include "slmfg/lattice.hpp"
#include "slmfg/parallel.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

// Anything that can produce the rows of P_0 .. P_{N_t - 1}.
template <class K>
concept KernelSource = requires(const K& ker, int k, NodeId x,
                                std::vector<KernelEntry>& out) {
  { ker.n_steps() } -> std::convertible_to<int>;
  { ker.level_size(k) } -> std::convertible_to<std::size_t>;
  ker.row(k, x, out);
};

// Cell masses m0(E(x)) on S_0 by 5-point Gauss-Legendre per axis over
// E(x) ∩ supp box, renormalized to an exact probability vector.
template <int D>
std::vector<double> discretize_initial(const InitialMeasure<D>& m0,
                                       const LevelSet<D>& s0, double dx) {
  std::vector<double> mass(s0.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < s0.size(); ++i) {
    const Vec<D> x = coords<D>(s0.node(static_cast<NodeId>(i)), dx);
    Vec<D> lo{}, hi{};
    for (int a = 0; a < D; ++a) {
      lo[a] = std::max(x[a] - 0.5 * dx, m0.support_box.lo[a]);
      hi[a] = std::min(x[a] + 0.5 * dx, m0.support_box.hi[a]);
    }
    const double m = quad::integrate_box<D>(
        [&](const Vec<D>& y) { return m0.density(y); }, lo, hi, 1);
    if (!(m >= 0.0)) throw NumericError("negative or NaN initial cell mass");
    mass[i] = m;
    total += m;
  }
  if (total < 0.99) {
    std::ostringstream msg;
    msg << "S_0 cells capture only " << total
        << " of the initial mass; the lattice misses the support";
    throw CoverageError(msg.str());
  }
  for (double& m : mass) m /= total;
  return mass;
}

template <int D>
std::vector<double> discretize_initial(const InitialMeasure<D>& m0,
                                       const LevelSets<D>& levels) {
  return discretize_initial<D>(m0, levels[0], levels.dx);
}

// M_{k+1}(y) = sum_x P_k(x, y) M_k(x). Rows are generated in parallel in
// blocks and accumulated in source order, so the result does not depend on
// the thread count.
template <KernelSource K>
Flow forward_push(const std::vector<double>& m0, const K& kernel,
                  int threads = 1) {
  const int n = kernel.n_steps();
  if (m0.size() != kernel.level_size(0)) {
    throw UsageError("initial vector does not live on S_0");
  }
  Flow f;
  f.marginals.resize(n + 1);
  f.marginals[0] = m0;
  constexpr std::size_t kBlock = 4096;
  std::vector<std::vector<KernelEntry>> rows(kBlock);
  for (int k = 0; k < n; ++k) {
    const std::vector<double>& src = f.marginals[k];
    std::vector<double>& dst = f.marginals[k + 1];
    dst.assign(kernel.level_size(k + 1), 0.0);
    for (std::size_t b0 = 0; b0 < src.size(); b0 += kBlock) {
      const std::size_t len = std::min(kBlock, src.size() - b0);
      parallel_for(len, threads, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
          if (src[b0 + i] == 0.0) {
            rows[i].clear();
          } else {
            kernel.row(k, static_cast<NodeId>(b0 + i), rows[i]);
          }
        }
      });
      for (std::size_t i = 0; i < len; ++i) {
        const double m = src[b0 + i];
        for (const KernelEntry& e : rows[i]) dst[e.target] += e.prob * m;
      }
    }
  }
  return f;
}

// The best-response map br(M): backward sweep against M, then push the
// discretized initial measure through the induced kernels.
template <int D, int R>
class BestResponse {
 public:
  BestResponse(const ProblemSpec<D, R>& problem, const Discretization& disc,
               const LevelSets<D>& levels, int threads = 1)
      : problem_(&problem),
        disc_(&disc),
        levels_(&levels),
        threads_(threads),
        m0_(discretize_initial<D>(problem.m0, levels)) {}

  Flow operator()(const Flow& flow) const {
    const ValuePolicy<D, R> vp =
        backward_sweep(*problem_, *disc_, *levels_, flow, threads_);
    return forward_push(m0_, vp, threads_);
  }

  ValuePolicy<D, R> sweep(const Flow& flow) const {
    return backward_sweep(*problem_, *disc_, *levels_, flow, threads_);
  }

  // M_k = M_0 for every k.
  Flow initial_guess() const { return constant_flow<D>(*levels_, m0_); }

  const std::vector<double>& initial_marginal() const { return m0_; }
  const LevelSets<D>& levels() const { return *levels_; }
  const Discretization& disc() const { return *disc_; }
  const ProblemSpec<D, R>& problem() const { return *problem_; }
  int threads() const { return threads_; }

 private:
  const ProblemSpec<D, R>* problem_;
  const Discretization* disc_;
  const LevelSets<D>* levels_;
  int threads_;
  std::vector<double> m0_;
};

template <int D, int R>
Flow best_response(const Flow& flow, const ProblemSpec<D, R>& problem,
                   const Discretization& disc, const LevelSets<D>& levels,
                   int threads = 1) {
  return BestResponse<D, R>(problem, disc, levels, threads)(flow);
}

// CSV: k, t, x0.., mass.
template <int D>
void write_flow_csv(std::ostream& os, const Flow& flow,
                    const LevelSets<D>& levels, double dt) {
  os << "k,t";
  for (int i = 0; i < D; ++i) os << ",x" << i;
  os << ",mass\n";
  char buf[64];
  for (int k = 0; k <= flow.n_steps(); ++k) {
    const LevelSet<D>& level = levels[k];
    std::snprintf(buf, sizeof buf, "%.17g", k * dt);
    const std::string t = buf;
    for (std::size_t i = 0; i < level.size(); ++i) {
      os << k << ',' << t;
      const auto& n = level.node(static_cast<NodeId>(i));
      for (int a = 0; a < D; ++a) {
        std::snprintf(buf, sizeof buf, ",%.17g",
                      static_cast<double>(n[a]) * levels.dx);
        os << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.17g\n", flow[k][i]);
      os << buf;
    }
  }
}

// Inverse of write_flow_csv on the same level sets. Node coordinates are
// checked against the lattice.
template <int D>
Flow read_flow_csv(std::istream& is, const LevelSets<D>& levels) {
  std::string line;
  std::string header = "k,t";
  for (int i = 0; i < D; ++i) header += ",x" + std::to_string(i);
  header += ",mass";
  if (!std::getline(is, line) || line != header) {
    throw UsageError("flow CSV: unexpected header");
  }
  Flow f;
  f.marginals.resize(levels.sets.size());
  std::vector<std::size_t> filled(levels.sets.size(), 0);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(std::strtod(cell.c_str(), nullptr));
    const auto bad = [&] {
      return UsageError("flow CSV: row " + std::to_string(lineno) +
                        " does not match the level sets");
    };
    if (cols.size() != static_cast<std::size_t>(D) + 3) throw bad();
    const int k = static_cast<int>(cols[0]);
    if (k < 0 || k > levels.n_steps()) throw bad();
    const std::size_t i = filled[k]++;
    if (i >= levels[k].size()) throw bad();
    const auto& node = levels[k].node(static_cast<NodeId>(i));
    for (int a = 0; a < D; ++a) {
      if (std::llround(cols[2 + a] / levels.dx) != node[a]) throw bad();
    }
    f.marginals[k].push_back(cols[D + 2]);
  }
  for (std::size_t k = 0; k < levels.sets.size(); ++k) {
    if (filled[k] != levels.sets[k].size()) {
      throw UsageError("flow CSV: level " + std::to_string(k) + " incomplete");
    }
  }
  return f;
}

}  // namespace slmfg
