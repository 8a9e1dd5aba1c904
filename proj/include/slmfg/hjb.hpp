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

// Backward dynamic programming on the level sets.
//
// For a flow M, V_{N_t} = g(., M_{N_t}) and for k < N_t each node x in S_k
// scores every admissible lattice target y1 by
//
//   c(y1) = dt * l(t_k, alpha(k,x,y1), x, M_k) + I[V_{k+1}(y1, .)](y2(k,x,y1))
//
// and takes the entropy-regularized minimum over the simplex (a Gibbs
// distribution for eps > 0, a point mass for eps == 0). The induced kernel
// moves mass from x to (y1, y2') with probability p(y1) * beta_{y2'}(y2).
//
// Policies are not stored: a row is re-derived on demand from V_{k+1} and the
// cached coupling values, which is what keeps two-dimensional problems with
// millions of nodes inside memory.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>
#include <span>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/flow.hpp"
#include "slmfg/gibbs.hpp"
#include "slmfg/lattice.hpp"
#include "slmfg/parallel.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

struct KernelEntry {
  NodeId target = kNoNode;
  double prob = 0.0;
};

// Candidate data for one (k, x), reused across calls to avoid allocation.
template <int D, int R>
struct RowScratch {
  static constexpr int M = D - R;
  static constexpr int kCorners = 1 << M;

  std::vector<Index<R>> targets;
  std::vector<Vec<R>> controls;
  std::vector<double> costs;
  std::vector<double> probs;
  std::vector<std::array<NodeId, kCorners>> corner_ids;
  std::vector<std::array<double, kCorners>> corner_weights;
  std::vector<int> corner_counts;
  double value = 0.0;

  void clear() {
    targets.clear();
    controls.clear();
    costs.clear();
    probs.clear();
    corner_ids.clear();
    corner_weights.clear();
    corner_counts.clear();
  }
};

// Value function V_k on S_k for every k together with what is needed to
// rebuild the Gibbs policy rows. Holds non-owning pointers to the problem,
// discretization and level sets, which must outlive it.
template <int D, int R>
class ValuePolicy {
 public:
  ValuePolicy(const ProblemSpec<D, R>& problem, const Discretization& disc,
              const LevelSets<D>& levels)
      : problem_(&problem), disc_(&disc), levels_(&levels) {
    values_.resize(levels.sets.size());
    coupling_.resize(levels.sets.size());
  }

  const ProblemSpec<D, R>& problem() const { return *problem_; }
  const Discretization& disc() const { return *disc_; }
  const LevelSets<D>& levels() const { return *levels_; }
  int n_steps() const { return levels_->n_steps(); }
  std::size_t level_size(int k) const { return (*levels_)[k].size(); }

  const std::vector<double>& values(int k) const { return values_[k]; }
  // f(t_k, x, M_k) on S_k, k < N_t.
  const std::vector<double>& running_coupling(int k) const {
    return coupling_[k];
  }

  // Fills `s` with the admissible targets of node x at step k, their costs
  // and Gibbs probabilities. Requires V_{k+1}.
  void evaluate_row(int k, NodeId x, RowScratch<D, R>& s) const {
    constexpr int M = D - R;
    const Discretization& disc = *disc_;
    const LevelSet<D>& next = (*levels_)[k + 1];
    const std::vector<double>& v_next = values_[k + 1];
    const NodeStep<D, R> step(problem_->dynamics, disc, k,
                              (*levels_)[k].node(x));
    const double t = disc.t(k);
    const double f = coupling_[k][x];
    const auto& ell0 = problem_->cost.ell0;
    s.clear();
    step.for_each_target([&](const Index<R>& y1, const Vec<R>& alpha) {
      const Q1Stencil<M> st = q1_weights<M>(step.image(alpha), disc.dx);
      std::array<NodeId, RowScratch<D, R>::kCorners> ids{};
      std::array<double, RowScratch<D, R>::kCorners> ws{};
      double interp = 0.0;
      for (int c = 0; c < st.count; ++c) {
        const NodeId id = next.find(join<D, R>(y1, st.corners[c]));
        if (id == kNoNode) {
          throw InternalError(
              "interpolation corner outside S_{k+1}: level-set closure broken");
        }
        ids[c] = id;
        ws[c] = st.weights[c];
        interp += st.weights[c] * v_next[id];
      }
      const double cost = disc.dt * (ell0(t, alpha, step.x()) + f) + interp;
      s.targets.push_back(y1);
      s.controls.push_back(alpha);
      s.costs.push_back(cost);
      s.corner_ids.push_back(ids);
      s.corner_weights.push_back(ws);
      s.corner_counts.push_back(st.count);
    });
    if (s.costs.empty()) {
      throw InternalError("empty reachable control set during backward sweep");
    }
    s.probs.resize(s.costs.size());
    s.value = gibbs_step(std::span<const double>(s.costs), disc.epsilon,
                         std::span<double>(s.probs));
  }

  // p_k(x, .) over reachable_controls(k, x) in lexicographic order.
  std::vector<double> policy(int k, NodeId x) const {
    RowScratch<D, R> s;
    evaluate_row(k, x, s);
    return s.probs;
  }

  // Kernel row P_k(x, .): entries in increasing target id.
  void row(int k, NodeId x, std::vector<KernelEntry>& out) const {
    thread_local RowScratch<D, R> s;
    evaluate_row(k, x, s);
    append_row(s, out);
  }

  static void append_row(const RowScratch<D, R>& s,
                         std::vector<KernelEntry>& out) {
    out.clear();
    for (std::size_t j = 0; j < s.costs.size(); ++j) {
      for (int c = 0; c < s.corner_counts[j]; ++c) {
        out.push_back({s.corner_ids[j][c], s.probs[j] * s.corner_weights[j][c]});
      }
    }
  }

  // Mutable access for the sweep that fills the tables.
  std::vector<double>& values_mut(int k) { return values_[k]; }
  std::vector<double>& coupling_mut(int k) { return coupling_[k]; }

 private:
  const ProblemSpec<D, R>* problem_;
  const Discretization* disc_;
  const LevelSets<D>* levels_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<double>> coupling_;
};

template <int D, int R>
ValuePolicy<D, R> backward_sweep(const ProblemSpec<D, R>& problem,
                                 const Discretization& disc,
                                 const LevelSets<D>& levels, const Flow& flow,
                                 int threads = 1) {
  const int n = levels.n_steps();
  if (flow.n_steps() != n) {
    throw UsageError("flow and level sets disagree on the number of steps");
  }
  for (int k = 0; k <= n; ++k) {
    if (flow[k].size() != levels[k].size()) {
      throw UsageError("flow marginal does not live on its level set");
    }
  }
  ValuePolicy<D, R> vp(problem, disc, levels);
  for (int k = 0; k <= n; ++k) {
    const std::vector<Vec<D>> xs = levels[k].coordinates(disc.dx);
    DiscreteMeasure<D> mu;
    mu.atoms = xs;
    mu.weights = flow[k];
    if (k < n) {
      vp.coupling_mut(k) = problem.cost.coupling(disc.t(k), mu, xs);
    } else {
      vp.values_mut(k) = problem.cost.terminal(disc.horizon, mu, xs);
    }
  }
  for (int k = n - 1; k >= 0; --k) {
    std::vector<double>& vk = vp.values_mut(k);
    vk.assign(levels[k].size(), 0.0);
    parallel_for(levels[k].size(), threads,
                 [&](std::size_t b, std::size_t e, int) {
                   RowScratch<D, R> s;
                   for (std::size_t i = b; i < e; ++i) {
                     vp.evaluate_row(k, static_cast<NodeId>(i), s);
                     if (!std::isfinite(s.value)) {
                       throw NumericError("value function overflow");
                     }
                     vk[i] = s.value;
                   }
                 });
  }
  return vp;
}

// Sparse row-stochastic matrices P_k: rows indexed by S_k, columns by
// S_{k+1}. Suitable when the total number of entries fits in memory.
struct TransitionKernel {
  struct Step {
    std::vector<std::size_t> row_ptr;  // size |S_k| + 1
    std::vector<NodeId> cols;
    std::vector<double> probs;
  };
  std::vector<Step> steps;
  std::vector<std::size_t> level_sizes;  // |S_0| .. |S_{N_t}|

  int n_steps() const { return static_cast<int>(steps.size()); }
  std::size_t level_size(int k) const { return level_sizes[k]; }
  void row(int k, NodeId x, std::vector<KernelEntry>& out) const {
    const Step& s = steps[k];
    out.clear();
    for (std::size_t j = s.row_ptr[x]; j < s.row_ptr[x + 1]; ++j) {
      out.push_back({s.cols[j], s.probs[j]});
    }
  }
  std::size_t nonzeros() const {
    std::size_t n = 0;
    for (const auto& s : steps) n += s.cols.size();
    return n;
  }
};

template <int D, int R>
TransitionKernel assemble_kernel(const ValuePolicy<D, R>& vp) {
  TransitionKernel ker;
  ker.steps.resize(vp.n_steps());
  for (int k = 0; k <= vp.n_steps(); ++k) ker.level_sizes.push_back(vp.level_size(k));
  std::vector<KernelEntry> row;
  RowScratch<D, R> s;
  for (int k = 0; k < vp.n_steps(); ++k) {
    auto& st = ker.steps[k];
    st.row_ptr.assign(1, 0);
    for (std::size_t x = 0; x < vp.level_size(k); ++x) {
      vp.evaluate_row(k, static_cast<NodeId>(x), s);
      ValuePolicy<D, R>::append_row(s, row);
      for (const auto& e : row) {
        st.cols.push_back(e.target);
        st.probs.push_back(e.prob);
      }
      st.row_ptr.push_back(st.cols.size());
    }
  }
  return ker;
}

// Largest Gibbs mass, over all (k, x), placed on targets whose control has
// |alpha|_inf >= 0.95 C. Values near one mean the control bound truncates
// the optimizer.
template <int D, int R>
double saturation_report(const ValuePolicy<D, R>& vp, int threads = 1) {
  const double edge = 0.95 * vp.disc().control_bound;
  double worst = 0.0;
  for (int k = 0; k < vp.n_steps(); ++k) {
    std::vector<double> local(vp.level_size(k), 0.0);
    parallel_for(vp.level_size(k), threads,
                 [&](std::size_t b, std::size_t e, int) {
                   RowScratch<D, R> s;
                   for (std::size_t i = b; i < e; ++i) {
                     vp.evaluate_row(k, static_cast<NodeId>(i), s);
                     double m = 0.0;
                     for (std::size_t j = 0; j < s.probs.size(); ++j) {
                       if (norm_inf<R>(s.controls[j]) >= edge) m += s.probs[j];
                     }
                     local[i] = m;
                   }
                 });
    for (double m : local) worst = std::max(worst, m);
  }
  return worst;
}

// CSV: k, x0.., value.
template <int D, int R>
void write_values_csv(std::ostream& os, const ValuePolicy<D, R>& vp) {
  os << "k";
  for (int i = 0; i < D; ++i) os << ",x" << i;
  os << ",value\n";
  char buf[64];
  const double dx = vp.disc().dx;
  for (int k = 0; k <= vp.n_steps(); ++k) {
    const auto& level = vp.levels()[k];
    for (std::size_t i = 0; i < level.size(); ++i) {
      os << k;
      for (int a = 0; a < D; ++a) {
        std::snprintf(buf, sizeof buf, ",%.17g",
                      static_cast<double>(level.node(static_cast<NodeId>(i))[a]) * dx);
        os << buf;
      }
      std::snprintf(buf, sizeof buf, ",%.17g\n", vp.values(k)[i]);
      os << buf;
    }
  }
}

// CSV triplets: k, source id, target id, probability. Node ids refer to the
// lexicographic order of S_k and S_{k+1}.
inline void write_kernel_csv(std::ostream& os, const TransitionKernel& ker) {
  os << "k,source,target,probability\n";
  char buf[64];
  for (int k = 0; k < ker.n_steps(); ++k) {
    const auto& s = ker.steps[k];
    for (std::size_t x = 0; x + 1 < s.row_ptr.size(); ++x) {
      for (std::size_t j = s.row_ptr[x]; j < s.row_ptr[x + 1]; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", s.probs[j]);
        os << k << ',' << x << ',' << s.cols[j] << ',' << buf << '\n';
      }
    }
  }
}

// Inverse of write_kernel_csv. `level_sizes` fixes the shape; rows must
// appear grouped by (k, source) in increasing order.
inline TransitionKernel read_kernel_csv(std::istream& is,
                                        std::vector<std::size_t> level_sizes) {
  TransitionKernel ker;
  ker.level_sizes = std::move(level_sizes);
  const int n = static_cast<int>(ker.level_sizes.size()) - 1;
  if (n < 1) throw UsageError("kernel needs at least two levels");
  ker.steps.resize(n);
  std::string line;
  if (!std::getline(is, line) || line != "k,source,target,probability") {
    throw UsageError("kernel CSV: unexpected header");
  }
  int cur_k = 0;
  std::size_t cur_x = 0;
  for (auto& st : ker.steps) st.row_ptr.assign(1, 0);
  auto close_rows = [&](int k, std::size_t upto) {
    auto& st = ker.steps[k];
    while (st.row_ptr.size() < upto + 1) st.row_ptr.push_back(st.cols.size());
  };
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    int k = 0;
    long long src = 0, dst = 0;
    double p = 0.0;
    if (std::sscanf(line.c_str(), "%d,%lld,%lld,%lf", &k, &src, &dst, &p) != 4 ||
        k < 0 || k >= n || src < 0 ||
        static_cast<std::size_t>(src) >= ker.level_sizes[k] || dst < 0 ||
        static_cast<std::size_t>(dst) >= ker.level_sizes[k + 1]) {
      throw UsageError("kernel CSV: bad row at line " + std::to_string(lineno));
    }
    const auto x = static_cast<std::size_t>(src);
    if (k < cur_k || (k == cur_k && x < cur_x)) {
      throw UsageError("kernel CSV: rows out of order at line " + std::to_string(lineno));
    }
    while (cur_k < k) {
      close_rows(cur_k, ker.level_sizes[cur_k]);
      ++cur_k;
    }
    close_rows(k, x);
    cur_x = x;
    ker.steps[k].cols.push_back(static_cast<NodeId>(dst));
    ker.steps[k].probs.push_back(p);
  }
  for (int k = cur_k; k < n; ++k) close_rows(k, ker.level_sizes[k]);
  return ker;
}

// ---------------------------------------------------------------------------
// Semi-discrete oracle: time-discrete dynamic programming with a continuous
// state, evaluated on a dense auxiliary grid with multilinear interpolation
// and a finite control grid standing in for the ball of radius C. Meant for
// tiny reference problems only.

template <int D, int R>
class SemidiscreteOracle {
 public:
  using FlowFn = std::function<DiscreteMeasure<D>(double)>;

  static constexpr int kMaxSteps = 30;
  static constexpr std::size_t kMaxControls = 4001;

  SemidiscreteOracle(const ProblemSpec<D, R>& problem, int n_t,
                     std::vector<Vec<R>> control_grid, const FlowFn& flow,
                     const Box<D>& aux_box, int points_per_axis)
      : box_(aux_box), points_(points_per_axis) {
    static_assert(D <= 2, "semi-discrete oracle is limited to d <= 2");
    if (n_t < 1 || n_t > kMaxSteps) {
      throw UsageError("semi-discrete oracle: n_t must be in [1, 30]");
    }
    if (control_grid.empty() || control_grid.size() > kMaxControls) {
      throw UsageError("semi-discrete oracle: control grid size must be in [1, 4001]");
    }
    const int max_points = D == 1 ? 20001 : 1001;
    if (points_per_axis < 2 || points_per_axis > max_points) {
      throw UsageError("semi-discrete oracle: auxiliary grid too large");
    }
    std::size_t total = 1;
    for (int i = 0; i < D; ++i) {
      h_[i] = (box_.hi[i] - box_.lo[i]) / (points_ - 1);
      total *= static_cast<std::size_t>(points_);
    }
    std::vector<Vec<D>> xs(total);
    for (std::size_t p = 0; p < total; ++p) xs[p] = grid_point(p);

    const double dt = problem.horizon / n_t;
    v_ = problem.cost.terminal(problem.horizon, flow(problem.horizon), xs);
    std::vector<double> next(total);
    for (int k = n_t - 1; k >= 0; --k) {
      const double t = k * dt;
      const std::vector<double> f = problem.cost.coupling(t, flow(t), xs);
      for (std::size_t p = 0; p < total; ++p) {
        const Vec<D>& x = xs[p];
        const auto local = evaluate_dynamics(problem.dynamics, t, x);
        double best = std::numeric_limits<double>::infinity();
        for (const Vec<R>& a : control_grid) {
          Vec<D> y{};
          const Vec<R> b1a = mat_vec<R, R>(local.b1, a);
          for (int i = 0; i < R; ++i) y[i] = x[i] + dt * (local.a1[i] + b1a[i]);
          if constexpr (D > R) {
            const Vec<D - R> b2a = mat_vec<D - R, R>(local.b2, a);
            for (int i = 0; i < D - R; ++i) {
              y[R + i] = x[R + i] + dt * (local.a2[i] + b2a[i]);
            }
          }
          const double c =
              dt * (problem.cost.ell0(t, a, x) + f[p]) + interpolate_grid(v_, y);
          best = std::min(best, c);
        }
        next[p] = best;
      }
      v_.swap(next);
    }
  }

  // v_0(x) by multilinear interpolation on the auxiliary grid.
  double value(const Vec<D>& x) const { return interpolate_grid(v_, x); }

 private:
  Vec<D> grid_point(std::size_t p) const {
    Vec<D> x{};
    for (int i = D - 1; i >= 0; --i) {
      x[i] = box_.lo[i] + h_[i] * static_cast<double>(p % points_);
      p /= points_;
    }
    return x;
  }

  // Clamped to the grid box.
  double interpolate_grid(const std::vector<double>& v, const Vec<D>& y) const {
    std::array<std::size_t, D> base{};
    std::array<double, D> frac{};
    for (int i = 0; i < D; ++i) {
      double u = (y[i] - box_.lo[i]) / h_[i];
      u = std::clamp(u, 0.0, static_cast<double>(points_ - 1));
      std::size_t b = static_cast<std::size_t>(std::floor(u));
      if (b >= static_cast<std::size_t>(points_ - 1)) b = points_ - 2;
      base[i] = b;
      frac[i] = u - static_cast<double>(b);
    }
    double s = 0.0;
    for (int c = 0; c < (1 << D); ++c) {
      std::size_t off = 0;
      double w = 1.0;
      for (int i = 0; i < D; ++i) {
        const int bit = (c >> i) & 1;
        off = off * points_ + base[i] + bit;
        w *= bit ? frac[i] : 1.0 - frac[i];
      }
      s += w * v[off];
    }
    return s;
  }

  Box<D> box_;
  int points_;
  Vec<D> h_{};
  std::vector<double> v_;
};

template <int D, int R>
double semidiscrete_value(const ProblemSpec<D, R>& problem,
                          const typename SemidiscreteOracle<D, R>::FlowFn& flow,
                          const std::type_identity_t<Vec<D>>& x0, int n_t,
                          std::type_identity_t<std::vector<Vec<R>>> control_grid,
                          const std::type_identity_t<Box<D>>& aux_box,
                          int points_per_axis) {
  SemidiscreteOracle<D, R> oracle(problem, n_t, std::move(control_grid), flow,
                                  aux_box, points_per_axis);
  return oracle.value(x0);
}

}  // namespace slmfg
