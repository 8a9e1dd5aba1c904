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

// Uniform lattice dx * Z^d, multilinear (Q1) interpolation on the passive
// block of coordinates, and the time-indexed reachable level sets S_k.
//
// A state x = (x1, x2) splits into the r control-row coordinates x1 and the
// d - r passive coordinates x2. From a node x at step k, a lattice target y1
// fixes the control through B1^{-1}[(y1 - x1)/dt - A1]; the passive block then
// lands at the off-lattice point y2 = x2 + dt (A2 + B2 alpha), which is spread
// over the corners of its cell with Q1 weights.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>
#include <type_traits>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

// Relative slack on the control-bound filter. Lattice targets whose control
// sits on the bound up to rounding count as admissible.
inline constexpr double kBoundSlack = 1e-12;

// Fractional lattice coordinates within this distance of an integer snap to
// it, so a node-aligned image yields a single corner.
inline constexpr double kSnapTolerance = 1e-9;

// ---------------------------------------------------------------------------
// Q1 stencils.

template <int M>
struct Q1Stencil {
  static constexpr int kMaxCorners = 1 << M;
  std::array<Index<M>, kMaxCorners> corners{};
  std::array<double, kMaxCorners> weights{};
  int count = 0;
};

// Multilinear hat-function weights of the cell containing z (coordinates).
// Only corners with strictly positive weight are returned; a coordinate that
// lies on a grid line contributes a single node along that axis.
template <int M>
Q1Stencil<M> q1_weights(const Vec<M>& z, double dx) {
  Q1Stencil<M> st;
  if constexpr (M == 0) {
    st.count = 1;
    st.weights[0] = 1.0;
    return st;
  } else {
    std::array<std::int64_t, M> base{};
    std::array<double, M> frac{};
    std::array<int, M> span{};
    for (int i = 0; i < M; ++i) {
      const double u = z[i] / dx;
      const double r = std::round(u);
      if (std::abs(u - r) <= kSnapTolerance) {
        base[i] = static_cast<std::int64_t>(r);
        frac[i] = 0.0;
        span[i] = 1;
      } else {
        const double f = std::floor(u);
        base[i] = static_cast<std::int64_t>(f);
        frac[i] = u - f;
        span[i] = 2;
      }
    }
    std::array<int, M> it{};
    while (true) {
      Index<M> c{};
      double w = 1.0;
      for (int i = 0; i < M; ++i) {
        c[i] = base[i] + it[i];
        if (span[i] == 2) w *= it[i] ? frac[i] : 1.0 - frac[i];
      }
      st.corners[st.count] = c;
      st.weights[st.count] = w;
      ++st.count;
      int ax = M - 1;
      while (ax >= 0 && ++it[ax] == span[ax]) it[ax--] = 0;
      if (ax < 0) break;
    }
    return st;
  }
}

// Sum of beta_{x2}(z) phi(x2) over the stencil of z. `lookup(corner)` returns
// a pointer to the stored value or nullptr; a missing corner is an internal
// error because level-set closure guarantees every corner exists.
template <int M, class Lookup>
double interpolate(const Lookup& lookup, const Vec<M>& z, double dx) {
  const Q1Stencil<M> st = q1_weights<M>(z, dx);
  double s = 0.0;
  for (int c = 0; c < st.count; ++c) {
    const double* v = lookup(st.corners[c]);
    if (v == nullptr) {
      throw InternalError("interpolation corner missing from the value field");
    }
    s += st.weights[c] * *v;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Per-node step geometry.

// Everything about one node x at step k that does not depend on the flow:
// the control map, the passive image, and the admissible lattice targets.
template <int D, int R>
class NodeStep {
 public:
  NodeStep(const SplitDynamics<D, R>& dyn, const Discretization& disc, int k,
           const Index<D>& x)
      : disc_(&disc), k_(k), idx_(x), x_(coords<D>(x, disc.dx)) {
    local_ = evaluate_dynamics(dyn, disc.t(k), x_, disc.det_floor);
  }

  int k() const { return k_; }
  const Index<D>& index() const { return idx_; }
  const Vec<D>& x() const { return x_; }
  const LocalDynamics<D, R>& local() const { return local_; }

  // alpha(k, x, y1) = B1^{-1} [(y1 - x1)/dt - A1].
  Vec<R> control(const Index<R>& y1) const {
    Vec<R> rhs{};
    for (int i = 0; i < R; ++i) {
      const double disp = static_cast<double>(y1[i] - idx_[i]) * disc_->dx;
      rhs[i] = disp / disc_->dt - local_.a1[i];
    }
    return mat_vec<R, R>(local_.b1_inv, rhs);
  }

  // y2(k, x, y1) = x2 + dt [A2 + B2 alpha]; empty when d == r.
  Vec<D - R> image(const Vec<R>& alpha) const {
    Vec<D - R> y{};
    if constexpr (D > R) {
      const Vec<D - R> b2a = mat_vec<D - R, R>(local_.b2, alpha);
      for (int i = 0; i < D - R; ++i) {
        y[i] = x_[R + i] + disc_->dt * (local_.a2[i] + b2a[i]);
      }
    }
    return y;
  }

  bool admissible(const Vec<R>& alpha) const {
    return norm_inf<R>(alpha) <=
           disc_->control_bound * (1.0 + kBoundSlack);
  }

  // Enumeration box x1 + dt A1 + dt |B1| C [-1, 1]^r in lattice units.
  void candidate_box(Index<R>& lo, Index<R>& hi) const {
    const double w_scale = disc_->dt * disc_->control_bound / disc_->dx;
    for (int i = 0; i < R; ++i) {
      double row = 0.0;
      for (int j = 0; j < R; ++j) row += std::abs(local_.b1[i * R + j]);
      const double centre = static_cast<double>(idx_[i]) +
                            disc_->dt * local_.a1[i] / disc_->dx;
      const double half = w_scale * row * (1.0 + kBoundSlack) + kSnapTolerance;
      lo[i] = static_cast<std::int64_t>(std::ceil(centre - half));
      hi[i] = static_cast<std::int64_t>(std::floor(centre + half));
    }
  }

  // Calls f(y1, alpha) for each admissible target in lexicographic order.
  template <class F>
  void for_each_target(F&& f) const {
    Index<R> lo{}, hi{};
    candidate_box(lo, hi);
    for (int i = 0; i < R; ++i) {
      if (hi[i] < lo[i]) return;
    }
    Index<R> y = lo;
    while (true) {
      const Vec<R> alpha = control(y);
      if (admissible(alpha)) f(static_cast<const Index<R>&>(y), alpha);
      int ax = R - 1;
      while (ax >= 0 && ++y[ax] > hi[ax]) {
        y[ax] = lo[ax];
        --ax;
      }
      if (ax < 0) break;
    }
  }

 private:
  const Discretization* disc_;
  int k_;
  Index<D> idx_;
  Vec<D> x_;
  LocalDynamics<D, R> local_;
};

template <int D, int R>
Vec<R> control_for_target(const ProblemSpec<D, R>& problem,
                          const Discretization& disc, int k,
                          const std::type_identity_t<Index<D>>& x,
                          const std::type_identity_t<Index<R>>& y1) {
  return NodeStep<D, R>(problem.dynamics, disc, k, x).control(y1);
}

template <int D, int R>
Vec<D - R> image_y2(const ProblemSpec<D, R>& problem,
                    const Discretization& disc, int k,
                    const std::type_identity_t<Index<D>>& x,
                    const std::type_identity_t<Index<R>>& y1) {
  NodeStep<D, R> step(problem.dynamics, disc, k, x);
  return step.image(step.control(y1));
}

// S^1_{k+1}(x): lattice targets y1 with |alpha(k, x, y1)|_inf <= C.
template <int D, int R>
std::vector<Index<R>> reachable_controls(const ProblemSpec<D, R>& problem,
                                         const Discretization& disc, int k,
                                         const std::type_identity_t<Index<D>>& x) {
  std::vector<Index<R>> out;
  NodeStep<D, R>(problem.dynamics, disc, k, x)
      .for_each_target([&](const Index<R>& y1, const Vec<R>&) {
        out.push_back(y1);
      });
  if (out.empty() && in_delta_hat(disc, disc.c_k_estimate)) {
    throw InternalError(
        "empty reachable control set under an admissible discretization");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Level sets.

// A finite lattice set with nodes in lexicographic order and O(1) lookup
// through a dense id table over the bounding box.
template <int D>
class LevelSet {
 public:
  LevelSet() = default;

  // `mask` is row-major over the box [lo, lo + extent) with the last axis
  // fastest; nonzero entries are members.
  static LevelSet from_mask(const Index<D>& lo, const Index<D>& extent,
                            const std::vector<std::uint8_t>& mask) {
    LevelSet s;
    s.lo_ = lo;
    s.ext_ = extent;
    s.init_strides();
    s.slot_.assign(mask.size(), kNoNode);
    Index<D> it{};
    for (std::size_t off = 0; off < mask.size(); ++off) {
      if (mask[off]) {
        if (s.nodes_.size() >=
            static_cast<std::size_t>(std::numeric_limits<NodeId>::max())) {
          throw ConfigError("level set exceeds the node id range");
        }
        s.slot_[off] = static_cast<NodeId>(s.nodes_.size());
        Index<D> idx{};
        for (int i = 0; i < D; ++i) idx[i] = lo[i] + it[i];
        s.nodes_.push_back(idx);
      }
      int ax = D - 1;
      while (ax >= 0 && ++it[ax] == extent[ax]) it[ax--] = 0;
    }
    return s;
  }

  static LevelSet from_nodes(std::vector<Index<D>> nodes) {
    if (nodes.empty()) return LevelSet{};
    Index<D> lo = nodes.front(), hi = nodes.front();
    for (const auto& n : nodes) {
      for (int i = 0; i < D; ++i) {
        lo[i] = std::min(lo[i], n[i]);
        hi[i] = std::max(hi[i], n[i]);
      }
    }
    Index<D> ext{};
    std::size_t vol = 1;
    for (int i = 0; i < D; ++i) {
      ext[i] = hi[i] - lo[i] + 1;
      vol *= static_cast<std::size_t>(ext[i]);
    }
    std::vector<std::uint8_t> mask(vol, 0);
    LevelSet probe;
    probe.lo_ = lo;
    probe.ext_ = ext;
    probe.init_strides();
    for (const auto& n : nodes) mask[probe.offset(n)] = 1;
    return from_mask(lo, ext, mask);
  }

  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<Index<D>>& nodes() const { return nodes_; }
  const Index<D>& node(NodeId id) const { return nodes_[id]; }

  NodeId find(const Index<D>& idx) const {
    if (nodes_.empty()) return kNoNode;
    std::int64_t off = 0;
    for (int i = 0; i < D; ++i) {
      const std::int64_t r = idx[i] - lo_[i];
      if (r < 0 || r >= ext_[i]) return kNoNode;
      off += r * stride_[i];
    }
    return slot_[static_cast<std::size_t>(off)];
  }

  bool contains(const Index<D>& idx) const { return find(idx) != kNoNode; }

  std::vector<Vec<D>> coordinates(double dx) const {
    std::vector<Vec<D>> out;
    out.reserve(nodes_.size());
    for (const auto& n : nodes_) out.push_back(coords<D>(n, dx));
    return out;
  }

  friend bool operator==(const LevelSet& a, const LevelSet& b) {
    return a.nodes_ == b.nodes_;
  }

 private:
  void init_strides() {
    std::int64_t s = 1;
    for (int i = D - 1; i >= 0; --i) {
      stride_[i] = s;
      s *= ext_[i];
    }
  }
  std::size_t offset(const Index<D>& idx) const {
    std::int64_t off = 0;
    for (int i = 0; i < D; ++i) off += (idx[i] - lo_[i]) * stride_[i];
    return static_cast<std::size_t>(off);
  }

  std::vector<Index<D>> nodes_;
  Index<D> lo_{};
  Index<D> ext_{};
  Index<D> stride_{};
  std::vector<NodeId> slot_;
};

template <int D>
struct LevelSets {
  std::vector<LevelSet<D>> sets;  // S_0 .. S_{N_t}
  double bounding_radius = 0.0;   // max |x|_inf over all nodes
  double dx = 1.0;

  int n_steps() const { return static_cast<int>(sets.size()) - 1; }
  const LevelSet<D>& operator[](int k) const { return sets[k]; }
  std::size_t total_nodes() const {
    std::size_t n = 0;
    for (const auto& s : sets) n += s.size();
    return n;
  }
};

// Lattice nodes whose closed cell E(x) (max-norm radius dx/2) overlaps the
// box with positive volume.
template <int D>
LevelSet<D> initial_level(const Box<D>& support, double dx) {
  Index<D> lo{}, ext{};
  std::size_t vol = 1;
  for (int i = 0; i < D; ++i) {
    auto snap = [](double v) {
      const double r = std::round(v);
      return std::abs(v - r) <= kSnapTolerance ? r : v;
    };
    // x_i + dx/2 > lo  and  x_i - dx/2 < hi.
    const double a = snap(support.lo[i] / dx - 0.5);
    const double b = snap(support.hi[i] / dx + 0.5);
    const auto first = static_cast<std::int64_t>(std::floor(a)) + 1;
    const auto last = static_cast<std::int64_t>(std::ceil(b)) - 1;
    if (last < first) throw CoverageError("initial support box is degenerate");
    lo[i] = first;
    ext[i] = last - first + 1;
    vol *= static_cast<std::size_t>(ext[i]);
  }
  return LevelSet<D>::from_mask(lo, ext, std::vector<std::uint8_t>(vol, 1));
}

// S_{k+1} = union over x in S_k of S_{k+1}(x).
template <int D, int R>
LevelSet<D> next_level(const ProblemSpec<D, R>& problem,
                       const Discretization& disc, int k,
                       const LevelSet<D>& current) {
  constexpr int M = D - R;
  // Conservative bounding box: alpha and y2 are affine in y1, so the image
  // extremes sit on the corners of each node's enumeration box.
  Index<D> lo, hi;
  lo.fill(std::numeric_limits<std::int64_t>::max());
  hi.fill(std::numeric_limits<std::int64_t>::min());
  for (const auto& idx : current.nodes()) {
    NodeStep<D, R> step(problem.dynamics, disc, k, idx);
    Index<R> blo{}, bhi{};
    step.candidate_box(blo, bhi);
    bool any = true;
    for (int i = 0; i < R; ++i) any = any && bhi[i] >= blo[i];
    if (!any) {
      throw InternalError(
          "empty reachable control set while building level sets");
    }
    for (int i = 0; i < R; ++i) {
      lo[i] = std::min(lo[i], blo[i]);
      hi[i] = std::max(hi[i], bhi[i]);
    }
    if constexpr (M > 0) {
      for (int c = 0; c < (1 << R); ++c) {
        Index<R> y{};
        for (int i = 0; i < R; ++i) y[i] = (c >> i) & 1 ? bhi[i] : blo[i];
        const Vec<M> z = step.image(step.control(y));
        for (int i = 0; i < M; ++i) {
          const double u = z[i] / disc.dx;
          lo[R + i] = std::min(lo[R + i],
                               static_cast<std::int64_t>(std::floor(u)) - 1);
          hi[R + i] = std::max(hi[R + i],
                               static_cast<std::int64_t>(std::ceil(u)) + 1);
        }
      }
    }
  }
  Index<D> ext{};
  double vol_d = 1.0;
  for (int i = 0; i < D; ++i) {
    ext[i] = hi[i] - lo[i] + 1;
    vol_d *= static_cast<double>(ext[i]);
  }
  if (vol_d > 64.0 * static_cast<double>(disc.max_level_nodes) + 1e6) {
    std::ostringstream msg;
    msg << "level set S_" << (k + 1) << " bounding box holds " << vol_d
        << " lattice points, beyond the configured cap";
    throw ConfigError(msg.str());
  }
  Index<D> stride{};
  {
    std::int64_t s = 1;
    for (int i = D - 1; i >= 0; --i) {
      stride[i] = s;
      s *= ext[i];
    }
  }
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(vol_d), 0);
  for (const auto& idx : current.nodes()) {
    NodeStep<D, R> step(problem.dynamics, disc, k, idx);
    bool any = false;
    step.for_each_target([&](const Index<R>& y1, const Vec<R>& alpha) {
      any = true;
      std::int64_t base = 0;
      for (int i = 0; i < R; ++i) base += (y1[i] - lo[i]) * stride[i];
      const Q1Stencil<M> st = q1_weights<M>(step.image(alpha), disc.dx);
      for (int c = 0; c < st.count; ++c) {
        std::int64_t off = base;
        for (int i = 0; i < M; ++i) {
          off += (st.corners[c][i] - lo[R + i]) * stride[R + i];
        }
        mask[static_cast<std::size_t>(off)] = 1;
      }
    });
    if (!any) {
      throw InternalError(
          "empty reachable control set while building level sets");
    }
  }
  LevelSet<D> next = LevelSet<D>::from_mask(lo, ext, mask);
  if (next.size() > disc.max_level_nodes) {
    std::ostringstream msg;
    msg << "level set S_" << (k + 1) << " has " << next.size()
        << " nodes, above max_level_nodes = " << disc.max_level_nodes;
    throw ConfigError(msg.str());
  }
  return next;
}

template <int D, int R>
LevelSets<D> build_level_sets(const ProblemSpec<D, R>& problem,
                              const Discretization& disc) {
  LevelSets<D> out;
  out.dx = disc.dx;
  out.sets.reserve(disc.n_t + 1);
  out.sets.push_back(initial_level<D>(problem.m0.support_box, disc.dx));
  for (int k = 0; k < disc.n_t; ++k) {
    out.sets.push_back(next_level(problem, disc, k, out.sets.back()));
  }
  double radius = 0.0;
  for (const auto& s : out.sets) {
    for (const auto& n : s.nodes()) {
      for (int i = 0; i < D; ++i) {
        radius = std::max(radius,
                          std::abs(static_cast<double>(n[i]) * disc.dx));
      }
    }
  }
  out.bounding_radius = radius;
  return out;
}

// Cheap bounding-box forecast of |S_k| without building the sets: the hull
// of each level is pushed through the step map sampled on its boundary and a
// coarse interior grid. Exact for intervals in one dimension when the
// reachable map is monotone; an upper-leaning estimate otherwise.
template <int D, int R>
std::vector<double> forecast_level_sizes(const ProblemSpec<D, R>& problem,
                                         const Discretization& disc,
                                         int samples_per_axis = 65) {
  constexpr int M = D - R;
  LevelSet<D> s0 = initial_level<D>(problem.m0.support_box, disc.dx);
  Index<D> lo = s0.nodes().front(), hi = s0.nodes().back();
  std::vector<double> sizes;
  auto volume = [&] {
    double v = 1.0;
    for (int i = 0; i < D; ++i) v *= static_cast<double>(hi[i] - lo[i] + 1);
    return v;
  };
  sizes.push_back(volume());
  for (int k = 0; k < disc.n_t; ++k) {
    Index<D> nlo, nhi;
    nlo.fill(std::numeric_limits<std::int64_t>::max());
    nhi.fill(std::numeric_limits<std::int64_t>::min());
    std::array<int, D> it{};
    std::array<int, D> count{};
    for (int i = 0; i < D; ++i) {
      count[i] = static_cast<int>(
          std::min<std::int64_t>(samples_per_axis, hi[i] - lo[i] + 1));
    }
    while (true) {
      Index<D> x{};
      for (int i = 0; i < D; ++i) {
        x[i] = count[i] == 1 ? lo[i]
                             : lo[i] + (hi[i] - lo[i]) * it[i] / (count[i] - 1);
      }
      NodeStep<D, R> step(problem.dynamics, disc, k, x);
      Index<R> blo{}, bhi{};
      step.candidate_box(blo, bhi);
      for (int c = 0; c < (1 << R); ++c) {
        Index<R> y{};
        for (int i = 0; i < R; ++i) y[i] = (c >> i) & 1 ? bhi[i] : blo[i];
        for (int i = 0; i < R; ++i) {
          nlo[i] = std::min(nlo[i], y[i]);
          nhi[i] = std::max(nhi[i], y[i]);
        }
        if constexpr (M > 0) {
          const Vec<M> z = step.image(step.control(y));
          const Q1Stencil<M> st = q1_weights<M>(z, disc.dx);
          for (int q = 0; q < st.count; ++q) {
            for (int i = 0; i < M; ++i) {
              nlo[R + i] = std::min(nlo[R + i], st.corners[q][i]);
              nhi[R + i] = std::max(nhi[R + i], st.corners[q][i]);
            }
          }
        }
      }
      int ax = D - 1;
      while (ax >= 0 && ++it[ax] == count[ax]) it[ax--] = 0;
      if (ax < 0) break;
    }
    lo = nlo;
    hi = nhi;
    sizes.push_back(volume());
  }
  return sizes;
}

// CSV: k, i0.., x0.. (one row per node).
template <int D>
void write_level_sets_csv(std::ostream& os, const LevelSets<D>& ls) {
  os << "k";
  for (int i = 0; i < D; ++i) os << ",i" << i;
  for (int i = 0; i < D; ++i) os << ",x" << i;
  os << "\n";
  char buf[64];
  for (int k = 0; k <= ls.n_steps(); ++k) {
    for (const auto& n : ls[k].nodes()) {
      os << k;
      for (int i = 0; i < D; ++i) os << ',' << n[i];
      for (int i = 0; i < D; ++i) {
        std::snprintf(buf, sizeof buf, ",%.17g",
                      static_cast<double>(n[i]) * ls.dx);
        os << buf;
      }
      os << "\n";
    }
  }
}

}  // namespace slmfg
