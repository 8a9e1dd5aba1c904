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

// Continuous problem data (control-affine dynamics split into a control row
// block and a passive block, costs, initial measure) and the discretization
// parameters, plus the numerical checks applied before a solve.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "slmfg/core.hpp"

namespace slmfg {

// Finite atomic measure on R^D. Lattice flows are converted to this form
// before they are handed to user couplings.
template <int D>
struct DiscreteMeasure {
  std::vector<Vec<D>> atoms;
  std::vector<double> weights;

  std::size_t size() const { return atoms.size(); }
  double total() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  }
};

// Dynamics x' = A(t,x) + B(t,x) a with A = (A1, A2), B = (B1; B2), where
// B1 is the invertible r x r block acting on the first r coordinates.
template <int D, int R>
struct SplitDynamics {
  static_assert(R >= 1 && R <= D, "control dimension must satisfy 1 <= r <= d");
  static constexpr int kDim = D;
  static constexpr int kCtrl = R;

  std::function<Vec<R>(double, const Vec<D>&)> A1;
  std::function<Vec<D - R>(double, const Vec<D>&)> A2;
  std::function<Mat<R>(double, const Vec<D>&)> B1;
  std::function<MatRC<D - R, R>(double, const Vec<D>&)> B2;
};

// Dynamics evaluated at one (t, x), with B1 already inverted.
template <int D, int R>
struct LocalDynamics {
  Vec<R> a1{};
  Vec<D - R> a2{};
  Mat<R> b1{};
  Mat<R> b1_inv{};
  MatRC<D - R, R> b2{};
  double det_b1 = 0.0;
};

inline constexpr double kDefaultDetFloor = 1e-10;

template <int D, int R>
LocalDynamics<D, R> evaluate_dynamics(const SplitDynamics<D, R>& dyn, double t,
                                      const std::type_identity_t<Vec<D>>& x,
                                      double det_floor = kDefaultDetFloor) {
  LocalDynamics<D, R> out;
  out.a1 = dyn.A1(t, x);
  if constexpr (D > R) {
    out.a2 = dyn.A2 ? dyn.A2(t, x) : Vec<D - R>{};
    out.b2 = dyn.B2 ? dyn.B2(t, x) : MatRC<D - R, R>{};
  }
  out.b1 = dyn.B1(t, x);
  bool ok = invert<R>(out.b1, out.b1_inv, out.det_b1);
  if (!ok || std::abs(out.det_b1) < det_floor ||
      !std::isfinite(out.det_b1)) {
    std::ostringstream msg;
    msg << "B1 is not invertible at t=" << t << ", x=(";
    for (int i = 0; i < D; ++i) msg << (i ? "," : "") << x[i];
    msg << "): |det B1| = " << std::abs(out.det_b1) << " < " << det_floor;
    throw StructuralError(msg.str());
  }
  for (double v : out.a1) {
    if (!std::isfinite(v)) throw NumericError("A1 evaluated to a non-finite value");
  }
  return out;
}

// Batched field evaluation: returns phi(t, x, mu) for each x in xs.
template <int D>
using FieldFn = std::function<std::vector<double>(
    double t, const DiscreteMeasure<D>& mu, std::span<const Vec<D>> xs)>;

// Running cost l(t,a,x,mu) = ell0(t,a,x) + f(t,x,mu); terminal cost g(x,mu).
template <int D, int R>
struct CostSpec {
  std::function<double(double, const Vec<R>&, const Vec<D>&)> ell0;
  FieldFn<D> coupling_f;  // empty means f == 0
  FieldFn<D> terminal_g;  // called with t = horizon; empty means g == 0
  double growth_p = 2.0;  // metadata only

  std::vector<double> coupling(double t, const DiscreteMeasure<D>& mu,
                               std::span<const Vec<D>> xs) const {
    if (!coupling_f) return std::vector<double>(xs.size(), 0.0);
    return coupling_f(t, mu, xs);
  }
  std::vector<double> terminal(double t, const DiscreteMeasure<D>& mu,
                               std::span<const Vec<D>> xs) const {
    if (!terminal_g) return std::vector<double>(xs.size(), 0.0);
    return terminal_g(t, mu, xs);
  }
};

template <int D>
struct Box {
  Vec<D> lo{};
  Vec<D> hi{};

  bool contains(const Vec<D>& x) const {
    for (int i = 0; i < D; ++i) {
      if (x[i] < lo[i] || x[i] > hi[i]) return false;
    }
    return true;
  }
  Box inflated(double r) const {
    Box b = *this;
    for (int i = 0; i < D; ++i) {
      b.lo[i] -= r;
      b.hi[i] += r;
    }
    return b;
  }
};

// Absolutely continuous initial measure. The density is treated as zero
// outside support_box regardless of what the function returns there.
template <int D>
struct InitialMeasure {
  std::function<double(const Vec<D>&)> density;
  Box<D> support_box;
};

template <int D, int R>
struct ProblemSpec {
  std::string name;
  double horizon = 1.0;
  SplitDynamics<D, R> dynamics;
  CostSpec<D, R> cost;
  InitialMeasure<D> m0;
};

struct Discretization {
  int n_t = 1;
  int n_s = 1;
  double horizon = 1.0;
  double dt = 1.0;
  double dx = 1.0;
  double epsilon = 0.0;
  double control_bound = 4.0;
  double c_k_estimate = 1.0;   // filled in by inspect()/validate()
  double interp_radius = 1.0;  // C_I for the multilinear basis
  double det_floor = kDefaultDetFloor;
  // Guard against runaway level sets; counts nodes of a single S_k.
  std::size_t max_level_nodes = 20'000'000;
  // Half-width added to supp(m0) to form the box sampled for c_K. Negative
  // means horizon * control_bound.
  double working_margin = -1.0;

  double t(int k) const { return static_cast<double>(k) * dt; }
};

inline Discretization make_discretization(double horizon, int n_t, int n_s,
                                          double epsilon,
                                          double control_bound) {
  if (n_t < 1 || n_s < 1) throw ConfigError("n_t and n_s must be >= 1");
  if (!(horizon > 0.0)) throw ConfigError("horizon must be positive");
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  if (!(control_bound > 0.0)) throw ConfigError("control_bound must be > 0");
  Discretization d;
  d.n_t = n_t;
  d.n_s = n_s;
  d.horizon = horizon;
  d.dt = horizon / n_t;
  d.dx = 1.0 / n_s;
  d.epsilon = epsilon;
  d.control_bound = control_bound;
  return d;
}

// ---------------------------------------------------------------------------
// Quadrature.

namespace quad {

inline constexpr std::array<double, 5> kGl5Nodes = {
    -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
    0.9061798459386640};
inline constexpr std::array<double, 5> kGl5Weights = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
    0.4786286704993665, 0.2369268850561891};

// Tensor 5-point Gauss-Legendre over [lo, hi], `cells` subintervals per axis.
template <int D, class F>
double integrate_box(const F& f, const Vec<D>& lo, const Vec<D>& hi,
                     int cells = 1) {
  for (int i = 0; i < D; ++i) {
    if (!(hi[i] > lo[i])) return 0.0;
  }
  const int pts = 5 * cells;
  std::array<std::vector<double>, D> xs, ws;
  for (int i = 0; i < D; ++i) {
    const double h = (hi[i] - lo[i]) / cells;
    xs[i].reserve(pts);
    ws[i].reserve(pts);
    for (int c = 0; c < cells; ++c) {
      const double mid = lo[i] + (c + 0.5) * h;
      for (int q = 0; q < 5; ++q) {
        xs[i].push_back(mid + 0.5 * h * kGl5Nodes[q]);
        ws[i].push_back(0.5 * h * kGl5Weights[q]);
      }
    }
  }
  std::array<int, D> it{};
  double total = 0.0;
  while (true) {
    Vec<D> x{};
    double w = 1.0;
    for (int i = 0; i < D; ++i) {
      x[i] = xs[i][it[i]];
      w *= ws[i][it[i]];
    }
    total += w * f(x);
    int ax = D - 1;
    while (ax >= 0 && ++it[ax] == pts) it[ax--] = 0;
    if (ax < 0) break;
  }
  return total;
}

}  // namespace quad

// ---------------------------------------------------------------------------
// Validation.

struct ValidationReport {
  double dx_over_dt = 0.0;
  double admissible_ratio = 0.0;  // min(1, C / c_K)
  double max_admissible_dx = 0.0;
  double c_k_estimate = 0.0;
  double min_abs_det_b1 = 0.0;
  double m0_mass = 0.0;
  bool in_delta_hat = false;
  bool m0_normalized = false;
  std::vector<std::string> warnings;

  bool ok() const { return in_delta_hat && m0_normalized; }
};

inline constexpr double kMassTolerance = 1e-6;

// (dt, dx) membership in the admissible parameter set. Equality counts.
inline bool in_delta_hat(const Discretization& disc, double c_k) {
  const double ratio = disc.dx / disc.dt;
  const double bound = std::min(1.0, disc.control_bound / c_k);
  return ratio <= bound * (1.0 + 1e-12);
}

template <int D, int R>
Box<D> working_box(const ProblemSpec<D, R>& problem,
                   const Discretization& disc) {
  const double margin = disc.working_margin >= 0.0
                            ? disc.working_margin
                            : problem.horizon * disc.control_bound;
  return problem.m0.support_box.inflated(margin);
}

// Evaluates all checks without throwing on a failed gate. Singular B1 and a
// non-convex ell0 still throw StructuralError.
template <int D, int R>
ValidationReport inspect(const ProblemSpec<D, R>& problem,
                         const Discretization& disc) {
  ValidationReport rep;
  const Box<D> box = working_box(problem, disc);
  constexpr int kPerAxis = 32;

  double c_k = 0.0;
  double min_det = std::numeric_limits<double>::infinity();
  std::array<int, D> it{};
  while (true) {
    Vec<D> x{};
    for (int i = 0; i < D; ++i) {
      x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * it[i] / (kPerAxis - 1);
    }
    for (int k = 0; k <= disc.n_t; ++k) {
      auto local = evaluate_dynamics(problem.dynamics, disc.t(k), x,
                                     disc.det_floor);
      c_k = std::max(c_k, op_norm_inf<R, R>(local.b1_inv));
      min_det = std::min(min_det, std::abs(local.det_b1));
    }
    int ax = D - 1;
    while (ax >= 0 && ++it[ax] == kPerAxis) it[ax--] = 0;
    if (ax < 0) break;
  }
  rep.c_k_estimate = c_k;
  rep.min_abs_det_b1 = min_det;
  rep.dx_over_dt = disc.dx / disc.dt;
  rep.admissible_ratio = std::min(1.0, disc.control_bound / c_k);
  rep.max_admissible_dx = disc.dt * rep.admissible_ratio;
  rep.in_delta_hat = in_delta_hat(disc, c_k);

  const auto& m0 = problem.m0;
  rep.m0_mass = quad::integrate_box<D>(
      [&](const Vec<D>& x) { return m0.density(x); }, m0.support_box.lo,
      m0.support_box.hi, D == 1 ? 2000 : 200);
  rep.m0_normalized = std::abs(rep.m0_mass - 1.0) <= kMassTolerance;

  // Midpoint convexity of ell0 in the control on random triples.
  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int s = 0; s < 256; ++s) {
    const double t = problem.horizon * unit(rng);
    Vec<D> x{};
    for (int i = 0; i < D; ++i) {
      x[i] = box.lo[i] + (box.hi[i] - box.lo[i]) * unit(rng);
    }
    Vec<R> a{}, b{}, mid{};
    for (int i = 0; i < R; ++i) {
      a[i] = disc.control_bound * (2.0 * unit(rng) - 1.0);
      b[i] = disc.control_bound * (2.0 * unit(rng) - 1.0);
      mid[i] = 0.5 * (a[i] + b[i]);
    }
    const double fa = problem.cost.ell0(t, a, x);
    const double fb = problem.cost.ell0(t, b, x);
    const double fm = problem.cost.ell0(t, mid, x);
    const double scale = 1.0 + std::abs(fa) + std::abs(fb);
    if (fm > 0.5 * (fa + fb) + 1e-12 * scale) {
      throw StructuralError("ell0 fails midpoint convexity in the control");
    }
  }
  return rep;
}

// Throws ConfigError when the discretization is outside the admissible set or
// the initial density is not normalized; returns the report otherwise.
template <int D, int R>
ValidationReport validate(const ProblemSpec<D, R>& problem,
                          const Discretization& disc) {
  ValidationReport rep = inspect(problem, disc);
  if (!rep.in_delta_hat) {
    std::ostringstream msg;
    msg << "dx/dt = " << rep.dx_over_dt << " exceeds min(1, C/c_K) = "
        << rep.admissible_ratio << " (c_K ~ " << rep.c_k_estimate
        << "); largest admissible dx is " << rep.max_admissible_dx;
    throw ConfigError(msg.str());
  }
  if (!rep.m0_normalized) {
    std::ostringstream msg;
    msg << "initial density integrates to " << rep.m0_mass
        << " over its support box";
    throw ConfigError(msg.str());
  }
  return rep;
}

// Copy of `disc` with the sampled c_K recorded.
template <int D, int R>
Discretization validated(const ProblemSpec<D, R>& problem, Discretization disc) {
  disc.c_k_estimate = validate(problem, disc).c_k_estimate;
  return disc;
}

// sum_x (phi(x, mu) - phi(x, nu)) (mu - nu)(x) over a shared atom set.
// Non-negative for monotone couplings.
template <int D>
double monotonicity_check(
    const std::function<double(const Vec<D>&, const DiscreteMeasure<D>&)>& phi,
    const DiscreteMeasure<D>& mu, const DiscreteMeasure<D>& nu) {
  if (mu.atoms != nu.atoms || mu.weights.size() != mu.atoms.size() ||
      nu.weights.size() != nu.atoms.size()) {
    throw UsageError("monotonicity_check needs measures on a common support");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
    const double diff = phi(mu.atoms[i], mu) - phi(mu.atoms[i], nu);
    s += diff * (mu.weights[i] - nu.weights[i]);
  }
  return s;
}

}  // namespace slmfg
