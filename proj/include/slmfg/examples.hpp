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

// Builtin models with Gaussian-kernel congestion couplings.
//
//   example1: x' = -2x - sin x + a on R, quadratic control cost.
//   example2: x = (velocity, position), the control is the acceleration,
//             running cost pulls the position toward 0.3.

#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

struct GaussianKernel {
  double sigma = 0.03;

  double operator()(double x) const {
    return std::exp(-x * x / (2.0 * sigma * sigma)) /
           (std::sqrt(2.0 * std::numbers::pi) * sigma);
  }
};

// sum_y rho(x - y) mu(y).
inline double convolve_with_measure(const GaussianKernel& rho,
                                    std::span<const double> atoms,
                                    std::span<const double> weights, double x) {
  double s = 0.0;
  for (std::size_t i = 0; i < atoms.size(); ++i) s += rho(x - atoms[i]) * weights[i];
  return s;
}

// theta * (rho_sigma * pi_axis#mu)(x_axis) as a batched field. Atoms are
// projected on `axis` and merged, then the convolution is evaluated once per
// distinct query coordinate.
template <int D>
FieldFn<D> gaussian_coupling_field(double theta, double sigma, int axis) {
  return [theta, sigma, axis](double, const DiscreteMeasure<D>& mu,
                              std::span<const Vec<D>> xs) {
    std::vector<double> out(xs.size(), 0.0);
    if (theta == 0.0) return out;
    const GaussianKernel rho{sigma};

    std::vector<std::pair<double, double>> proj;
    proj.reserve(mu.atoms.size());
    for (std::size_t i = 0; i < mu.atoms.size(); ++i) {
      if (mu.weights[i] != 0.0) proj.emplace_back(mu.atoms[i][axis], mu.weights[i]);
    }
    std::sort(proj.begin(), proj.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<double> atoms, weights;
    for (const auto& [y, w] : proj) {
      if (!atoms.empty() && atoms.back() == y) {
        weights.back() += w;
      } else {
        atoms.push_back(y);
        weights.push_back(w);
      }
    }

    std::vector<std::pair<double, std::size_t>> queries(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) queries[i] = {xs[i][axis], i};
    std::sort(queries.begin(), queries.end());
    double last_q = 0.0, last_v = 0.0;
    bool have = false;
    for (const auto& [q, i] : queries) {
      if (!have || q != last_q) {
        last_v = theta * convolve_with_measure(rho, atoms, weights, q);
        last_q = q;
        have = true;
      }
      out[i] = last_v;
    }
    return out;
  };
}

// int_{-1}^{1} exp(-x^2 / s) dx.
inline double truncated_gaussian_mass(double s) {
  return std::sqrt(s * std::numbers::pi) * std::erf(1.0 / std::sqrt(s));
}

inline ProblemSpec<1, 1> example1(double theta1 = 1.0, double theta2 = 0.0,
                                  double sigma = 0.03) {
  ProblemSpec<1, 1> p;
  p.name = "example1";
  p.horizon = 1.0;
  p.dynamics.A1 = [](double, const Vec<1>& x) {
    return Vec<1>{-2.0 * x[0] - std::sin(x[0])};
  };
  p.dynamics.B1 = [](double, const Vec<1>&) { return Mat<1>{1.0}; };
  p.cost.ell0 = [](double, const Vec<1>& a, const Vec<1>&) {
    return 0.5 * a[0] * a[0];
  };
  if (theta1 != 0.0) p.cost.coupling_f = gaussian_coupling_field<1>(theta1, sigma, 0);
  if (theta2 != 0.0) p.cost.terminal_g = gaussian_coupling_field<1>(theta2, sigma, 0);
  const double z = truncated_gaussian_mass(0.04);
  p.m0.support_box = {{-1.0}, {1.0}};
  p.m0.density = [z](const Vec<1>& x) {
    if (x[0] < -1.0 || x[0] > 1.0) return 0.0;
    return std::exp(-x[0] * x[0] / 0.04) / z;
  };
  return p;
}

// State ordering: x[0] = velocity (controlled), x[1] = position.
inline ProblemSpec<2, 1> example2(double theta1 = 1.0, double theta2 = 0.0,
                                  double sigma = 0.03) {
  ProblemSpec<2, 1> p;
  p.name = "example2";
  p.horizon = 1.0;
  p.dynamics.A1 = [](double, const Vec<2>&) { return Vec<1>{0.0}; };
  p.dynamics.A2 = [](double, const Vec<2>& x) { return Vec<1>{x[0]}; };
  p.dynamics.B1 = [](double, const Vec<2>&) { return Mat<1>{1.0}; };
  p.dynamics.B2 = [](double, const Vec<2>&) { return MatRC<1, 1>{0.0}; };
  p.cost.ell0 = [](double, const Vec<1>& a, const Vec<2>& x) {
    const double d = x[1] - 0.3;
    return 0.5 * a[0] * a[0] + d * d;
  };
  if (theta1 != 0.0) p.cost.coupling_f = gaussian_coupling_field<2>(theta1, sigma, 1);
  if (theta2 != 0.0) p.cost.terminal_g = gaussian_coupling_field<2>(theta2, sigma, 1);
  const double z = truncated_gaussian_mass(0.001);
  p.m0.support_box = {{-0.02, -1.0}, {0.02, 1.0}};
  p.m0.density = [z](const Vec<2>& x) {
    if (x[0] < -0.02 || x[0] > 0.02 || x[1] < -1.0 || x[1] > 1.0) return 0.0;
    return (1.0 / 0.04) * std::exp(-x[1] * x[1] / 0.001) / z;
  };
  return p;
}

using AnyProblem = std::variant<ProblemSpec<1, 1>, ProblemSpec<2, 1>>;

inline std::vector<std::string> builtin_names() { return {"example1", "example2"}; }

inline AnyProblem make_builtin(const std::string& name, double theta1,
                               double theta2, double sigma) {
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (name == "example1") return example1(theta1, theta2, sigma);
  if (name == "example2") return example2(theta1, theta2, sigma);
  throw ConfigError("unknown builtin problem '" + name + "'");
}

}  // namespace slmfg
