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

// Run configuration stored as JSON with four sections:
//
//   {
//     "problem":        {"name": "example1", "theta1": 1, "theta2": 0, "sigma": 0.03,
//                        "coupling_weight": "mass"},
//     "discretization": {"n_t": 30, "n_s": 150, "epsilon": 0.002, "control_bound": 4},
//     "solver":         {"deltas": [0.1, 0.01, 0.001], "max_iters": 500},
//     "output":         {"dir": "out", "threads": 1, "seed": 1}
//   }
//
// For name "expr1d" the problem section also takes the Expr1DSpec fields.
// Unknown keys are rejected so that typos do not silently fall back to
// defaults.
//
// coupling_weight "cell" multiplies theta1 and theta2 by the space step, so
// that each atom of the discrete flow contributes mass times cell width to
// the convolution. "mass" uses the atom masses as they are.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "slmfg/core.hpp"
#include "slmfg/examples.hpp"
#include "slmfg/expr.hpp"
#include "slmfg/problem.hpp"

namespace slmfg {

struct RunConfig {
  // problem
  std::string problem = "example1";
  double theta1 = 1.0;
  double theta2 = 0.0;
  double sigma = 0.03;
  std::string coupling_weight = "mass";
  Expr1DSpec expr;  // used when problem == "expr1d"

  // discretization
  int n_t = 30;
  int n_s = 150;
  double epsilon = 0.002;
  double control_bound = 4.0;
  std::uint64_t max_level_nodes = 20'000'000;

  // solver
  std::vector<double> deltas = {0.1, 0.01, 0.001};
  int max_iters = 500;
  bool picard = false;

  // output
  std::string out_dir = "out";
  int threads = 1;
  std::uint64_t seed = 1;
  std::uint64_t sample_count = 1000;
  bool dump_values = false;
  bool dump_kernels = false;
  bool dump_paths = false;
  bool dump_levelsets = false;

  bool operator==(const RunConfig&) const = default;

  double horizon() const { return problem == "expr1d" ? expr.horizon : 1.0; }

  Discretization discretization() const {
    Discretization d = make_discretization(horizon(), n_t, n_s, epsilon, control_bound);
    d.max_level_nodes = max_level_nodes;
    return d;
  }
};

inline AnyProblem make_problem(const RunConfig& c) {
  const double w = c.coupling_weight == "cell" ? c.discretization().dx : 1.0;
  if (c.problem == "expr1d") {
    Expr1DSpec s = c.expr;
    s.theta1 = w * c.theta1;
    s.theta2 = w * c.theta2;
    s.sigma = c.sigma;
    return expr_problem(s);
  }
  return make_builtin(c.problem, w * c.theta1, w * c.theta2, c.sigma);
}

namespace detail {

using nlohmann::json;

class Section {
 public:
  Section(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) {
      obj_ = json::object();
      return;
    }
    obj_ = root.at(name);
    if (!obj_.is_object()) throw ConfigError(name + ": expected an object");
  }

  template <class T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      const json& v = obj_.at(key);
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("expected true or false");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (!v.is_number_unsigned()) throw ConfigError("expected a non-negative integer");
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("expected a number");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("expected a string");
      }
      out = v.get<T>();
    } catch (const ConfigError& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ConfigError(name_ + "." + it.key() + ": unknown key");
      }
    }
  }

 private:
  std::string name_;
  json obj_;
  std::set<std::string> seen_;
};

inline std::string locate(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

inline RunConfig parse_config(const std::string& text) {
  using nlohmann::json;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed config at " + detail::locate(text, e.byte) +
                      ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");
  for (auto it = root.begin(); it != root.end(); ++it) {
    const std::string& k = it.key();
    if (k != "problem" && k != "discretization" && k != "solver" && k != "output") {
      throw ConfigError(k + ": unknown section");
    }
  }

  RunConfig c;
  detail::Section p(root, "problem");
  p.get("name", c.problem);
  p.get("theta1", c.theta1);
  p.get("theta2", c.theta2);
  p.get("sigma", c.sigma);
  p.get("coupling_weight", c.coupling_weight);
  if (c.coupling_weight != "mass" && c.coupling_weight != "cell") {
    throw ConfigError("problem.coupling_weight: expected \"mass\" or \"cell\"");
  }
  if (c.problem == "expr1d") {
    p.get("drift", c.expr.drift);
    p.get("gain", c.expr.gain);
    p.get("control_cost", c.expr.control_cost);
    p.get("running_cost", c.expr.running_cost);
    p.get("terminal_cost", c.expr.terminal_cost);
    p.get("initial_density", c.expr.initial_density);
    p.get("support_lo", c.expr.support_lo);
    p.get("support_hi", c.expr.support_hi);
    p.get("horizon", c.expr.horizon);
  } else if (c.problem != "example1" && c.problem != "example2") {
    throw ConfigError("problem.name: unknown problem '" + c.problem + "'");
  }
  p.finish();

  detail::Section d(root, "discretization");
  d.get("n_t", c.n_t);
  d.get("n_s", c.n_s);
  d.get("epsilon", c.epsilon);
  d.get("control_bound", c.control_bound);
  d.get("max_level_nodes", c.max_level_nodes);
  d.finish();
  if (c.n_t < 1) throw ConfigError("discretization.n_t: must be >= 1");
  if (c.n_s < 1) throw ConfigError("discretization.n_s: must be >= 1");
  if (!(c.epsilon >= 0.0)) throw ConfigError("discretization.epsilon: must be >= 0");
  if (!(c.control_bound > 0.0)) {
    throw ConfigError("discretization.control_bound: must be > 0");
  }

  detail::Section s(root, "solver");
  s.get("deltas", c.deltas);
  s.get("max_iters", c.max_iters);
  s.get("picard", c.picard);
  s.finish();
  if (c.max_iters < 1) throw ConfigError("solver.max_iters: must be >= 1");

  detail::Section o(root, "output");
  o.get("dir", c.out_dir);
  o.get("threads", c.threads);
  o.get("seed", c.seed);
  o.get("sample_count", c.sample_count);
  o.get("dump_values", c.dump_values);
  o.get("dump_kernels", c.dump_kernels);
  o.get("dump_paths", c.dump_paths);
  o.get("dump_levelsets", c.dump_levelsets);
  o.finish();
  if (c.threads < 1) throw ConfigError("output.threads: must be >= 1");
  return c;
}

inline std::string emit_config(const RunConfig& c) {
  nlohmann::ordered_json root;
  auto& p = root["problem"];
  p["name"] = c.problem;
  p["theta1"] = c.theta1;
  p["theta2"] = c.theta2;
  p["sigma"] = c.sigma;
  p["coupling_weight"] = c.coupling_weight;
  if (c.problem == "expr1d") {
    p["drift"] = c.expr.drift;
    p["gain"] = c.expr.gain;
    p["control_cost"] = c.expr.control_cost;
    p["running_cost"] = c.expr.running_cost;
    p["terminal_cost"] = c.expr.terminal_cost;
    p["initial_density"] = c.expr.initial_density;
    p["support_lo"] = c.expr.support_lo;
    p["support_hi"] = c.expr.support_hi;
    p["horizon"] = c.expr.horizon;
  }
  auto& d = root["discretization"];
  d["n_t"] = c.n_t;
  d["n_s"] = c.n_s;
  d["epsilon"] = c.epsilon;
  d["control_bound"] = c.control_bound;
  d["max_level_nodes"] = c.max_level_nodes;
  auto& s = root["solver"];
  s["deltas"] = c.deltas;
  s["max_iters"] = c.max_iters;
  s["picard"] = c.picard;
  auto& o = root["output"];
  o["dir"] = c.out_dir;
  o["threads"] = c.threads;
  o["seed"] = c.seed;
  o["sample_count"] = c.sample_count;
  o["dump_values"] = c.dump_values;
  o["dump_kernels"] = c.dump_kernels;
  o["dump_paths"] = c.dump_paths;
  o["dump_levelsets"] = c.dump_levelsets;
  return root.dump(2) + "\n";
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace slmfg
