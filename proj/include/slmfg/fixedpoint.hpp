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

// Fictitious play on flows of time marginals:
//
//   M^{n+1}    = br(Mbar^n)
//   e_n        = |M^{n+1} - Mbar^n|_{L1}
//   Mbar^{n+1} = n/(n+1) Mbar^n + 1/(n+1) M^{n+1}
//
// stopping at the first n with e_n <= delta and returning Mbar^n, the
// iterate whose best response is within delta of itself.

#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <sstream>
#include <vector>

#include "slmfg/core.hpp"
#include "slmfg/flow.hpp"

namespace slmfg {

// (1 / (N_t + 1)) sum_k sum_x |a_k(x) - b_k(x)|.
inline double l1_flow_distance(const Flow& a, const Flow& b) {
  check_same_shape(a, b);
  double total = 0.0;
  for (std::size_t k = 0; k < a.marginals.size(); ++k) {
    double s = 0.0;
    const auto& ak = a.marginals[k];
    const auto& bk = b.marginals[k];
    for (std::size_t i = 0; i < ak.size(); ++i) s += std::abs(ak[i] - bk[i]);
    total += s;
  }
  return total / static_cast<double>(a.marginals.size());
}

struct StageReport {
  double delta = 0.0;
  int iterations = 0;
  double final_error = 0.0;
  bool converged = false;
};

struct FPReport {
  std::vector<StageReport> stages;
  std::vector<double> error_trace;
  bool converged = false;
  Flow final_flow;

  int total_iterations() const {
    int n = 0;
    for (const auto& s : stages) n += s.iterations;
    return n;
  }
};

struct FPOptions {
  int max_iters = 500;
  // Plain Picard iteration M <- br(M) instead of averaging. Diagnostic only.
  bool picard = false;
  // Called after every best response with (iteration, error).
  std::function<void(int, double)> on_iteration;
};

// Rescales every marginal to unit mass.
inline void renormalize(Flow& f) {
  for (auto& m : f.marginals) {
    double s = 0.0;
    for (double v : m) s += v;
    if (s > 0.0) {
      for (double& v : m) v /= s;
    }
  }
}

template <class BR>
FPReport fictitious_play(const BR& br, const Flow& initial, double delta,
                         const FPOptions& opts = {}) {
  if (!(delta > 0.0)) throw UsageError("tolerance delta must be positive");
  FPReport rep;
  StageReport stage;
  stage.delta = delta;
  Flow bar = initial;
  for (int n = 1; n <= opts.max_iters; ++n) {
    Flow next = br(bar);
    const double e = l1_flow_distance(next, bar);
    rep.error_trace.push_back(e);
    stage.iterations = n;
    stage.final_error = e;
    if (opts.on_iteration) opts.on_iteration(n, e);
    if (e <= delta) {
      stage.converged = true;
      break;
    }
    if (opts.picard) {
      bar = std::move(next);
    } else {
      const double keep = static_cast<double>(n) / (n + 1);
      const double mix = 1.0 / (n + 1);
      for (std::size_t k = 0; k < bar.marginals.size(); ++k) {
        auto& b = bar.marginals[k];
        const auto& m = next.marginals[k];
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = keep * b[i] + mix * m[i];
      }
      renormalize(bar);
    }
  }
  rep.converged = stage.converged;
  rep.stages.push_back(stage);
  rep.final_flow = std::move(bar);
  return rep;
}

// Runs fictitious play once per tolerance, warm-starting each stage from the
// flow returned by the previous one. Stops at the first stage that fails.
template <class BR>
FPReport tolerance_schedule_run(const BR& br, const Flow& initial,
                                std::span<const double> deltas,
                                const FPOptions& opts = {}) {
  if (deltas.empty()) throw UsageError("empty tolerance schedule");
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    if (!(deltas[i] > 0.0) || (i > 0 && !(deltas[i] < deltas[i - 1]))) {
      throw UsageError("tolerances must be positive and strictly decreasing");
    }
  }
  FPReport rep;
  Flow current = initial;
  rep.converged = true;
  for (double delta : deltas) {
    FPReport stage = fictitious_play(br, current, delta, opts);
    rep.stages.push_back(stage.stages.front());
    rep.error_trace.insert(rep.error_trace.end(), stage.error_trace.begin(),
                           stage.error_trace.end());
    current = std::move(stage.final_flow);
    if (!stage.converged) {
      rep.converged = false;
      break;
    }
  }
  rep.final_flow = std::move(current);
  return rep;
}

// Fixed-point residual |M - br(M)|_{L1}.
template <class BR>
double exploitability(const BR& br, const Flow& flow) {
  return l1_flow_distance(flow, br(flow));
}

// Human-readable run summary.
inline std::string format_report(const FPReport& rep) {
  std::ostringstream os;
  os << "converged: " << (rep.converged ? "true" : "false") << "\n";
  os << "total_iterations: " << rep.total_iterations() << "\n";
  for (std::size_t i = 0; i < rep.stages.size(); ++i) {
    const auto& s = rep.stages[i];
    os << "stage " << i + 1 << ": delta=" << s.delta
       << " iterations=" << s.iterations << " final_error=" << s.final_error
       << " converged=" << (s.converged ? "true" : "false") << "\n";
  }
  return os.str();
}

}  // namespace slmfg
