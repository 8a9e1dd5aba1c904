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

#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "slmfg/slmfg.hpp"
#include "test_util.hpp"

using namespace slmfg;

// ---------------------------------------------------------------------------
// gibbs_step

TEST(Gibbs, EqualCostsGiveUniform) {
  const std::vector<double> c(7, 0.3);
  const auto r = gibbs_step(c, 0.002);
  for (double p : r.probs) EXPECT_NEAR(p, 1.0 / 7.0, 1e-15);
  EXPECT_NEAR(r.value, 0.3 - 0.002 * std::log(7.0), 1e-15);
}

TEST(Gibbs, SmallEpsilonApproachesArgmin) {
  const std::vector<double> c{0.0, 10.0};
  const auto r = gibbs_step(c, 1e-3);
  EXPECT_EQ(r.probs[0], 1.0);
  EXPECT_EQ(r.probs[1], 0.0);
  EXPECT_NEAR(r.value, 0.0, 1e-15);
}

TEST(Gibbs, MatchesProjectedGradientOracle) {
  const std::vector<double> c{1.0, 2.0, 4.0};
  const auto r = gibbs_step(c, 1.0);
  const double z = std::exp(-1.0) + std::exp(-2.0) + std::exp(-4.0);
  EXPECT_NEAR(r.probs[0], std::exp(-1.0) / z, 1e-15);
  const auto p = testutil::gibbs_oracle(c, 1.0);
  double obj = 0.0;
  for (int i = 0; i < 3; ++i) {
    EXPECT_NEAR(r.probs[i], p[i], 1e-8);
    obj += p[i] * c[i] + p[i] * std::log(p[i]);
  }
  EXPECT_NEAR(r.value, obj, 1e-8);
}

TEST(Gibbs, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> cost(0.0, 1.5), eps(0.25, 2.0);
  std::uniform_int_distribution<int> n(2, 6);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> c(n(rng));
    for (double& v : c) v = cost(rng);
    const double e = eps(rng);
    const auto r = gibbs_step(c, e);
    const auto p = testutil::gibbs_oracle(c, e);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(r.probs[i], p[i], 1e-8);
  }
}

TEST(Gibbs, ValueBeatsRandomFeasiblePoints) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> c(5);
    for (double& v : c) v = 3.0 * u(rng);
    const double eps = 0.05 + u(rng);
    const double value = gibbs_step(c, eps).value;
    for (int q = 0; q < 100; ++q) {
      std::vector<double> p(5);
      double s = 0.0;
      for (double& v : p) s += (v = u(rng));
      double obj = 0.0;
      for (int i = 0; i < 5; ++i) {
        p[i] /= s;
        obj += p[i] * c[i] + eps * p[i] * std::log(p[i]);
      }
      EXPECT_LT(value, obj);
    }
  }
}

TEST(Gibbs, ZeroEpsilonTiesPickLowestIndex) {
  const std::vector<double> c{2.0, 1.0, 3.0, 1.0};
  const auto r = gibbs_step(c, 0.0);
  EXPECT_EQ(r.value, 1.0);
  EXPECT_EQ(r.probs, (std::vector<double>{0.0, 1.0, 0.0, 0.0}));
}

TEST(Gibbs, ExtremeSpreadStaysStochastic) {
  const std::vector<double> c{0.0, 1.0, 1e6};
  const auto r = gibbs_step(c, 1e-3);
  EXPECT_EQ(r.probs[2], 0.0);
  EXPECT_NEAR(r.probs[0] + r.probs[1] + r.probs[2], 1.0, 1e-15);
}

TEST(Gibbs, EmptyIsInternal) {
  EXPECT_THROW(gibbs_step(std::vector<double>{}, 0.1), InternalError);
}

// ---------------------------------------------------------------------------
// backward_sweep

namespace {

struct Instance1D {
  ProblemSpec<1, 1> p;
  Discretization d;
  LevelSets<1> ls;
  Instance1D(ProblemSpec<1, 1> prob, Discretization disc)
      : p(std::move(prob)), d(disc), ls(build_level_sets(p, d)) {}
};

}  // namespace

TEST(BackwardSweep, OneStepZeroEpsilonIsZero) {
  Instance1D in(testutil::free_particle(-0.001, 0.001),
                make_discretization(1.0 / 30.0, 1, 150, 0.0, 4.0));
  const auto vp = backward_sweep(in.p, in.d, in.ls, uniform_flow(in.ls));
  ASSERT_EQ(vp.values(0).size(), 1u);
  EXPECT_EQ(vp.values(0)[0], 0.0);
  const auto pol = vp.policy(0, 0);
  ASSERT_EQ(pol.size(), 41u);
  EXPECT_EQ(pol[20], 1.0);
}

TEST(BackwardSweep, OneStepClosedFormLogSumExp) {
  const double eps = 0.002, dt = 1.0 / 30.0, dx = 1.0 / 150.0;
  Instance1D in(testutil::free_particle(-0.001, 0.001),
                make_discretization(dt, 1, 150, eps, 4.0));
  const auto vp = backward_sweep(in.p, in.d, in.ls, uniform_flow(in.ls));
  double z = 0.0;
  for (int j = -20; j <= 20; ++j) {
    const double a = j * dx / dt;
    z += std::exp(-dt * a * a / (2.0 * eps));
  }
  EXPECT_NEAR(vp.values(0)[0], -eps * std::log(z), 1e-15);
  EXPECT_LT(vp.values(0)[0], 0.0);
}

TEST(BackwardSweep, TerminalConditionIsExact) {
  const auto p = example1(1.0, 1.0);
  const Discretization d = make_discretization(1.0, 5, 30, 0.01, 4.0);
  const auto ls = build_level_sets(p, d);
  std::mt19937_64 rng(2);
  const Flow f = testutil::random_flow(ls, rng);
  const auto vp = backward_sweep(p, d, ls, f);
  const auto xs = ls[5].coordinates(d.dx);
  DiscreteMeasure<1> mu{xs, f[5]};
  const auto g = p.cost.terminal(1.0, mu, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) EXPECT_EQ(vp.values(5)[i] - g[i], 0.0);
}

TEST(BackwardSweep, QuadraticCostLinearTerminalOneStep) {
  // min_a dt a^2/2 + c (x + dt a) = c x - dt c^2 / 2 at a = -c; c dt is a
  // whole number of cells so the optimum is a lattice target.
  const double c = 3.0;
  auto p = testutil::free_particle(-0.2, 0.2);
  p.cost.terminal_g = [c](double, const DiscreteMeasure<1>&, std::span<const Vec<1>> xs) {
    std::vector<double> out;
    for (const auto& x : xs) out.push_back(c * x[0]);
    return out;
  };
  const Discretization d = make_discretization(1.0 / 30.0, 1, 150, 0.0, 4.0);
  const auto ls = build_level_sets(p, d);
  const auto vp = backward_sweep(p, d, ls, uniform_flow(ls));
  for (std::size_t i = 0; i < ls[0].size(); ++i) {
    const double x = ls[0].node(static_cast<NodeId>(i))[0] * d.dx;
    EXPECT_NEAR(vp.values(0)[i], c * x - d.dt * c * c / 2.0, 1e-14);
  }
}

TEST(BackwardSweep, EntropyGapBound) {
  const auto p = example1(1.0, 1.0);
  for (double eps : {0.1, 0.01, 0.002}) {
    const Discretization d0 = make_discretization(1.0, 10, 50, 0.0, 4.0);
    const Discretization de = make_discretization(1.0, 10, 50, eps, 4.0);
    const auto ls = build_level_sets(p, d0);
    const Flow f = uniform_flow(ls);
    const auto v0 = backward_sweep(p, d0, ls, f);
    const auto ve = backward_sweep(p, de, ls, f);
    std::size_t widest = 0;
    for (int k = 0; k < ls.n_steps(); ++k) {
      for (const auto& x : ls[k].nodes()) {
        widest = std::max(widest, reachable_controls(p, d0, k, x).size());
      }
    }
    const double bound = eps * 10 * std::log(static_cast<double>(widest));
    for (std::size_t i = 0; i < ls[0].size(); ++i) {
      const double gap = v0.values(0)[i] - ve.values(0)[i];
      EXPECT_GE(gap, 0.0);
      EXPECT_LE(gap, bound);
    }
  }
}

TEST(BackwardSweep, ValueNonincreasingInEpsilon) {
  const auto p = example1(1.0, 1.0);
  const Discretization base = make_discretization(1.0, 6, 40, 0.0, 4.0);
  const auto ls = build_level_sets(p, base);
  std::mt19937_64 rng(4);
  const Flow f = testutil::random_flow(ls, rng);
  std::vector<double> prev;
  for (double eps : {0.0, 0.001, 0.01, 0.05, 0.2}) {
    Discretization d = base;
    d.epsilon = eps;
    const auto v = backward_sweep(p, d, ls, f).values(0);
    if (!prev.empty()) {
      for (std::size_t i = 0; i < v.size(); ++i) EXPECT_LE(v[i], prev[i]);
    }
    prev = v;
  }
}

TEST(BackwardSweep, ZeroEpsilonMatchesExhaustiveEnumeration1D) {
  auto p = example1(1.0, 1.0, 0.3);
  p.m0.support_box = {{-0.02}, {0.02}};
  const Discretization d = make_discretization(0.3, 3, 30, 0.0, 2.0);
  const auto ls = build_level_sets(p, d);
  for (int k = 0; k <= 3; ++k) ASSERT_LE(ls[k].size(), 50u);
  std::mt19937_64 rng(8);
  const Flow f = testutil::random_flow(ls, rng);
  const auto vp = backward_sweep(p, d, ls, f);
  const testutil::PathEnumerator<1, 1> oracle(p, d, ls, f);
  for (int k = 0; k <= 3; ++k) {
    for (std::size_t i = 0; i < ls[k].size(); ++i) {
      EXPECT_EQ(vp.values(k)[i], oracle.value(k, ls[k].node(static_cast<NodeId>(i))));
    }
  }
}

TEST(BackwardSweep, ZeroEpsilonMatchesExhaustiveEnumeration2D) {
  auto p = example2(1.0, 1.0, 0.3);
  p.m0.support_box = {{-0.02, -0.05}, {0.02, 0.05}};
  const Discretization d = make_discretization(0.3, 3, 20, 0.0, 0.5);
  const auto ls = build_level_sets(p, d);
  for (int k = 0; k <= 3; ++k) ASSERT_LE(ls[k].size(), 50u);
  std::mt19937_64 rng(12);
  const Flow f = testutil::random_flow(ls, rng);
  const auto vp = backward_sweep(p, d, ls, f);
  const testutil::PathEnumerator<2, 1> oracle(p, d, ls, f);
  for (int k = 0; k <= 3; ++k) {
    for (std::size_t i = 0; i < ls[k].size(); ++i) {
      EXPECT_EQ(vp.values(k)[i], oracle.value(k, ls[k].node(static_cast<NodeId>(i))));
    }
  }
}

TEST(BackwardSweep, KernelRowsAreStochasticWithExactSupport) {
  const auto p = example2(1.0, 1.0);
  const Discretization d = make_discretization(1.0, 5, 25, 0.01, 4.0);
  const auto ls = build_level_sets(p, d);
  std::mt19937_64 rng(1);
  const auto vp = backward_sweep(p, d, ls, testutil::random_flow(ls, rng));
  const TransitionKernel ker = assemble_kernel(vp);
  std::vector<KernelEntry> row;
  for (int k = 0; k < ls.n_steps(); ++k) {
    for (std::size_t x = 0; x < ls[k].size(); ++x) {
      ker.row(k, static_cast<NodeId>(x), row);
      double s = 0.0;
      std::set<NodeId> support;
      for (const auto& e : row) {
        ASSERT_GE(e.prob, 0.0);
        s += e.prob;
        if (e.prob > 0.0) support.insert(e.target);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
      // S_{k+1}(x) rebuilt from the maps.
      std::set<NodeId> expect;
      const Index<2> xi = ls[k].node(static_cast<NodeId>(x));
      const NodeStep<2, 1> step(p.dynamics, d, k, xi);
      for (const auto& y1 : reachable_controls(p, d, k, xi)) {
        const auto st = q1_weights<1>(step.image(step.control(y1)), d.dx);
        for (int c = 0; c < st.count; ++c) {
          expect.insert(ls[k + 1].find(join<2, 1>(y1, st.corners[c])));
        }
      }
      EXPECT_EQ(support, expect);
    }
  }
}

TEST(BackwardSweep, MissingCornerIsInternal) {
  const auto p = testutil::free_particle(-0.001, 0.001);
  const Discretization d = make_discretization(2.0 / 30.0, 2, 150, 0.0, 4.0);
  LevelSets<1> ls = build_level_sets(p, d);
  std::vector<Index<1>> kept(ls.sets[1].nodes().begin(), ls.sets[1].nodes().end() - 1);
  ls.sets[1] = LevelSet<1>::from_nodes(kept);
  EXPECT_THROW(backward_sweep(p, d, ls, uniform_flow(ls)), InternalError);
}

TEST(BackwardSweep, FlowShapeMismatchIsUsageError) {
  const auto p = testutil::free_particle(-0.001, 0.001);
  const Discretization d = make_discretization(2.0 / 30.0, 2, 150, 0.0, 4.0);
  const auto ls = build_level_sets(p, d);
  Flow f = uniform_flow(ls);
  f.marginals.pop_back();
  EXPECT_THROW(backward_sweep(p, d, ls, f), UsageError);
}

TEST(BackwardSweep, ThreadCountDoesNotChangeValues) {
  const auto p = example2(1.0, 1.0);
  const Discretization d = make_discretization(1.0, 5, 25, 0.002, 4.0);
  const auto ls = build_level_sets(p, d);
  const Flow f = uniform_flow(ls);
  const auto a = backward_sweep(p, d, ls, f, 1);
  const auto b = backward_sweep(p, d, ls, f, 3);
  for (int k = 0; k <= ls.n_steps(); ++k) EXPECT_EQ(a.values(k), b.values(k));
}

// ---------------------------------------------------------------------------
// Saturation.

TEST(Saturation, InteriorOptimumIsNearZero) {
  const auto p = testutil::free_particle(-0.01, 0.01);
  const Discretization d = make_discretization(2.0 / 30.0, 2, 150, 0.002, 100.0);
  const auto ls = build_level_sets(p, d);
  const auto vp = backward_sweep(p, d, ls, uniform_flow(ls));
  EXPECT_LT(saturation_report(vp), 1e-12);
}

TEST(Saturation, TinyBoundPilesMassOnTheEdge) {
  const auto p = example1();
  const Discretization d = make_discretization(1.0, 10, 1000, 0.002, 0.01);
  const auto ls = build_level_sets(p, d);
  const auto vp = backward_sweep(p, d, ls, uniform_flow(ls));
  EXPECT_GT(saturation_report(vp), 0.9);
}

TEST(Saturation, PointMassPoliciesAreZeroOrOne) {
  const auto p = example1();
  const Discretization d = make_discretization(1.0, 5, 30, 0.0, 4.0);
  const auto ls = build_level_sets(p, d);
  const auto vp = backward_sweep(p, d, ls, uniform_flow(ls));
  const double s = saturation_report(vp);
  EXPECT_TRUE(s == 0.0 || s == 1.0);
  for (std::size_t x = 0; x < ls[0].size(); ++x) {
    for (double q : vp.policy(0, static_cast<NodeId>(x))) EXPECT_TRUE(q == 0.0 || q == 1.0);
  }
}

// ---------------------------------------------------------------------------
// Semi-discrete oracle.

TEST(Semidiscrete, NullControlIsOptimalWithoutCosts) {
  auto p = testutil::free_particle();
  p.cost.ell0 = [](double, const Vec<1>& a, const Vec<1>&) { return a[0] * a[0]; };
  std::vector<Vec<1>> grid;
  for (int j = -10; j <= 10; ++j) grid.push_back({0.4 * j});
  const auto flow = [](double) { return DiscreteMeasure<1>{}; };
  const double v = semidiscrete_value(p, flow, Vec<1>{0.1}, 5, grid, Box<1>{{-2.0}, {2.0}}, 401);
  EXPECT_EQ(v, 0.0);
}

TEST(Semidiscrete, QuadraticCostLinearTerminalOneStep) {
  const double c = 1.5;
  auto p = testutil::free_particle();
  p.horizon = 0.1;
  p.cost.terminal_g = [c](double, const DiscreteMeasure<1>&, std::span<const Vec<1>> xs) {
    std::vector<double> out;
    for (const auto& x : xs) out.push_back(c * x[0]);
    return out;
  };
  std::vector<Vec<1>> grid;
  for (int j = -40; j <= 40; ++j) grid.push_back({0.1 * j});
  const auto flow = [](double) { return DiscreteMeasure<1>{}; };
  for (double x : {-0.3, 0.0, 0.25}) {
    const double v = semidiscrete_value(p, flow, Vec<1>{x}, 1, grid, Box<1>{{-2.0}, {2.0}}, 4001);
    EXPECT_NEAR(v, c * x - 0.1 * c * c / 2.0, 1e-12);
  }
}

TEST(Semidiscrete, GuardrailsRefuseLargeInstances) {
  const auto p = testutil::free_particle();
  const auto flow = [](double) { return DiscreteMeasure<1>{}; };
  const std::vector<Vec<1>> grid{{0.0}};
  const Box<1> box{{-1.0}, {1.0}};
  EXPECT_THROW(semidiscrete_value(p, flow, Vec<1>{0.0}, 31, grid, box, 11), UsageError);
  EXPECT_THROW(semidiscrete_value(p, flow, Vec<1>{0.0}, 3, std::vector<Vec<1>>(4002), box, 11),
               UsageError);
  EXPECT_THROW(semidiscrete_value(p, flow, Vec<1>{0.0}, 3, grid, box, 50000), UsageError);
}

// ---------------------------------------------------------------------------
// CSV dumps.

TEST(KernelCsv, RoundTrips) {
  const auto p = example1(1.0, 1.0);
  const Discretization d = make_discretization(1.0, 4, 20, 0.01, 4.0);
  const auto ls = build_level_sets(p, d);
  const TransitionKernel ker = assemble_kernel(backward_sweep(p, d, ls, uniform_flow(ls)));
  std::stringstream ss;
  write_kernel_csv(ss, ker);
  const TransitionKernel back = read_kernel_csv(ss, ker.level_sizes);
  ASSERT_EQ(back.n_steps(), ker.n_steps());
  for (int k = 0; k < ker.n_steps(); ++k) {
    EXPECT_EQ(back.steps[k].row_ptr, ker.steps[k].row_ptr);
    EXPECT_EQ(back.steps[k].cols, ker.steps[k].cols);
    EXPECT_EQ(back.steps[k].probs, ker.steps[k].probs);
  }
}

TEST(KernelCsv, RejectsBadHeader) {
  std::istringstream in("k,x,y,p\n");
  EXPECT_THROW(read_kernel_csv(in, {1, 1}), UsageError);
}

TEST(ValuesCsv, OneRowPerNode) {
  const auto p = example1();
  const Discretization d = make_discretization(1.0, 3, 20, 0.01, 4.0);
  const auto ls = build_level_sets(p, d);
  const auto vp = backward_sweep(p, d, ls, uniform_flow(ls));
  std::ostringstream os;
  write_values_csv(os, vp);
  const std::string s = os.str();
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), 1 + ls.total_nodes());
}
