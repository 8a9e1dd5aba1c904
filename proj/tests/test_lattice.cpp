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
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "slmfg/slmfg.hpp"
#include "test_util.hpp"

using namespace slmfg;

namespace {

const Discretization kTableGrid = make_discretization(1.0, 30, 150, 0.002, 4.0);

// x' = (a, 1): the second coordinate drifts at unit speed.
ProblemSpec<2, 1> drifting() {
  ProblemSpec<2, 1> p;
  p.dynamics.A1 = [](double, const Vec<2>&) { return Vec<1>{0.0}; };
  p.dynamics.A2 = [](double, const Vec<2>&) { return Vec<1>{1.0}; };
  p.dynamics.B1 = [](double, const Vec<2>&) { return Mat<1>{1.0}; };
  p.dynamics.B2 = [](double, const Vec<2>&) { return MatRC<1, 1>{0.0}; };
  p.cost.ell0 = [](double, const Vec<1>& a, const Vec<2>&) { return 0.5 * a[0] * a[0]; };
  p.m0.support_box = {{-0.1, -0.1}, {0.1, 0.1}};
  p.m0.density = [](const Vec<2>&) { return 25.0; };
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------
// Control and image maps.

TEST(ControlForTarget, Example2IsDisplacementOverDt) {
  const auto p = example2();
  const Index<2> x{7, -3};
  for (std::int64_t y : {-13, 0, 7, 20}) {
    const Vec<1> a = control_for_target(p, kTableGrid, 4, x, Index<1>{y});
    EXPECT_DOUBLE_EQ(a[0], static_cast<double>(y - 7) * kTableGrid.dx / kTableGrid.dt);
  }
}

TEST(ControlForTarget, Example1AtOriginFollowsDrift) {
  const auto p = example1();
  EXPECT_EQ(control_for_target(p, kTableGrid, 0, Index<1>{0}, Index<1>{0})[0], 0.0);
}

TEST(ControlForTarget, Example1StayPutCancelsDrift) {
  const auto p = example1();
  // x = 0.5 is node 75.
  const Vec<1> a = control_for_target(p, kTableGrid, 3, Index<1>{75}, Index<1>{75});
  EXPECT_NEAR(a[0], 2.0 * 0.5 + std::sin(0.5), 1e-12);
}

TEST(ControlForTarget, SingularGainIsStructural) {
  auto p = testutil::free_particle();
  p.dynamics.B1 = [](double, const Vec<1>&) { return Mat<1>{0.0}; };
  EXPECT_THROW(control_for_target(p, kTableGrid, 0, Index<1>{0}, Index<1>{1}), StructuralError);
}

TEST(ImageY2, Example2AdvancesPositionByVelocity) {
  const auto p = example2();
  const Index<2> x{12, -40};
  const Vec<1> z = image_y2(p, kTableGrid, 0, x, Index<1>{15});
  EXPECT_NEAR(z[0], -40.0 / 150.0 + kTableGrid.dt * 12.0 / 150.0, 1e-15);
}

TEST(ImageY2, PureDriftStep) {
  const auto p = drifting();
  const Discretization d = make_discretization(1.0, 10, 100, 0.0, 4.0);
  const Vec<1> z = image_y2(p, d, 0, Index<2>{0, 0}, Index<1>{0});
  EXPECT_NEAR(z[0], 0.1, 1e-15);
}

TEST(ImageY2, FullyActuatedIsEmpty) {
  const auto z = image_y2(example1(), kTableGrid, 0, Index<1>{3}, Index<1>{3});
  EXPECT_EQ(z.size(), 0u);
}

// ---------------------------------------------------------------------------
// Reachable controls.

TEST(ReachableControls, FreeParticleHas41Targets) {
  const auto p = testutil::free_particle();
  const auto ys = reachable_controls(p, kTableGrid, 0, Index<1>{5});
  ASSERT_EQ(ys.size(), 41u);
  for (int j = 0; j < 41; ++j) EXPECT_EQ(ys[j][0], 5 - 20 + j);
}

TEST(ReachableControls, TinyBoundKeepsOnlyStayPut) {
  const auto p = testutil::free_particle();
  // C dt = 0.5 dx.
  const Discretization d = make_discretization(1.0, 30, 150, 0.0, 0.1);
  const auto ys = reachable_controls(p, d, 0, Index<1>{-2});
  ASSERT_EQ(ys.size(), 1u);
  EXPECT_EQ(ys[0][0], -2);
}

TEST(ReachableControls, Example1SymmetricAtOrigin) {
  const auto ys = reachable_controls(example1(), kTableGrid, 0, Index<1>{0});
  ASSERT_FALSE(ys.empty());
  EXPECT_EQ(ys.front()[0], -ys.back()[0]);
  EXPECT_EQ(ys.size() % 2, 1u);
}

TEST(ReachableControls, MatchesBruteForceFilter) {
  const auto p = example1();
  for (std::int64_t i : {-140, -37, 0, 11, 150}) {
    const auto ys = reachable_controls(p, kTableGrid, 7, Index<1>{i});
    std::vector<std::int64_t> expect;
    const double x = i / 150.0;
    const double a1 = -2.0 * x - std::sin(x);
    for (std::int64_t y = i - 200; y <= i + 200; ++y) {
      const double alpha = ((y - i) / 150.0) / kTableGrid.dt - a1;
      if (std::abs(alpha) <= 4.0) expect.push_back(y);
    }
    ASSERT_EQ(ys.size(), expect.size()) << i;
    for (std::size_t j = 0; j < ys.size(); ++j) EXPECT_EQ(ys[j][0], expect[j]);
  }
}

// ---------------------------------------------------------------------------
// Q1 weights and interpolation.

TEST(Q1Weights, NodeHasSingleWeight) {
  const auto st = q1_weights<1>(Vec<1>{7.0 / 150.0}, 1.0 / 150.0);
  ASSERT_EQ(st.count, 1);
  EXPECT_EQ(st.corners[0][0], 7);
  EXPECT_EQ(st.weights[0], 1.0);
}

TEST(Q1Weights, MidpointSplitsEvenly) {
  const auto st = q1_weights<1>(Vec<1>{0.35}, 0.1);
  ASSERT_EQ(st.count, 2);
  EXPECT_EQ(st.corners[0][0], 3);
  EXPECT_EQ(st.corners[1][0], 4);
  EXPECT_NEAR(st.weights[0], 0.5, 1e-12);
  EXPECT_NEAR(st.weights[1], 0.5, 1e-12);
}

TEST(Q1Weights, CellCentreInTwoDimensions) {
  const auto st = q1_weights<2>(Vec<2>{0.25, -0.75}, 0.5);
  ASSERT_EQ(st.count, 4);
  for (int c = 0; c < 4; ++c) EXPECT_NEAR(st.weights[c], 0.25, 1e-12);
  // Last axis fastest, low corner first.
  EXPECT_EQ(st.corners[0], (Index<2>{0, -2}));
  EXPECT_EQ(st.corners[1], (Index<2>{0, -1}));
  EXPECT_EQ(st.corners[2], (Index<2>{1, -2}));
  EXPECT_EQ(st.corners[3], (Index<2>{1, -1}));
}

TEST(Q1Weights, EmptyDimensionIsDirectEvaluation) {
  const auto st = q1_weights<0>(Vec<0>{}, 0.1);
  ASSERT_EQ(st.count, 1);
  EXPECT_EQ(st.weights[0], 1.0);
}

TEST(Q1Weights, PartitionOfUnity) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const Vec<2> z{u(rng), u(rng)};
    const auto st = q1_weights<2>(z, 1.0 / 150.0);
    double s = 0.0;
    for (int c = 0; c < st.count; ++c) {
      EXPECT_GE(st.weights[c], 0.0);
      EXPECT_LE(st.weights[c], 1.0);
      s += st.weights[c];
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Interpolate, ConstantField) {
  const double c = 2.75;
  auto lookup = [&](const Index<1>&) { return &c; };
  for (double z : {-0.31, 0.0, 0.123456}) {
    EXPECT_NEAR(interpolate<1>(lookup, Vec<1>{z}, 0.01), c, 1e-14);
  }
}

TEST(Interpolate, LinearFieldIsExact) {
  const double dx = 1.0 / 150.0;
  std::map<std::int64_t, double> vals;
  for (std::int64_t i = -200; i <= 200; ++i) vals[i] = 3.0 * i * dx;
  auto lookup = [&](const Index<1>& i) { return &vals.at(i[0]); };
  for (double z : {-0.4321, 0.0123, 0.5, 1.2}) {
    EXPECT_NEAR(interpolate<1>(lookup, Vec<1>{z}, dx), 3.0 * z, 1e-12);
  }
}

TEST(Interpolate, ConvexCombination) {
  const double dx = 0.2;
  const std::map<std::int64_t, double> vals{{0, 1.0}, {1, 3.0}};
  auto lookup = [&](const Index<1>& i) {
    auto it = vals.find(i[0]);
    return it == vals.end() ? nullptr : &it->second;
  };
  EXPECT_NEAR(interpolate<1>(lookup, Vec<1>{0.25 * dx}, dx), 1.5, 1e-14);
}

TEST(Interpolate, MissingCornerIsInternal) {
  auto lookup = [](const Index<1>&) -> const double* { return nullptr; };
  EXPECT_THROW(interpolate<1>(lookup, Vec<1>{0.05}, 0.1), InternalError);
}

// ---------------------------------------------------------------------------
// Level sets.

TEST(LevelSets, PointMassGrowsLinearly) {
  // Support inside the cell of node 0; dt = 1/30, dx = 1/150, C = 4.
  const auto p = testutil::free_particle(-0.001, 0.001);
  const Discretization d = make_discretization(6.0 / 30.0, 6, 150, 0.0, 4.0);
  const auto ls = build_level_sets(p, d);
  ASSERT_EQ(ls.n_steps(), 6);
  for (int k = 0; k <= 6; ++k) {
    EXPECT_EQ(ls[k].size(), static_cast<std::size_t>(1 + 40 * k)) << k;
    EXPECT_EQ(ls[k].nodes().front()[0], -20 * k);
  }
  EXPECT_NEAR(ls.bounding_radius, 120.0 / 150.0, 1e-15);
  const auto fc = forecast_level_sizes(p, d);
  for (int k = 0; k <= 6; ++k) EXPECT_EQ(fc[k], 1.0 + 40.0 * k);
}

TEST(LevelSets, InitialLevelCoversSupportCells) {
  const auto s0 = initial_level<1>(example1().m0.support_box, 1.0 / 150.0);
  ASSERT_EQ(s0.size(), 301u);
  EXPECT_EQ(s0.nodes().front()[0], -150);
  EXPECT_EQ(s0.nodes().back()[0], 150);
  // A support edge at a cell face does not pull in the neighbour.
  const auto s1 = initial_level<1>(Box<1>{{0.5 / 150.0}, {2.5 / 150.0}}, 1.0 / 150.0);
  ASSERT_EQ(s1.size(), 2u);
  EXPECT_EQ(s1.nodes().front()[0], 1);
}

TEST(LevelSets, InitialLevelOfExample2) {
  const auto s0 = initial_level<2>(example2().m0.support_box, 1.0 / 150.0);
  // [-0.02, 0.02] spans nodes -3..3, [-1, 1] spans -150..150.
  EXPECT_EQ(s0.size(), 7u * 301u);
}

TEST(LevelSets, LookupRoundTrips) {
  const auto p = drifting();
  const Discretization d = make_discretization(0.3, 3, 30, 0.0, 4.0);
  const auto ls = build_level_sets(p, d);
  for (int k = 0; k <= ls.n_steps(); ++k) {
    for (std::size_t i = 0; i < ls[k].size(); ++i) {
      EXPECT_EQ(ls[k].find(ls[k].node(static_cast<NodeId>(i))), static_cast<NodeId>(i));
    }
    EXPECT_EQ(ls[k].find(Index<2>{1000, 1000}), kNoNode);
  }
}

namespace {

template <int D, int R>
void check_closure(const ProblemSpec<D, R>& p, const Discretization& d,
                   const LevelSets<D>& ls) {
  constexpr int M = D - R;
  double radius = 0.0;
  for (int k = 0; k < ls.n_steps(); ++k) {
    for (const auto& x : ls[k].nodes()) {
      const NodeStep<D, R> step(p.dynamics, d, k, x);
      for (const auto& y1 : reachable_controls(p, d, k, x)) {
        const Vec<R> a = control_for_target(p, d, k, x, y1);
        ASSERT_LE(norm_inf<R>(a), d.control_bound * (1.0 + 1e-12));
        const auto st = q1_weights<M>(step.image(a), d.dx);
        for (int c = 0; c < st.count; ++c) {
          ASSERT_NE(ls[k + 1].find(join<D, R>(y1, st.corners[c])), kNoNode);
        }
      }
    }
  }
  for (int k = 0; k <= ls.n_steps(); ++k) {
    for (const auto& x : ls[k].nodes()) {
      for (int i = 0; i < D; ++i) radius = std::max(radius, std::abs(x[i] * d.dx));
    }
  }
  EXPECT_LE(radius, ls.bounding_radius);
}

}  // namespace

TEST(LevelSets, NestingAndReachabilityExample1) {
  const auto p = example1();
  const Discretization d = make_discretization(1.0, 10, 50, 0.0, 4.0);
  check_closure(p, d, build_level_sets(p, d));
}

TEST(LevelSets, NestingAndReachabilityExample2) {
  const auto p = example2();
  const Discretization d = make_discretization(1.0, 10, 50, 0.0, 4.0);
  check_closure(p, d, build_level_sets(p, d));
}

TEST(LevelSets, Example2RadiusStableUnderRefinement) {
  const auto p = example2();
  const auto coarse = build_level_sets(p, make_discretization(1.0, 10, 50, 0.0, 4.0));
  const auto fine = build_level_sets(p, make_discretization(1.0, 20, 100, 0.0, 4.0));
  EXPECT_NEAR(fine.bounding_radius / coarse.bounding_radius, 1.0, 0.05);
}

TEST(LevelSets, ForecastBoundsActualSizes) {
  const auto p = example2();
  const Discretization d = make_discretization(1.0, 10, 50, 0.0, 4.0);
  const auto ls = build_level_sets(p, d);
  const auto fc = forecast_level_sizes(p, d);
  ASSERT_EQ(fc.size(), ls.sets.size());
  for (int k = 0; k <= ls.n_steps(); ++k) EXPECT_GE(fc[k], static_cast<double>(ls[k].size()));
}

TEST(LevelSets, NodeCapRaisesConfigError) {
  const auto p = example1();
  Discretization d = make_discretization(1.0, 30, 150, 0.0, 4.0);
  d.max_level_nodes = 400;
  EXPECT_THROW(build_level_sets(p, d), ConfigError);
}

TEST(LevelSets, CsvHasOneRowPerNode) {
  const auto p = testutil::free_particle(-0.001, 0.001);
  const auto ls = build_level_sets(p, make_discretization(2.0 / 30.0, 2, 150, 0.0, 4.0));
  std::ostringstream os;
  write_level_sets_csv(os, ls);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "k,i0,x0");
  EXPECT_EQ(static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')), 1 + ls.total_nodes());
}
