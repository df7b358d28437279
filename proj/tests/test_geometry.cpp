#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "litsim/error.hpp"
#include "litsim/geometry.hpp"
#include "litsim/synthetic.hpp"
#include "support.hpp"

namespace litsim {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(Obb, CoincidentAndFarApart) {
  const auto a = box_at({0, 0}, 0, 1, 1);
  EXPECT_TRUE(obb_overlap(a, a));
  EXPECT_FALSE(obb_overlap(a, box_at({10, 0}, 0, 1, 1)));
}

TEST(Obb, RotatedCaseMatchesSamplingOracle) {
  const auto a = box_at({0, 0}, 0, 2, 4);
  const auto b = box_at({3.9, 0}, kPi / 4, 2, 4);
  EXPECT_EQ(obb_overlap(a, b), testing::sampled_overlap(a, b));
  EXPECT_TRUE(obb_overlap(a, b));
}

TEST(Obb, TouchingBoxesOverlap) {
  EXPECT_TRUE(obb_overlap(box_at({0, 0}, 0, 2, 4), box_at({4, 0}, 0, 2, 4)));
  EXPECT_FALSE(obb_overlap(box_at({0, 0}, 0, 2, 4), box_at({4.001, 0}, 0, 2, 4)));
}

TEST(Obb, SymmetricAndAgreesWithOracleOnRandomPairs) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-5, 5), yaw(-kPi, kPi), ext(0.5, 5);
  int disagreements = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto a = box_at({pos(rng), pos(rng)}, yaw(rng), ext(rng), ext(rng));
    const auto b = box_at({pos(rng), pos(rng)}, yaw(rng), ext(rng), ext(rng));
    ASSERT_EQ(obb_overlap(a, b), obb_overlap(b, a));
    if (obb_overlap(a, b) != testing::sampled_overlap(a, b, 0.05) &&
        testing::boundary_gap(a, b) >= 0.05) {
      ++disagreements;
    }
  }
  EXPECT_EQ(disagreements, 0);
}

TEST(Obb, PenetrationSign) {
  EXPECT_NEAR(obb_penetration(box_at({0, 0}, 0, 2, 4), box_at({3, 0}, 0, 2, 4)), 1.0, 1e-12);
  EXPECT_LT(obb_penetration(box_at({0, 0}, 0, 2, 4), box_at({5, 0}, 0, 2, 4)), 0.0);
}

TEST(Bezier, QuadraticDeCasteljau) {
  BezierCurve c{{{0, 0}, {1, 1}, {2, 0}}};
  const Vec2 p = c.evaluate(0.5);
  EXPECT_DOUBLE_EQ(p.x, 1.0);
  EXPECT_DOUBLE_EQ(p.y, 0.5);
  EXPECT_EQ(c.degree(), 2);
}

TEST(Bezier, TwoWaypointsGiveStraightSegment) {
  const auto path = bezier_fit({{1, 2}, {11, 2}});
  EXPECT_EQ(path.evaluate(0).x, 1.0);
  EXPECT_EQ(path.evaluate(1).x, 11.0);
  EXPECT_NEAR(path.length(), 10.0, 1e-9);
  for (double u = 0; u <= 1; u += 0.05) EXPECT_NEAR(path.evaluate(u).y, 2.0, 1e-12);
}

TEST(Bezier, CoincidentWaypointsAreDegenerate) {
  try {
    bezier_fit({{1, 1}, {1, 1}, {1, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

double distance_to_polyline(const std::vector<Vec2>& poly, Vec2 p) {
  double best = 1e300;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[i + 1];
    const double dx = b.x - a.x, dy = b.y - a.y;
    double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
    t = std::clamp(t, 0.0, 1.0);
    best = std::min(best, std::hypot(a.x + t * dx - p.x, a.y + t * dy - p.y));
  }
  return best;
}

TEST(Bezier, RandomPolylinesStayWithinTolerance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> step(2, 12), turn(-1.2, 1.2);
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<Vec2> pts = {{0, 0}};
    double heading = 0;
    for (int i = 0; i < 5; ++i) {
      heading += turn(rng);
      const double d = step(rng);
      pts.push_back({pts.back().x + d * std::cos(heading), pts.back().y + d * std::sin(heading)});
    }
    const auto path = bezier_fit(pts);
    EXPECT_EQ(path.evaluate(0).x, pts.front().x);
    EXPECT_EQ(path.evaluate(0).y, pts.front().y);
    EXPECT_EQ(path.evaluate(1).x, pts.back().x);
    EXPECT_EQ(path.evaluate(1).y, pts.back().y);
    double worst = 0;
    for (int k = 0; k <= 1000; ++k) worst = std::max(worst, distance_to_polyline(pts, path.evaluate(k / 1000.0)));
    EXPECT_LE(worst, 0.5 + 1e-9) << "trial " << trial;

    const auto& table = path.arclength_table();
    for (std::size_t i = 1; i < table.size(); ++i) {
      EXPECT_GT(table[i].first, table[i - 1].first);
      EXPECT_GT(table[i].second, table[i - 1].second);
    }
    EXPECT_GE(path.length(), distance(pts.front(), pts.back()));
  }
}

TEST(Bezier, JoinsAreC1) {
  const auto path = bezier_fit({{0, 0}, {10, 0}, {20, 8}, {25, 20}, {24, 35}}, 0.1);
  const auto& pieces = path.pieces();
  ASSERT_GT(pieces.size(), 1u);
  for (std::size_t i = 1; i < pieces.size(); ++i) {
    const Vec2 end = pieces[i - 1].evaluate(1), start = pieces[i].evaluate(0);
    EXPECT_NEAR(end.x, start.x, 1e-9);
    EXPECT_NEAR(end.y, start.y, 1e-9);
    const Vec2 d0 = pieces[i - 1].derivative(1), d1 = pieces[i].derivative(0);
    const double cross = d0.x * d1.y - d0.y * d1.x;
    EXPECT_NEAR(cross / (d0.norm() * d1.norm()), 0.0, 1e-9);
    EXPECT_GT(d0.x * d1.x + d0.y * d1.y, 0.0);
  }
}

TEST(LaneProjection, StraightLaneConventions) {
  const HDMap map = synth::highway_map(1);
  const auto on = project_to_lane(map, {30, 0}, 0);
  EXPECT_NEAR(on.frame.d, 0.0, 1e-12);
  EXPECT_NEAR(on.frame.heading_err, 0.0, 1e-12);
  EXPECT_EQ(on.frame.curvature, 0.0);
  EXPECT_NEAR(on.frame.s, 180.0, 1e-9);  // the lane starts at x = -150
  EXPECT_NEAR(project_to_lane(map, {30, 1.5}, 0).frame.d, 1.5, 1e-12);
  EXPECT_NEAR(project_to_lane(map, {30, -1.0}, 0.1).frame.heading_err, 0.1, 1e-12);
}

TEST(LaneProjection, MarkerDistances) {
  const HDMap map = synth::highway_map(1);
  const auto p = project_to_lane(map, {30, 0.8}, 0);
  EXPECT_NEAR(p.marker_left, 1.0, 1e-9);
  EXPECT_NEAR(p.marker_right, 2.6, 1e-9);
}

TEST(LaneProjection, ArcCurvatureFromCircumradius) {
  const double r = 50.0;
  Lane lane;
  lane.id = 1;
  for (int i = 0; i <= 60; ++i) {
    const double a = -kPi / 2 + i * (1.0 / r);
    lane.centerline.push_back({r * std::cos(a), r + r * std::sin(a)});
  }
  HDMap map;
  map.lanes.push_back(lane);
  const auto p = project_to_lane(map, {20.0, 4.5}, 0.4);
  EXPECT_NEAR(p.frame.curvature, 0.02, 0.02 * 0.05);
}

TEST(LaneProjection, FarPointsAreRejected) {
  const HDMap map = synth::highway_map(1);
  try {
    project_to_lane(map, {0, 30}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoLaneWithinRange);
  }
}

TEST(Curvature, ThreePointCircle) {
  const double r = 10;
  const Vec2 a{r, 0}, b{r * std::cos(0.3), r * std::sin(0.3)}, c{r * std::cos(0.6), r * std::sin(0.6)};
  EXPECT_NEAR(three_point_curvature(a, b, c), 0.1, 1e-12);
  EXPECT_NEAR(three_point_curvature(c, b, a), -0.1, 1e-12);
  EXPECT_EQ(three_point_curvature({0, 0}, {1, 0}, {2, 0}), 0.0);
}

TEST(Polyline, ProjectionAndArclength) {
  const std::vector<Vec2> poly = {{0, 0}, {10, 0}, {10, 10}};
  EXPECT_DOUBLE_EQ(polyline_length(poly), 20.0);
  const auto p = project_to_polyline(poly, {12, 5});
  EXPECT_NEAR(p.s, 15.0, 1e-12);
  EXPECT_NEAR(p.d, -2.0, 1e-12);
  const Vec2 q = polyline_point_at(poly, 15);
  EXPECT_NEAR(q.x, 10, 1e-12);
  EXPECT_NEAR(q.y, 5, 1e-12);
  const auto single = project_to_polyline({{3, 4}}, {0, 0});
  EXPECT_EQ(single.foot.x, 3.0);
  EXPECT_EQ(single.foot.y, 4.0);
}

}  // namespace
}  // namespace litsim
