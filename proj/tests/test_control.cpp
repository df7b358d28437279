#include <gtest/gtest.h>

#include "litsim/control.hpp"
#include "litsim/error.hpp"
#include "litsim/synthetic.hpp"

namespace litsim {
namespace {

Conflict conflict_between(AgentId a, AgentId b, int step, Vec2 at) {
  Conflict c;
  c.first = a;
  c.second = b;
  c.first_step = step;
  c.cross_point = at;
  return c;
}

TEST(ModeTransition, FreshConflictTakesOverTheYielder) {
  const auto c = conflict_between(1, 2, 12, {30, 1});
  const std::vector<AssignedConflict> cs = {{c, 2, true}};
  EXPECT_TRUE(is_replay(mode_transition(1, ReplayMode{}, 40, cs, false)));
  const auto m = mode_transition(2, ReplayMode{}, 40, cs, false);
  ASSERT_FALSE(is_replay(m));
  const auto& ca = std::get<ConflictAwareMode>(m);
  EXPECT_EQ(ca.goal, c.cross_point);
  EXPECT_TRUE(ca.yield);
  EXPECT_EQ(ca.takeover_tick, 40);
  EXPECT_EQ(ca.opponent_arrival_tick, 52);
  EXPECT_EQ(ca.conflict, c);
}

TEST(ModeTransition, StaleAssignmentDoesNotTakeOver) {
  const std::vector<AssignedConflict> cs = {{conflict_between(1, 2, 5, {}), 2, false}};
  EXPECT_TRUE(is_replay(mode_transition(2, ReplayMode{}, 3, cs, false)));
}

TEST(ModeTransition, HandbackNeedsGoalAndNoConflict) {
  ConflictAwareMode m;
  m.conflict = conflict_between(1, 2, 5, {});
  const std::vector<AssignedConflict> open = {{m.conflict, 2, false}};
  EXPECT_FALSE(is_replay(mode_transition(2, m, 9, open, true)));
  EXPECT_FALSE(is_replay(mode_transition(2, m, 9, {}, false)));
  EXPECT_TRUE(is_replay(mode_transition(2, m, 9, {}, true)));
}

TEST(ModeTransition, NewConflictRetargetsWithoutResettingTakeoverTick) {
  ConflictAwareMode m;
  m.takeover_tick = 4;
  m.opponent_passed = true;
  const auto c = conflict_between(2, 3, 7, {5, 6});
  const auto next = mode_transition(2, m, 10, {{c, 2, true}}, false);
  const auto& ca = std::get<ConflictAwareMode>(next);
  EXPECT_EQ(ca.takeover_tick, 4);
  EXPECT_EQ(ca.goal, c.cross_point);
  EXPECT_EQ(ca.opponent_arrival_tick, 17);
  EXPECT_FALSE(ca.opponent_passed);
}

PredictedTrajectory approach(AgentId id, Vec2 start, Vec2 vel) {
  std::vector<PredictedStep> steps;
  for (int k = 1; k <= 50; ++k) steps.push_back({start.x + vel.x * 0.1 * k, start.y + vel.y * 0.1 * k, 0.1});
  return make_single_mode(id, 0, make_state(start.x, start.y, 1.8, 4.5, 0, vel.norm()), steps);
}

TEST(DecideYield, LaterArrivalYields) {
  const auto c = conflict_between(1, 2, 10, {20, 0});
  const auto fast = approach(1, {0, 0}, {20, 0});  // arrives at step 10
  const auto slow = approach(2, {0, 0}, {10, 0});  // arrives at step 20
  const auto d = decide_yield(c, fast, slow, 99);
  EXPECT_EQ(d.yielder, 2);
  EXPECT_EQ(d.other, 1);
  EXPECT_EQ(d.yielder_arrival, 20);
  EXPECT_EQ(d.other_arrival, 10);
}

TEST(DecideYield, EgoNeverYields) {
  const auto c = conflict_between(1, 2, 10, {20, 0});
  const auto fast = approach(1, {0, 0}, {20, 0});
  const auto slow = approach(2, {0, 0}, {10, 0});
  EXPECT_EQ(decide_yield(c, fast, slow, 2).yielder, 1);
}

TEST(DecideYield, TieGoesToLargerId) {
  const auto c = conflict_between(3, 7, 10, {20, 0});
  const auto a = approach(3, {0, 0}, {10, 0});
  const auto b = approach(7, {0, 1}, {10, 0});
  EXPECT_EQ(decide_yield(c, a, b, 99).yielder, 7);
}

TEST(Actions, ClampToActuatorLimits) {
  const auto a = clamp_action({2.0, -20.0, 9.0});
  EXPECT_EQ(a.yaw_rate, kMaxYawRate);
  EXPECT_EQ(a.accel_long, kMinAccel);
  EXPECT_EQ(a.accel_lat, kMaxLatAccel);
  const auto b = clamp_action({-2.0, 20.0, -9.0});
  EXPECT_EQ(b.yaw_rate, -kMaxYawRate);
  EXPECT_EQ(b.accel_long, kMaxAccel);
  EXPECT_EQ(b.accel_lat, -kMaxLatAccel);
}

TEST(Actions, IntegrateNeverReversesAndMovesAlongHeading) {
  const auto s = make_state(0, 0, 1.8, 4.5, 0, 0.5);
  const auto n = integrate(s, {0, -8, 0});
  EXPECT_EQ(n.speed, 0.0);
  EXPECT_EQ(n.x, 0.0);
  const auto m = integrate(make_state(0, 0, 1.8, 4.5, 0, 10), {0, 2, 0});
  EXPECT_NEAR(m.speed, 10.2, 1e-12);
  EXPECT_NEAR(m.x, 1.02, 1e-12);
}

TEST(Features, NeighbourGapAndMarkers) {
  const auto map = synth::highway_map(1);
  std::map<AgentId, AgentState> states = {
      {1, make_state(0, 0.8, 1.8, 4.5, 0, 10)},
      {2, make_state(16.5, 0.8, 1.8, 4.5, 0, 8)},
      {3, make_state(100, 0, 1.8, 4.5, 0, 8)},
  };
  const auto f = extract_features(map, states, 1, 0.5);
  EXPECT_NEAR(f.neighbors[0].distance, 12.0, 1e-12);
  EXPECT_EQ(f.neighbors[0].velocity, 8.0);
  EXPECT_NEAR(f.neighbors[0].relative_angle, 0.0, 1e-12);
  EXPECT_EQ(f.neighbors[1].distance, kNeighborSentinel);
  EXPECT_NEAR(f.marker_dist_left, 1.0, 1e-9);
  EXPECT_NEAR(f.marker_dist_right, 2.6, 1e-9);
  EXPECT_NEAR(f.lane_offset, 0.8, 1e-12);
  EXPECT_EQ(f.acceleration, 0.5);
  EXPECT_EQ(feature_vector(f).size(), static_cast<std::size_t>(kFeatureSize));
  const auto lead = lead_neighbor(f);
  ASSERT_TRUE(lead.has_value());
  EXPECT_NEAR(lead->distance, 12.0, 1e-12);
}

TEST(Features, OffMapThrows) {
  const auto map = synth::highway_map(1);
  std::map<AgentId, AgentState> states = {{1, make_state(0, 40, 1.8, 4.5, 0, 10)}};
  try {
    extract_features(map, states, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kOffMap);
  }
}

TEST(PlanRoute, LaneChangeEndsAtGoal) {
  const auto map = synth::highway_map(2);
  const auto start = project_to_lane(map, {0, 0}, 0).frame;
  const Vec2 goal{80, 3.6};
  EXPECT_EQ(route_lanes(map, start, goal), (std::vector<LaneId>{1, 2}));
  const auto path = plan_route(map, start, goal);
  EXPECT_EQ(path.evaluate(1.0), goal);
  EXPECT_NEAR(path.evaluate(0.0).x, 0.0, 1e-9);
  EXPECT_NEAR(path.evaluate(0.0).y, 0.0, 1e-9);
  EXPECT_GE(path.length(), distance({0, 0}, goal));
}

TEST(PlanRoute, SameLaneIsStraight) {
  const auto map = synth::highway_map(2);
  const auto start = project_to_lane(map, {0, 0}, 0).frame;
  EXPECT_EQ(route_lanes(map, start, {50, 0}), (std::vector<LaneId>{1}));
  EXPECT_NEAR(plan_route(map, start, {50, 0}).length(), 50.0, 1e-6);
  EXPECT_NEAR(plan_route(map, start, {30, 0}).length(), 30.0, 0.5);
}

TEST(Controller, ArrivalDecelerationCoversDistanceInTime) {
  const double v = 12, dist = 30, time = 3;
  const double a = arrival_deceleration(v, dist, time);
  EXPECT_NEAR(v * time - 0.5 * a * time * time, dist, 1e-12);
  EXPECT_EQ(arrival_deceleration(5, 100, 2), 0.0);
}

TEST(Controller, YielderSlowsAndStaysWithinLimits) {
  const auto map = synth::highway_map(1);
  const auto path = plan_route(map, project_to_lane(map, {0, 0}, 0).frame, {40, 0});
  ConflictAwareMode mode;
  mode.yield = true;
  mode.opponent_arrival_tick = 30;
  std::map<AgentId, AgentState> states = {{1, make_state(0, 0, 1.8, 4.5, 0, 12)}};
  const auto f = extract_features(map, states, 1);
  const auto r = takeover_step(mode, path, states[1], f, {0, 12.0});
  EXPECT_LT(r.action.accel_long, 0.0);
  EXPECT_GE(r.action.accel_long, kMinAccel);
  EXPECT_FALSE(r.infeasible_yield);
  EXPECT_NEAR(r.action.yaw_rate, 0.0, 1e-9);

  // Nothing to wait for: track the logged speed.
  mode.opponent_arrival_tick = -100;
  const auto free = takeover_step(mode, path, states[1], f, {0, 14.0});
  EXPECT_NEAR(free.action.accel_long, 2.0, 1e-12);
}

TEST(Controller, ImpossibleStopIsFlagged) {
  const auto map = synth::highway_map(1);
  const auto path = plan_route(map, project_to_lane(map, {0, 0}, 0).frame, {8, 0});
  ConflictAwareMode mode;
  mode.opponent_arrival_tick = 40;
  std::map<AgentId, AgentState> states = {{1, make_state(0, 0, 1.8, 4.5, 0, 25)}};
  const auto r = takeover_step(mode, path, states[1], extract_features(map, states, 1), {0, 25});
  EXPECT_TRUE(r.infeasible_yield);
  EXPECT_EQ(r.action.accel_long, kMinAccel);
}

}  // namespace
}  // namespace litsim
