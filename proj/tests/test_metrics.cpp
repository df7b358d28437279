#include <gtest/gtest.h>

#include <random>

#include "litsim/geometry.hpp"
#include "litsim/metrics.hpp"
#include "support.hpp"

namespace litsim {
namespace {

using testing::straight_track;

LogScenario log_of(std::vector<TrackHistory> tracks, Tick duration) {
  LogScenario log;
  for (auto& t : tracks) log.tracks[t.id] = std::move(t);
  log.duration_steps = duration;
  return log;
}

/// Trace built from the log with every agent shifted by `offset`.
SimTrace shifted_trace(const LogScenario& log, Tick start, Tick end, Vec2 offset) {
  SimTrace tr;
  tr.sim_start = start;
  for (Tick t = start; t < end; ++t) {
    Frame f;
    f.tick = t;
    for (const auto& [id, track] : log.tracks) {
      if (!track.covers(t)) continue;
      AgentState s = track.at(t);
      s.x += offset.x;
      s.y += offset.y;
      f.agents[id] = {s, TraceMode::kReplay};
    }
    tr.frames.push_back(f);
  }
  return tr;
}

TEST(Ade, ConstantOffsetGivesItsNorm) {
  const auto log = log_of({straight_track(1, 0, 300, 0, 0, 0, 10), straight_track(2, 0, 300, 0, 20, 0, 5)}, 300);
  const auto tr = shifted_trace(log, 30, 280, {3, 4});
  EXPECT_NEAR(ade(tr, log, 5.0), 5.0, 1e-12);
  EXPECT_NEAR(ade(shifted_trace(log, 30, 280, {0, 0}), log, 5.0), 0.0, 0.0);
}

TEST(Ade, MatchesNaiveAverage) {
  const auto log = log_of({straight_track(1, 0, 200, 0, 0, 0, 10), straight_track(2, 40, 160, 0, 10, 0.2, 8)}, 200);
  auto tr = shifted_trace(log, 30, 200, {0, 0});
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0, 1);
  for (auto& f : tr.frames) {
    for (auto& [id, rec] : f.agents) {
      rec.state.x += noise(rng);
      rec.state.y += noise(rng);
    }
  }
  for (double horizon : {1.0, 3.0, 5.0, 8.0}) {
    double total = 0;
    int ticks = 0;
    for (const auto& f : tr.frames) {
      if (f.tick >= 30 + static_cast<Tick>(horizon * 10 + 0.5)) break;
      double sum = 0;
      for (const auto& [id, rec] : f.agents) {
        const auto& truth = log.tracks.at(id).at(f.tick);
        sum += std::hypot(rec.state.x - truth.x, rec.state.y - truth.y);
      }
      total += sum / static_cast<double>(f.agents.size());
      ++ticks;
    }
    EXPECT_NEAR(ade(tr, log, horizon), total / ticks, 1e-12) << horizon;
  }
}

TEST(Collisions, CountsEachAgentOnce) {
  const auto log = log_of({straight_track(1, 0, 50, 0, 0, 0, 10), straight_track(2, 0, 50, 2, 0.5, 0, 10),
                           straight_track(3, 0, 50, 0, 10, 0, 10)},
                          50);
  const auto tr = shifted_trace(log, 0, 50, {0, 0});
  EXPECT_EQ(colliding_agents(tr), (std::set<AgentId>{1, 2}));
  const auto m = scenario_metrics(tr, log, {5.0});
  EXPECT_EQ(m.colliding, 2);
  EXPECT_EQ(m.agents, 3);
}

TEST(Collisions, PolygonTestAgreesWithSeparatingAxes) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> pos(-4, 4), yaw(-3.1, 3.1), ext(0.5, 5);
  for (int i = 0; i < 3000; ++i) {
    const auto a = box_at({pos(rng), pos(rng)}, yaw(rng), ext(rng), ext(rng));
    const auto b = box_at({pos(rng), pos(rng)}, yaw(rng), ext(rng), ext(rng));
    if (testing::boundary_gap(a, b) < 1e-9) continue;
    ASSERT_EQ(polygons_intersect(corners(a), corners(b)), obb_overlap(a, b)) << i;
  }
}

TEST(Progress, StraightFiftyMetres) {
  const auto log = log_of({straight_track(1, 0, 51, 0, 0, 0.4, 10)}, 51);
  EXPECT_NEAR(mean_progress(shifted_trace(log, 0, 51, {0, 0})), 50.0, 1e-9);
}

TEST(Aggregate, RatesOverScenarios) {
  ScenarioMetrics a{"a", 10, 2, 1, {1.0}, 100.0, 0};
  ScenarioMetrics b{"b", 30, 0, 3, {3.0}, 20.0, 0};
  const auto r = aggregate({a, b}, {5.0});
  EXPECT_DOUBLE_EQ(r.collision_rate, 2.0 / 40);
  EXPECT_DOUBLE_EQ(r.reactivity, 0.5);
  EXPECT_DOUBLE_EQ(r.relevant_ratio, 4.0 / 40);
  EXPECT_DOUBLE_EQ(r.ade[0], 2.0);
  EXPECT_DOUBLE_EQ(r.progress, (100.0 * 10 + 20.0 * 30) / 40);
}

TEST(Idm, MatchesClosedForm) {
  const IdmParams p;
  const double v = 15, lead = 10, gap = 25;
  const double s_star = p.min_gap + v * p.time_headway + v * (v - lead) / (2 * std::sqrt(p.max_accel * p.comfort_decel));
  const double expected = p.max_accel * (1 - std::pow(v / p.desired_speed, 4) - std::pow(s_star / gap, 2));
  EXPECT_NEAR(idm_accel(v, lead, gap, p), expected, 1e-12);
  EXPECT_NEAR(idm_accel(v, 0, std::numeric_limits<double>::infinity(), p),
              p.max_accel * (1 - std::pow(v / p.desired_speed, 4)), 1e-12);
  EXPECT_EQ(idm_accel(v, lead, 0.0, p), -8.0);
  EXPECT_EQ(idm_accel(30, 0, 0.5, p), -8.0);
}

TEST(Idm, PlatoonBehindBrakingLeaderStaysApart) {
  const IdmParams p;
  const int n = 6;
  std::vector<double> x(n), v(n, 20.0);
  for (int i = 0; i < n; ++i) x[i] = -40.0 * i;
  double min_gap = 1e9;
  for (int step = 0; step < 600; ++step) {
    std::vector<double> a(n);
    a[0] = step < 100 ? -3.0 : 0.5;
    for (int i = 1; i < n; ++i) a[i] = idm_accel(v[i], v[i - 1], x[i - 1] - x[i] - 4.5, p);
    for (int i = 0; i < n; ++i) {
      v[i] = std::max(0.0, v[i] + a[i] * 0.1);
      x[i] += v[i] * 0.1;
    }
    for (int i = 1; i < n; ++i) min_gap = std::min(min_gap, x[i - 1] - x[i] - 4.5);
  }
  EXPECT_GT(min_gap, 1.0);
}

}  // namespace
}  // namespace litsim
