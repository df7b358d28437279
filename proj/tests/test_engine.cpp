#include <gtest/gtest.h>

#include <sstream>

#include "litsim/engine.hpp"
#include "litsim/error.hpp"
#include "litsim/metrics.hpp"
#include "litsim/synthetic.hpp"

namespace litsim {
namespace {

SimConfig config_for(const synth::Scenario& s, BackgroundMode mode = BackgroundMode::kLitSim) {
  SimConfig cfg;
  cfg.ego = s.ego;
  cfg.ego_script = s.script;
  cfg.background = mode;
  return cfg;
}

void expect_matches_log(const SimTrace& tr, const LogScenario& log) {
  for (const auto& f : tr.frames) {
    for (const auto& [id, rec] : f.agents) {
      const auto& truth = log.tracks.at(id).at(f.tick);
      ASSERT_EQ(rec.state.x, truth.x) << "agent " << id << " tick " << f.tick;
      ASSERT_EQ(rec.state.y, truth.y);
      ASSERT_EQ(rec.state.yaw, truth.yaw);
    }
  }
}

TEST(Engine, ReplayEgoInQuietTrafficReproducesTheLog) {
  const auto corpus = synth::quiet_corpus(3, 5);
  for (const auto& s : corpus) {
    const auto tr = run_segment(s.segment, config_for(s));
    EXPECT_EQ(tr.frames.size(), static_cast<std::size_t>(s.segment.sim_steps));
    expect_matches_log(tr, s.segment.log);
    EXPECT_TRUE(tr.audit.empty());
  }
}

TEST(Engine, PureReplayBackgroundIsTheLog) {
  auto s = synth::cut_in();
  s.script.kind = EgoPolicyKind::kReplay;
  const auto tr = run_segment(s.segment, config_for(s, BackgroundMode::kReplay));
  expect_matches_log(tr, s.segment.log);
}

TEST(Engine, CutInFollowerIsTakenOverAndAvoidsCollision) {
  const auto s = synth::cut_in();
  const auto tr = run_segment(s.segment, config_for(s));
  EXPECT_TRUE(colliding_agents(tr).empty());
  EXPECT_EQ(taken_over_agents(tr), (std::set<AgentId>{2}));
  bool handback = false;
  for (const auto& e : tr.audit) handback = handback || (e.kind == AuditKind::kHandback && e.agent == 2);
  EXPECT_TRUE(handback);

  const auto baseline = run_segment(s.segment, config_for(s, BackgroundMode::kReplay));
  EXPECT_EQ(colliding_agents(baseline), (std::set<AgentId>{1, 2}));
}

TEST(Engine, SameInputsSameTrace) {
  const auto s = synth::unprotected_left();
  auto cfg = config_for(s);
  cfg.seed = 3;
  std::ostringstream a, b;
  write_trace(run_segment(s.segment, cfg), a);
  write_trace(run_segment(s.segment, cfg), b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(Engine, TraceRoundTrip) {
  const auto s = synth::cut_in();
  const auto tr = run_segment(s.segment, config_for(s));
  std::ostringstream out;
  write_trace(tr, out);
  std::istringstream in(out.str());
  const auto back = read_trace(in);
  std::ostringstream again;
  write_trace(back, again);
  EXPECT_EQ(out.str(), again.str());
  EXPECT_EQ(back.frames.size(), tr.frames.size());
}

TEST(Engine, RandomEgoIsSeeded) {
  const auto s = synth::quiet_corpus(1, 2).front();
  SimConfig cfg;
  cfg.seed = 9;
  const AgentId a = choose_ego(s.segment, cfg);
  EXPECT_EQ(a, choose_ego(s.segment, cfg));
  EXPECT_TRUE(s.segment.log.tracks.contains(a));
}

TEST(Engine, InvalidConfigRejected) {
  SimConfig cfg;
  cfg.roi_radius = -1;
  EXPECT_THROW(validate(cfg), Error);
  cfg = {};
  cfg.horizon = 0;
  EXPECT_THROW(validate(cfg), Error);
}

}  // namespace
}  // namespace litsim
