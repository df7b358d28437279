#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "litsim/error.hpp"
#include "litsim/predictor.hpp"
#include "litsim/synthetic.hpp"
#include "support.hpp"

namespace litsim {
namespace {

using testing::straight_track;

TEST(ReplayPredictor, ReturnsLoggedFutureExactly) {
  const auto track = straight_track(4, 10, 100, 0, 0, 0.3, 7.0);
  const auto p = predict_replay(track, 20, 50);
  ASSERT_EQ(p.length(), 50u);
  EXPECT_FALSE(p.truncated);
  for (int k = 1; k <= 50; ++k) {
    EXPECT_EQ(p.modes[0][k - 1].x, track.at(20 + k).x);
    EXPECT_EQ(p.modes[0][k - 1].y, track.at(20 + k).y);
  }
}

TEST(ReplayPredictor, TruncatesAtEndOfLog) {
  const auto track = straight_track(4, 0, 30, 0, 0, 0, 7.0);
  const auto p = predict_replay(track, 25, 50);
  EXPECT_EQ(p.length(), 4u);
  EXPECT_TRUE(p.truncated);
  const auto last = predict_replay(track, 29, 50);
  EXPECT_EQ(last.length(), 0u);
  EXPECT_TRUE(last.truncated);
}

TEST(KinematicPredictor, StraightLine) {
  const auto track = straight_track(1, 0, 10, 0, 0, 0, 10.0);
  const auto p = predict_kinematic(track, 9, 10);
  const double x9 = 10.0 * 0.9;
  EXPECT_NEAR(p.modes[0].back().x, x9 + 10.0, 1e-9);
  EXPECT_NEAR(p.modes[0].back().y, 0.0, 1e-12);
}

TEST(KinematicPredictor, ConstantTurnMatchesCircle) {
  const double v = 10.0, omega = 0.2;
  TrackHistory t;
  t.id = 1;
  for (int i = 0; i < 6; ++i) {
    const double yaw = omega * 0.1 * i;
    t.states.push_back(make_state(0, 0, 1.8, 4.5, yaw, v));
  }
  const auto p = predict_kinematic(t, 5, 30);
  const double yaw0 = omega * 0.5;
  const double r = v / omega;
  // centre of the turning circle sits r to the left of the start pose
  const Vec2 centre{-r * std::sin(yaw0), r * std::cos(yaw0)};
  for (int k = 1; k <= 30; ++k) {
    const auto& s = p.modes[0][k - 1];
    const double ang = yaw0 + omega * 0.1 * k;
    EXPECT_NEAR(s.x, centre.x + r * std::sin(ang), 1e-9);
    EXPECT_NEAR(s.y, centre.y - r * std::cos(ang), 1e-9);
  }
}

TEST(KinematicPredictor, NeedsTwoStates) {
  const auto track = straight_track(1, 0, 1, 0, 0, 0, 10.0);
  EXPECT_THROW(predict_kinematic(track, 0, 5), Error);
}

TEST(NllLoss, UnitSigmaExactMatchGivesLog2PiPerStep) {
  std::vector<PredictedStep> steps;
  std::vector<Vec2> truth;
  for (int k = 0; k < 7; ++k) {
    steps.push_back({1.0 * k, 2.0, 1.0});
    truth.push_back({1.0 * k, 2.0});
  }
  const auto p = make_single_mode(1, 0, {}, steps);
  EXPECT_NEAR(nll_loss(p, truth), 7 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(NllLoss, MixtureMatchesDirectDensity) {
  PredictedTrajectory p;
  p.modes = {{{0, 0, 0.5}, {1, 0, 0.7}}, {{0, 1, 1.5}, {1, 2, 0.3}}};
  p.mode_probs = {0.3, 0.7};
  const std::vector<Vec2> truth = {{0.2, 0.4}, {1.1, 0.9}};
  double density = 0.0;
  for (int m = 0; m < 2; ++m) {
    double prod = p.mode_probs[m];
    for (int k = 0; k < 2; ++k) {
      const auto& s = p.modes[m][k];
      const double dx = truth[k].x - s.x, dy = truth[k].y - s.y;
      prod *= std::exp(-(dx * dx + dy * dy) / (2 * s.sigma * s.sigma)) /
              (2 * std::numbers::pi * s.sigma * s.sigma);
    }
    density += prod;
  }
  EXPECT_NEAR(nll_loss(p, truth), -std::log(density), 1e-8);
}

TEST(NllLoss, WiderSigmaAtTheMeanCostsMore) {
  const std::vector<Vec2> truth = {{1, 1}, {2, 2}};
  const auto narrow = make_single_mode(1, 0, {}, {{1, 1, 0.5}, {2, 2, 0.5}});
  const auto wide = make_single_mode(1, 0, {}, {{1, 1, 1.0}, {2, 2, 1.0}});
  EXPECT_GT(nll_loss(wide, truth), nll_loss(narrow, truth));
  EXPECT_NEAR(nll_loss(wide, truth) - nll_loss(narrow, truth), 2 * 2 * std::log(2.0), 1e-12);
}

TEST(NllLoss, LengthMismatchThrows) {
  const auto p = make_single_mode(1, 0, {}, {{0, 0, 1}});
  try {
    nll_loss(p, {{0, 0}, {1, 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLengthMismatch);
  }
}

PredictorConfig small_config() {
  PredictorConfig cfg;
  cfg.history_steps = 6;
  cfg.horizon_steps = 5;
  cfg.encoder_hidden = 6;
  cfg.decoder_hidden = 6;
  cfg.lane_width = 4;
  cfg.interaction_width = 4;
  return cfg;
}

struct Fixture {
  HDMap map = synth::highway_map(2);
  std::map<AgentId, TrackHistory> tracks;
  std::map<AgentId, AgentState> current;

  Fixture() {
    tracks[1] = straight_track(1, 0, 40, 0, 0, 0, 12);
    tracks[2] = straight_track(2, 0, 40, 8, 3.6, 0, 10);
    tracks[3] = straight_track(3, 0, 40, -9, 0, 0, 14);
    for (auto& [id, t] : tracks) current[id] = t.at(20);
  }

  PredictorInput input(const PredictorConfig& cfg) const {
    auto in = make_predictor_input(cfg, tracks, current, map, 1, 20);
    const auto& s = current.at(1);
    for (int k = 1; k <= cfg.horizon_steps; ++k) {
      const Vec2 d = tracks.at(1).at(20 + k).position() - s.position();
      in.future.push_back({d.x * std::cos(s.yaw) + d.y * std::sin(s.yaw),
                           -d.x * std::sin(s.yaw) + d.y * std::cos(s.yaw)});
    }
    return in;
  }
};

ModelParams random_model(const PredictorConfig& cfg, std::uint64_t seed) {
  ModelParams m(cfg);
  std::mt19937_64 rng(seed);
  m.params().init_uniform(rng);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (Eigen::Index i = 0; i < m.params().values().size(); ++i) m.params().values()(i) += noise(rng);
  return m;
}

TEST(LearnedPredictor, FreeRunningNllMatchesMixtureNllOfPrediction) {
  const auto cfg = small_config();
  const Fixture fx;
  const auto model = random_model(cfg, 3);
  const auto in = fx.input(cfg);
  const auto pred = predict_learned(model, in);
  std::vector<Vec2> truth;
  for (int k = 1; k <= cfg.horizon_steps; ++k) truth.push_back(fx.tracks.at(1).at(20 + k).position());
  EXPECT_NEAR(learned_nll(model, in, false), nll_loss(pred, truth), 1e-8);
}

TEST(LearnedPredictor, GradientMatchesFiniteDifferences) {
  const auto cfg = small_config();
  const Fixture fx;
  auto model = random_model(cfg, 5);
  const auto in = fx.input(cfg);
  for (bool tf : {true, false}) {
    nn::Vector grad;
    learned_nll(model, in, tf, &grad);
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::size_t> pick(0, model.params().size() - 1);
    for (int n = 0; n < 20; ++n) {
      const auto i = static_cast<Eigen::Index>(pick(rng));
      const double h = 1e-6, keep = model.params().values()(i);
      model.params().values()(i) = keep + h;
      const double up = learned_nll(model, in, tf);
      model.params().values()(i) = keep - h;
      const double down = learned_nll(model, in, tf);
      model.params().values()(i) = keep;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(grad(i), fd, 1e-4 * std::max(1.0, std::abs(fd))) << "param " << i << " tf " << tf;
    }
  }
}

TEST(LearnedPredictor, DeterministicForward) {
  const auto cfg = small_config();
  const Fixture fx;
  const auto model = random_model(cfg, 9);
  const auto a = predict_learned(model, fx.tracks, fx.current, fx.map, 1, 20);
  const auto b = predict_learned(model, fx.tracks, fx.current, fx.map, 1, 20);
  ASSERT_EQ(a.modes.size(), 3u);
  for (std::size_t m = 0; m < a.modes.size(); ++m) {
    EXPECT_EQ(a.mode_probs[m], b.mode_probs[m]);
    for (std::size_t k = 0; k < a.modes[m].size(); ++k) {
      EXPECT_EQ(a.modes[m][k].x, b.modes[m][k].x);
      EXPECT_EQ(a.modes[m][k].y, b.modes[m][k].y);
    }
  }
  double total = 0;
  for (double q : a.mode_probs) total += q;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(LearnedPredictor, PaddedHistoryIsIgnored) {
  const auto cfg = small_config();
  Fixture fx;
  fx.tracks[1] = straight_track(1, 17, 24, 0, 0, 0, 12);
  fx.current[1] = fx.tracks[1].at(20);
  const auto model = random_model(cfg, 2);
  auto in = make_predictor_input(cfg, fx.tracks, fx.current, fx.map, 1, 20);
  EXPECT_EQ(std::count(in.history_valid.begin(), in.history_valid.end(), true), 3);
  const auto base = predict_learned(model, in);
  for (std::size_t k = 0; k < in.history.size(); ++k) {
    if (!in.history_valid[k]) in.history[k] = {123.0, -77.0};
  }
  const auto poked = predict_learned(model, in);
  EXPECT_EQ(base.modes[0].back().x, poked.modes[0].back().x);
  EXPECT_EQ(base.mode_probs[1], poked.mode_probs[1]);
}

TEST(LearnedPredictor, NeighbourOrderDoesNotMatter) {
  const auto cfg = small_config();
  const Fixture fx;
  const auto model = random_model(cfg, 4);
  auto in = make_predictor_input(cfg, fx.tracks, fx.current, fx.map, 1, 20);
  ASSERT_EQ(in.agents.size(), 3u);
  const auto a = predict_learned(model, in);
  std::swap(in.agents[1], in.agents[2]);
  const auto b = predict_learned(model, in);
  for (std::size_t m = 0; m < a.modes.size(); ++m) {
    EXPECT_NEAR(a.mode_probs[m], b.mode_probs[m], 1e-12);
    EXPECT_NEAR(a.modes[m].back().x, b.modes[m].back().x, 1e-10);
    EXPECT_NEAR(a.modes[m].back().y, b.modes[m].back().y, 1e-10);
  }
}

TEST(LearnedPredictor, ShapeMismatchIsReported) {
  ModelParams m(small_config());
  m.params().values().conservativeResize(m.params().values().size() - 1);
  try {
    m.check_shapes();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kShapeMismatch);
  }
}

TEST(LearnedPredictor, TrainingReducesLoss) {
  auto cfg = small_config();
  cfg.epochs = 3;
  cfg.learning_rate = 5e-3;
  const auto data = synth::constant_velocity_segments(4, 21);
  const auto result = train_predictor(data, cfg, 1);
  ASSERT_EQ(result.loss_curve.size(), 4u);
  EXPECT_LT(result.loss_curve.back(), result.loss_curve.front());
  const auto again = train_predictor(data, cfg, 1);
  EXPECT_EQ(again.model.params().values(), result.model.params().values());
}

}  // namespace
}  // namespace litsim
