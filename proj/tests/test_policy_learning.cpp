#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>

#include "litsim/error.hpp"
#include "litsim/policy_learning.hpp"

namespace litsim {
namespace {

TEST(Reward, DiscriminatorRewardIsMinusLogOneMinusD) {
  EXPECT_NEAR(discriminator_reward(0.0), std::log(2.0), 1e-15);
  EXPECT_NEAR(discriminator_reward(60.0), 60.0, 1e-12);
  EXPECT_GT(discriminator_reward(-60.0), 0.0);
  EXPECT_LT(discriminator_reward(-60.0), 1e-20);
  for (double x = -10; x <= 10; x += 0.25) {
    const double d = 1.0 / (1.0 + std::exp(-x));
    EXPECT_NEAR(discriminator_reward(x), -std::log(1.0 - d), 1e-10) << x;
  }
}

TEST(Reward, AugmentedTerms) {
  const RewardConfig rc;
  EXPECT_DOUBLE_EQ(augmented_reward(rc, 0.5, {}), 0.5);
  TickEvents crash;
  crash.collision = true;
  EXPECT_DOUBLE_EQ(augmented_reward(rc, 0.0, crash), -10.0);
  TickEvents close;
  close.min_gap = 1.0;
  EXPECT_NEAR(augmented_reward(rc, 0.0, close), -0.05, 1e-15);
  TickEvents off;
  off.off_road = true;
  off.forward_m = 2.0;
  EXPECT_NEAR(augmented_reward(rc, 0.0, off), -1.0 + 0.02, 1e-15);
}

TEST(Reward, ValidationRejectsBadWeights) {
  RewardConfig rc;
  rc.collision_penalty = 1.0;
  EXPECT_THROW(rc.validate(), Error);
  rc = {};
  rc.progress_weight = std::nan("");
  EXPECT_THROW(rc.validate(), Error);
  EXPECT_NO_THROW(RewardConfig{}.validate());
}

TEST(Ppo, ClippedSurrogateIdentities) {
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.0, 3.0, 0.2), 3.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, 2.0, 0.2), 1.2 * 2.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, 2.0, 0.2), 0.5 * 2.0);
  EXPECT_DOUBLE_EQ(clipped_surrogate(0.5, -1.0, 0.2), -0.8);
  EXPECT_DOUBLE_EQ(clipped_surrogate(1.5, -1.0, 0.2), -1.5);
}

TEST(Ppo, GaeMatchesHandComputation) {
  RolloutBuffer buf;
  const double values[] = {0.5, 0.2, -0.1, 0.3};
  const double rewards[] = {1.0, 0.0, 2.0, -1.0};
  const bool done[] = {false, true, false, true};
  for (int i = 0; i < 4; ++i) {
    Transition t;
    t.value = values[i];
    t.external_reward = rewards[i];
    t.done = done[i];
    buf.steps.push_back(t);
  }
  RewardConfig rc;
  std::vector<double> adv, ret;
  const double g = 0.9, l = 0.8;
  compute_gae(buf, rc, g, l, adv, ret);
  const double d1 = 0.0 - 0.2;
  const double d0 = 1.0 + g * 0.2 - 0.5;
  const double d3 = -1.0 - 0.3;
  const double d2 = 2.0 + g * 0.3 + 0.1;
  EXPECT_NEAR(adv[1], d1, 1e-15);
  EXPECT_NEAR(adv[0], d0 + g * l * d1, 1e-15);
  EXPECT_NEAR(adv[3], d3, 1e-15);
  EXPECT_NEAR(adv[2], d2 + g * l * d3, 1e-15);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(ret[i], adv[i] + values[i], 1e-15);
}

PolicyParams small_params(std::uint64_t seed) {
  PolicyNetConfig cfg;
  cfg.hidden = cfg.value_hidden = cfg.disc_hidden = 8;
  PolicyParams p(cfg);
  std::mt19937_64 rng(seed);
  p.init(rng);
  std::normal_distribution<double> noise(0.0, 0.2);
  for (Eigen::Index i = 0; i < p.net().values().size(); ++i) p.net().values()(i) += noise(rng);
  for (Eigen::Index i = 0; i < p.disc().values().size(); ++i) p.disc().values()(i) += noise(rng);
  return p;
}

std::vector<double> random_features(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> f(kFeatureSize);
  for (auto& v : f) v = u(rng);
  return f;
}

ActionVec random_action(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  return {u(rng), u(rng), u(rng)};
}

TEST(PolicyNet, LogProbMatchesGaussianDensity) {
  const auto p = small_params(1);
  std::mt19937_64 rng(2);
  const auto f = random_features(rng);
  const auto a = random_action(rng);
  const auto mean = policy_mean(p, f);
  const auto ls = policy_log_std(p);
  double density = 1.0;
  for (int i = 0; i < kActionSize; ++i) {
    const double s = std::exp(ls[i]);
    density *= std::exp(-0.5 * std::pow((a[i] - mean[i]) / s, 2)) / (s * std::sqrt(2 * std::numbers::pi));
  }
  EXPECT_NEAR(log_prob(p, f, a), std::log(density), 1e-12);
}

TEST(PolicyNet, LogStdClamp) {
  PolicyParams p;
  p.net().matrix(p.layout().log_std).setConstant(5.0);
  EXPECT_EQ(policy_log_std(p)[0], kMaxLogStd);
  p.clamp_log_std();
  EXPECT_EQ(p.net().matrix(p.layout().log_std)(2), kMaxLogStd);
  p.net().matrix(p.layout().log_std).setConstant(-9.0);
  p.clamp_log_std();
  EXPECT_EQ(p.net().matrix(p.layout().log_std)(0), kMinLogStd);
}

double fd_check(const std::function<double()>& f, Eigen::VectorXd& params, const nn::Vector& grad) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<Eigen::Index> pick(0, params.size() - 1);
  double worst = 0.0;
  for (int n = 0; n < 20; ++n) {
    const Eigen::Index i = pick(rng);
    const double keep = params(i), h = 1e-6;
    params(i) = keep + h;
    const double up = f();
    params(i) = keep - h;
    const double down = f();
    params(i) = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - grad(i)) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

TEST(Ppo, LossGradientMatchesFiniteDifferences) {
  auto p = small_params(4);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> shift(-0.6, 0.6), adv(-2, 2);
  std::vector<PpoSample> batch;
  for (int i = 0; i < 6; ++i) {
    PpoSample s;
    s.features = random_features(rng);
    s.action = random_action(rng);
    s.old_log_prob = log_prob(p, s.features, s.action) + shift(rng);
    s.advantage = adv(rng);
    s.ret = adv(rng);
    batch.push_back(s);
  }
  PpoConfig cfg;
  cfg.entropy_coef = 0.01;
  nn::Vector grad;
  ppo_loss(p, batch, cfg, &grad);
  ASSERT_EQ(grad.size(), p.net().values().size());
  EXPECT_LT(fd_check([&] { return ppo_loss(p, batch, cfg); }, p.net().values(), grad), 1e-4);
}

TEST(Discriminator, LossGradientMatchesFiniteDifferences) {
  auto p = small_params(8);
  std::mt19937_64 rng(10);
  std::vector<ExpertSample> expert, policy;
  for (int i = 0; i < 5; ++i) expert.push_back({random_features(rng), random_action(rng)});
  for (int i = 0; i < 7; ++i) policy.push_back({random_features(rng), random_action(rng)});
  nn::Vector grad;
  const double loss = discriminator_loss(p, expert, policy, &grad);
  double oracle = 0.0;
  for (const auto& s : expert) oracle += 0.5 / 5 * std::log1p(std::exp(-discriminator_logit(p, s.features, s.action)));
  for (const auto& s : policy) oracle += 0.5 / 7 * std::log1p(std::exp(discriminator_logit(p, s.features, s.action)));
  EXPECT_NEAR(loss, oracle, 1e-12);
  EXPECT_LT(fd_check([&] { return discriminator_loss(p, expert, policy); }, p.disc().values(), grad),
            1e-4);
}

TEST(Expert, AcceleratesOnFreeRoadAndHoldsEquilibrium) {
  PolicyFeatures f;
  f.length = 4.5;
  f.height = 1.8;
  f.velocity = 10.0;
  const auto a = expert_action(f, 20.0);
  EXPECT_GT(a.accel_long, 0.0);
  EXPECT_NEAR(a.yaw_rate, 0.0, 1e-12);
  f.velocity = 20.0;
  EXPECT_NEAR(expert_action(f, 20.0).accel_long, 0.0, 1e-12);
  f.lane_offset = 0.5;
  EXPECT_LT(expert_action(f, 20.0).yaw_rate, 0.0);
}

TEST(Expert, BrakesBehindSlowLead) {
  PolicyFeatures f;
  f.length = 4.5;
  f.height = 1.8;
  f.velocity = 20.0;
  f.neighbors[0] = {8.0, 5.0, 0.0, 0.0};
  EXPECT_LT(expert_action(f, 20.0).accel_long, -1.0);
}

TEST(Expert, HundredEpisodesWithoutCollision) {
  int collisions = -1;
  const auto data = generate_expert_data(EnvConfig{}, 100, 5, &collisions);
  EXPECT_EQ(collisions, 0);
  EXPECT_GT(data.size(), 100u * 50u);
}

TEST(Trainer, SameSeedSameParameters) {
  EnvConfig env;
  env.max_steps = 60;
  const auto expert = generate_expert_data(env, 4, 3);
  PpoConfig cfg;
  cfg.rollout_steps = 64;
  cfg.epochs = 1;
  auto run = [&] {
    PpoTrainer t(small_params(2), expert, cfg, RewardConfig{}, env, 17);
    t.update();
    t.update();
    return t;
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.params().net().values(), b.params().net().values());
  EXPECT_EQ(a.params().disc().values(), b.params().disc().values());
  ASSERT_EQ(a.curve().size(), 2u);
  EXPECT_EQ(a.curve()[1].mean_return, b.curve()[1].mean_return);
}

TEST(PolicyCheckpoint, RoundTripIsExact) {
  const auto p = small_params(12);
  const auto text = serialize_checkpoint(policy_checkpoint(p, 77));
  const auto c = parse_checkpoint(text);
  EXPECT_EQ(c.seed, 77u);
  const auto q = load_policy(c);
  EXPECT_EQ(q.net().values(), p.net().values());
  EXPECT_EQ(q.disc().values(), p.disc().values());
  EXPECT_EQ(serialize_checkpoint(policy_checkpoint(q, 77)), text);
}

}  // namespace
}  // namespace litsim
