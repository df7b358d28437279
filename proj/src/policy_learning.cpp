#include "litsim/policy_learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "litsim/error.hpp"
#include "litsim/geometry.hpp"
#include "litsim/synthetic.hpp"

namespace litsim {

namespace {

using nn::Tape;
using nn::Var;

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

nn::Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const nn::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

nn::Vector to_vector(const ActionVec& a) {
  return Eigen::Map<const nn::Vector>(a.data(), kActionSize);
}

Var mlp(Tape& t, nn::SliceId w1, nn::SliceId b1, nn::SliceId w2, nn::SliceId b2, Var x) {
  return t.affine(w2, b2, t.tanh(t.affine(w1, b1, x)));
}

struct PolicyNodes {
  Var log_prob;
  Var log_std;
  Var value;
};

PolicyNodes policy_graph(Tape& t, const PolicyParams& p, const std::vector<double>& features,
                         const ActionVec& u) {
  const auto& L = p.layout();
  const Var x = t.constant(to_vector(features));
  const Var mean = mlp(t, L.pi_w1, L.pi_b1, L.pi_w2, L.pi_b2, x);
  const Var log_std = t.clamp(t.param(L.log_std), kMinLogStd, kMaxLogStd);
  const Var z = t.mul(t.sub(t.constant(to_vector(u)), mean), t.exp(t.scale(log_std, -1.0)));
  Var lp = t.add(t.scale(t.sum(t.square(z)), -0.5), t.scale(t.sum(log_std), -1.0));
  lp = t.add_scalar(lp, -kActionSize * kHalfLog2Pi);
  const Var value = mlp(t, L.v_w1, L.v_b1, L.v_w2, L.v_b2, x);
  return {lp, log_std, value};
}

Var disc_graph(Tape& t, const PolicyParams& p, const std::vector<double>& features,
               const ActionVec& u) {
  const auto& L = p.layout();
  const Var x = t.concat({t.constant(to_vector(features)), t.constant(to_vector(u))});
  return mlp(t, L.d_w1, L.d_b1, L.d_w2, L.d_b2, x);
}

double mlp_value(const nn::ParamSet& ps, nn::SliceId w1, nn::SliceId b1, nn::SliceId w2,
                 nn::SliceId b2, const nn::Vector& x, nn::Vector* out = nullptr) {
  const nn::Vector h = (ps.matrix(w1) * x + ps.matrix(b1)).array().tanh().matrix();
  const nn::Vector y = ps.matrix(w2) * h + ps.matrix(b2);
  if (out) *out = y;
  return y(0);
}

void clip_norm(nn::Vector& g, double max_norm) {
  const double n = g.norm();
  if (max_norm > 0.0 && n > max_norm) g *= max_norm / n;
}

}  // namespace

ActionVec normalize_action(const ControlAction& a) {
  return {a.yaw_rate / kActionScale[0], a.accel_long / kActionScale[1],
          a.accel_lat / kActionScale[2]};
}

ControlAction denormalize_action(const ActionVec& u) {
  return clamp_action({u[0] * kActionScale[0], u[1] * kActionScale[1], u[2] * kActionScale[2]});
}

// ---------------------------------------------------------------------------
// Parameters

PolicyParams::PolicyParams(PolicyNetConfig cfg) : cfg_(cfg) {
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const auto hv = static_cast<std::size_t>(cfg.value_hidden);
  const auto hd = static_cast<std::size_t>(cfg.disc_hidden);
  const auto f = static_cast<std::size_t>(kFeatureSize);
  const auto a = static_cast<std::size_t>(kActionSize);
  layout_.pi_w1 = net_.add("pi_w1", h, f);
  layout_.pi_b1 = net_.add("pi_b1", h);
  layout_.pi_w2 = net_.add("pi_w2", a, h);
  layout_.pi_b2 = net_.add("pi_b2", a);
  layout_.log_std = net_.add("log_std", a);
  layout_.v_w1 = net_.add("v_w1", hv, f);
  layout_.v_b1 = net_.add("v_b1", hv);
  layout_.v_w2 = net_.add("v_w2", 1, hv);
  layout_.v_b2 = net_.add("v_b2", 1);
  layout_.d_w1 = disc_.add("d_w1", hd, f + a);
  layout_.d_b1 = disc_.add("d_b1", hd);
  layout_.d_w2 = disc_.add("d_w2", 1, hd);
  layout_.d_b2 = disc_.add("d_b2", 1);
  net_.matrix(layout_.log_std).setConstant(std::clamp(cfg.init_log_std, kMinLogStd, kMaxLogStd));
}

void PolicyParams::init(std::mt19937_64& rng) {
  net_.init_uniform(rng);
  disc_.init_uniform(rng);
  // A small output layer keeps the initial mean action near zero.
  net_.matrix(layout_.pi_w2) *= 0.01;
  net_.matrix(layout_.log_std).setConstant(std::clamp(cfg_.init_log_std, kMinLogStd, kMaxLogStd));
}

void PolicyParams::clamp_log_std() {
  auto ls = net_.matrix(layout_.log_std);
  ls = ls.cwiseMax(kMinLogStd).cwiseMin(kMaxLogStd);
}

ActionVec policy_mean(const PolicyParams& p, const std::vector<double>& features) {
  const auto& L = p.layout();
  nn::Vector y;
  mlp_value(p.net(), L.pi_w1, L.pi_b1, L.pi_w2, L.pi_b2, to_vector(features), &y);
  return {y(0), y(1), y(2)};
}

ActionVec policy_log_std(const PolicyParams& p) {
  const auto ls = p.net().matrix(p.layout().log_std);
  ActionVec out{};
  for (int i = 0; i < kActionSize; ++i) out[i] = std::clamp(ls(i), kMinLogStd, kMaxLogStd);
  return out;
}

double policy_value(const PolicyParams& p, const std::vector<double>& features) {
  const auto& L = p.layout();
  return mlp_value(p.net(), L.v_w1, L.v_b1, L.v_w2, L.v_b2, to_vector(features));
}

double log_prob(const PolicyParams& p, const std::vector<double>& features, const ActionVec& u) {
  const ActionVec mean = policy_mean(p, features);
  const ActionVec ls = policy_log_std(p);
  double lp = 0.0;
  for (int i = 0; i < kActionSize; ++i) {
    const double z = (u[i] - mean[i]) * std::exp(-ls[i]);
    lp += -0.5 * z * z - ls[i] - kHalfLog2Pi;
  }
  return lp;
}

double discriminator_logit(const PolicyParams& p, const std::vector<double>& features,
                           const ActionVec& u) {
  const auto& L = p.layout();
  nn::Vector x(kFeatureSize + kActionSize);
  x << to_vector(features), to_vector(u);
  return mlp_value(p.disc(), L.d_w1, L.d_b1, L.d_w2, L.d_b2, x);
}

double discriminator_reward(double logit) { return nn::softplus(logit); }

double discriminator_reward(const PolicyParams& p, const std::vector<double>& features,
                            const ActionVec& u) {
  return discriminator_reward(discriminator_logit(p, features, u));
}

// ---------------------------------------------------------------------------
// Rewards

void RewardConfig::validate() const {
  for (double w : {imitation_weight, collision_penalty, proximity_weight, proximity_range,
                   off_road_penalty, progress_weight}) {
    if (!std::isfinite(w)) throw Error(ErrorCode::kInvalidArgument, "reward weight is not finite");
  }
  if (collision_penalty >= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "collision penalty must be negative");
  }
  if (proximity_range <= 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "proximity range must be positive");
  }
}

double external_reward(const RewardConfig& cfg, const TickEvents& e) {
  double r = cfg.progress_weight * e.forward_m;
  if (e.collision) r += cfg.collision_penalty;
  if (e.off_road) r += cfg.off_road_penalty;
  r -= cfg.proximity_weight * std::max(0.0, 1.0 - e.min_gap / cfg.proximity_range);
  return r;
}

double augmented_reward(const RewardConfig& cfg, double imitation, const TickEvents& e) {
  return cfg.imitation_weight * imitation + external_reward(cfg, e);
}

// ---------------------------------------------------------------------------
// Environment

namespace {

constexpr AgentId kLead = 2;
constexpr AgentId kSide = 3;

}  // namespace

DrivingEnv::DrivingEnv(EnvConfig cfg)
    : cfg_(cfg), map_(synth::highway_map(2, 1500.0, cfg.lane_width)) {}

void DrivingEnv::reset(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> speed(cfg_.min_speed, cfg_.max_speed);
  std::uniform_real_distribution<double> gap(cfg_.min_gap, cfg_.max_gap);
  std::uniform_real_distribution<double> spread(-cfg_.speed_spread, cfg_.speed_spread);
  std::uniform_real_distribution<double> side_x(-40.0, 40.0);

  states_.clear();
  desired_.clear();
  const double v = speed(rng);
  desired_speed_ = speed(rng);
  states_[kAgent] = make_state(0.0, 0.0, 1.8, 4.5, 0.0, v);
  if (cfg_.with_lead) {
    const double lv = std::max(1.0, v + spread(rng));
    states_[kLead] = make_state(gap(rng) + 4.5, 0.0, 1.8, 4.5, 0.0, lv);
    desired_[kLead] = lv;
  }
  const double sv = speed(rng);
  states_[kSide] = make_state(side_x(rng), cfg_.lane_width, 1.8, 4.5, 0.0, sv);
  desired_[kSide] = sv;
  last_accel_ = 0.0;
  steps_ = 0;
  refresh_features();
}

void DrivingEnv::refresh_features() {
  raw_ = extract_features(map_, states_, kAgent, last_accel_);
  features_ = feature_vector(raw_);
}

DrivingEnv::StepResult DrivingEnv::step(const ControlAction& action) {
  const ControlAction a = clamp_action(action);
  for (auto& [id, s] : states_) {
    if (id == kAgent) continue;
    double lead_gap = std::numeric_limits<double>::infinity();
    double lead_speed = s.speed;
    for (const auto& [oid, o] : states_) {
      if (oid == id || std::abs(o.y - s.y) > 0.5 * cfg_.lane_width || o.x <= s.x) continue;
      const double g = o.x - s.x - 0.5 * (o.length + s.length);
      if (g < lead_gap) {
        lead_gap = g;
        lead_speed = o.speed;
      }
    }
    IdmParams idm;
    idm.desired_speed = desired_.at(id);
    s = integrate(s, {0.0, idm_accel(s.speed, lead_speed, lead_gap, idm), 0.0});
  }
  AgentState& self = states_[kAgent];
  const double x0 = self.x;
  self = integrate(self, a);
  last_accel_ = a.accel_long;
  ++steps_;

  StepResult r;
  r.events.forward_m = self.x - x0;
  const OrientedBox box = box_of(self);
  for (const auto& [id, s] : states_) {
    if (id != kAgent && obb_overlap(box, box_of(s))) r.events.collision = true;
  }
  const double lo = -0.5 * cfg_.lane_width;
  const double hi = 1.5 * cfg_.lane_width;
  r.events.off_road = self.y < lo || self.y > hi;
  const bool violation = self.y < lo - cfg_.lane_width || self.y > hi + cfg_.lane_width ||
                         std::abs(self.yaw) > 0.5 * std::numbers::pi;
  try {
    refresh_features();
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kOffMap) throw;
    r.events.off_road = true;
    r.done = true;
    return r;
  }
  for (const auto& n : raw_.neighbors) r.events.min_gap = std::min(r.events.min_gap, n.distance);
  r.done = r.events.collision || violation || steps_ >= cfg_.max_steps;
  return r;
}

ControlAction expert_action(const PolicyFeatures& f, double desired_speed, const IdmParams& idm) {
  IdmParams p = idm;
  p.desired_speed = desired_speed;
  const auto lead = lead_neighbor(f);
  const double accel = lead ? idm_accel(f.velocity, lead->velocity, lead->distance, p)
                            : idm_accel(f.velocity, f.velocity, std::numeric_limits<double>::infinity(), p);
  const double yaw_rate = f.velocity * f.lane_curvature - 2.0 * f.lane_rel_heading -
                          f.lane_offset / std::max(f.velocity, 5.0);
  ControlAction a{yaw_rate, accel, 0.0};
  a = clamp_action(a);
  a.accel_lat = f.velocity * a.yaw_rate;
  return clamp_action(a);
}

std::vector<ExpertSample> generate_expert_data(const EnvConfig& env, int n_episodes,
                                               std::uint64_t seed, int* collisions) {
  if (n_episodes < 1) throw Error(ErrorCode::kInvalidArgument, "need at least one episode");
  std::mt19937_64 rng(seed);
  DrivingEnv e(env);
  std::vector<ExpertSample> out;
  int hits = 0;
  for (int ep = 0; ep < n_episodes; ++ep) {
    e.reset(rng);
    for (;;) {
      const ControlAction a = expert_action(e.raw_features(), e.desired_speed());
      out.push_back({e.features(), normalize_action(a)});
      const auto r = e.step(a);
      if (r.events.collision) ++hits;
      if (r.done) break;
    }
  }
  if (collisions) *collisions = hits;
  return out;
}

RolloutBuffer collect_rollout(const PolicyParams& p, const EnvConfig& env, const RewardConfig& rc,
                              int min_steps, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  DrivingEnv e(env);
  RolloutBuffer buf;
  const ActionVec ls = policy_log_std(p);
  e.reset(rng);
  double ret = 0.0;
  for (;;) {
    Transition tr;
    tr.features = e.features();
    const ActionVec mean = policy_mean(p, tr.features);
    for (int i = 0; i < kActionSize; ++i) tr.action[i] = mean[i] + std::exp(ls[i]) * noise(rng);
    tr.log_prob = log_prob(p, tr.features, tr.action);
    tr.value = policy_value(p, tr.features);
    tr.imitation_reward = discriminator_reward(p, tr.features, tr.action);
    const auto r = e.step(denormalize_action(tr.action));
    tr.external_reward = external_reward(rc, r.events);
    tr.done = r.done;
    if (r.events.collision) ++buf.collisions;
    ret += rc.imitation_weight * tr.imitation_reward + tr.external_reward;
    buf.steps.push_back(std::move(tr));
    if (r.done) {
      buf.episode_returns.push_back(ret);
      ret = 0.0;
      if (static_cast<int>(buf.steps.size()) >= min_steps) break;
      e.reset(rng);
    }
  }
  return buf;
}

// ---------------------------------------------------------------------------
// PPO

void compute_gae(const RolloutBuffer& buf, const RewardConfig& rc, double gamma, double lambda,
                 std::vector<double>& advantages, std::vector<double>& returns) {
  const std::size_t n = buf.steps.size();
  advantages.assign(n, 0.0);
  returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const auto& s = buf.steps[i];
    const double reward = rc.imitation_weight * s.imitation_reward + s.external_reward;
    const double live = s.done ? 0.0 : 1.0;
    const double delta = reward + gamma * next_value * live - s.value;
    next_adv = delta + gamma * lambda * live * next_adv;
    advantages[i] = next_adv;
    returns[i] = next_adv + s.value;
    next_value = s.value;
  }
}

double clipped_surrogate(double ratio, double advantage, double clip) {
  return std::min(ratio * advantage, std::clamp(ratio, 1.0 - clip, 1.0 + clip) * advantage);
}

double ppo_loss(const PolicyParams& p, const std::vector<PpoSample>& batch, const PpoConfig& cfg,
                nn::Vector* grad) {
  if (batch.empty()) throw Error(ErrorCode::kInvalidArgument, "empty PPO batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const double entropy_const = kActionSize * (0.5 + kHalfLog2Pi);
  double total = 0.0;
  for (const auto& s : batch) {
    Tape t(p.net());
    const PolicyNodes g = policy_graph(t, p, s.features, s.action);
    const Var ratio = t.exp(t.add_scalar(g.log_prob, -s.old_log_prob));
    const double r = t.scalar_value(ratio);
    const double clipped = std::clamp(r, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const Var surrogate = r * s.advantage <= clipped * s.advantage
                              ? t.scale(ratio, s.advantage)
                              : t.scale(t.clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), s.advantage);
    const Var value_err = t.square(t.add_scalar(g.value, -s.ret));
    const Var entropy = t.add_scalar(t.sum(g.log_std), entropy_const);
    Var loss = t.add(t.scale(surrogate, -1.0), t.scale(value_err, cfg.value_coef));
    if (cfg.entropy_coef != 0.0) loss = t.add(loss, t.scale(entropy, -cfg.entropy_coef));
    loss = t.scale(loss, inv_n);
    total += t.scalar_value(loss);
    if (grad) t.backward(loss, *grad);
  }
  return total;
}

double discriminator_loss(const PolicyParams& p, const std::vector<ExpertSample>& expert,
                          const std::vector<ExpertSample>& policy, nn::Vector* grad) {
  if (expert.empty() || policy.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "discriminator needs both expert and policy samples");
  }
  double total = 0.0;
  auto accumulate = [&](const std::vector<ExpertSample>& set, double sign) {
    const double w = 0.5 / static_cast<double>(set.size());
    for (const auto& s : set) {
      Tape t(p.disc());
      const Var loss = t.scale(t.softplus(t.scale(disc_graph(t, p, s.features, s.action), sign)), w);
      total += t.scalar_value(loss);
      if (grad) t.backward(loss, *grad);
    }
  };
  accumulate(expert, -1.0);
  accumulate(policy, 1.0);
  return total;
}

double discriminator_accuracy(const PolicyParams& p, const std::vector<ExpertSample>& expert,
                              const std::vector<ExpertSample>& policy) {
  int right = 0;
  for (const auto& s : expert) right += discriminator_logit(p, s.features, s.action) > 0.0;
  for (const auto& s : policy) right += discriminator_logit(p, s.features, s.action) <= 0.0;
  return static_cast<double>(right) / static_cast<double>(expert.size() + policy.size());
}

PpoTrainer::PpoTrainer(PolicyParams params, std::vector<ExpertSample> expert, PpoConfig cfg,
                       RewardConfig rc, EnvConfig env, std::uint64_t seed)
    : params_(std::move(params)),
      expert_(std::move(expert)),
      cfg_(cfg),
      rc_(rc),
      env_(env),
      rng_(seed),
      net_opt_(cfg.learning_rate),
      disc_opt_(cfg.learning_rate) {
  rc_.validate();
  if (expert_.empty()) throw Error(ErrorCode::kInvalidArgument, "no expert samples");
  if (cfg_.batch_size < 1 || cfg_.epochs < 1 || cfg_.rollout_steps < 1) {
    throw Error(ErrorCode::kInvalidArgument, "PPO batch, epochs and rollout length must be positive");
  }
}

UpdateStats PpoTrainer::update() {
  const RolloutBuffer buf = collect_rollout(params_, env_, rc_, cfg_.rollout_steps, rng_);
  UpdateStats stats;
  stats.update = static_cast<int>(curve_.size()) + 1;
  stats.mean_return =
      std::accumulate(buf.episode_returns.begin(), buf.episode_returns.end(), 0.0) /
      static_cast<double>(buf.episode_returns.size());

  // Discriminator: one step on a balanced batch.
  {
    std::uniform_int_distribution<std::size_t> pick_e(0, expert_.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_p(0, buf.steps.size() - 1);
    std::vector<ExpertSample> e, q;
    for (int i = 0; i < cfg_.disc_batch; ++i) {
      e.push_back(expert_[pick_e(rng_)]);
      const auto& s = buf.steps[pick_p(rng_)];
      q.push_back({s.features, s.action});
    }
    stats.disc_accuracy = discriminator_accuracy(params_, e, q);
    nn::Vector g;
    discriminator_loss(params_, e, q, &g);
    if (!g.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, "discriminator gradient");
    if (cfg_.disc_optimizer == PpoConfig::Optimizer::kAdam) {
      disc_opt_.step(params_.disc().values(), g);
    } else {
      params_.disc().values() -= cfg_.learning_rate * g;
    }
  }

  std::vector<double> adv, ret;
  compute_gae(buf, rc_, cfg_.gamma, cfg_.lambda, adv, ret);
  const double n = static_cast<double>(adv.size());
  const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n) + 1e-8;

  std::vector<PpoSample> samples;
  samples.reserve(buf.steps.size());
  for (std::size_t i = 0; i < buf.steps.size(); ++i) {
    const auto& s = buf.steps[i];
    samples.push_back({s.features, s.action, s.log_prob, (adv[i] - mean) / sd, ret[i]});
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto bs = static_cast<std::size_t>(cfg_.batch_size);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng_);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<PpoSample> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) {
        batch.push_back(samples[order[k]]);
      }
      nn::Vector g;
      ppo_loss(params_, batch, cfg_, &g);
      if (!g.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, "policy gradient");
      clip_norm(g, cfg_.max_grad_norm);
      if (cfg_.policy_optimizer == PpoConfig::Optimizer::kAdam) {
        net_opt_.step(params_.net().values(), g);
      } else {
        params_.net().values() -= cfg_.learning_rate * g;
      }
      params_.clamp_log_std();
    }
  }
  if (!params_.all_finite()) throw Error(ErrorCode::kNonFiniteGradient, "parameters left finite range");
  curve_.push_back(stats);
  return stats;
}

double evaluate_return(const PolicyParams& policy, const PolicyParams& scorer, const EnvConfig& env,
                       const RewardConfig& rc, int episodes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  DrivingEnv e(env);
  const ActionVec ls = policy_log_std(policy);
  double total = 0.0;
  for (int ep = 0; ep < episodes; ++ep) {
    e.reset(rng);
    for (;;) {
      const auto f = e.features();
      const ActionVec mean = policy_mean(policy, f);
      ActionVec u{};
      for (int i = 0; i < kActionSize; ++i) u[i] = mean[i] + std::exp(ls[i]) * noise(rng);
      const auto r = e.step(denormalize_action(u));
      total += augmented_reward(rc, discriminator_reward(scorer, f, u), r.events);
      if (r.done) break;
    }
  }
  return total / episodes;
}

Checkpoint policy_checkpoint(const PolicyParams& p, std::uint64_t seed) {
  Checkpoint c;
  c.kind = "policy";
  c.seed = seed;
  const auto& cfg = p.config();
  c.config = {{"hidden", cfg.hidden},
              {"value_hidden", cfg.value_hidden},
              {"disc_hidden", cfg.disc_hidden},
              {"init_log_std", cfg.init_log_std}};
  export_params(p.net(), "policy/", c);
  export_params(p.disc(), "disc/", c);
  return c;
}

PolicyParams load_policy(const Checkpoint& c) {
  if (c.kind != "policy") {
    throw Error(ErrorCode::kShapeMismatch, "checkpoint holds a " + c.kind + ", not a policy");
  }
  PolicyNetConfig cfg;
  try {
    cfg.hidden = c.config.value("hidden", cfg.hidden);
    cfg.value_hidden = c.config.value("value_hidden", cfg.value_hidden);
    cfg.disc_hidden = c.config.value("disc_hidden", cfg.disc_hidden);
    cfg.init_log_std = c.config.value("init_log_std", cfg.init_log_std);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("policy config: ") + e.what());
  }
  PolicyParams p(cfg);
  import_params(c, "policy/", p.net());
  import_params(c, "disc/", p.disc());
  return p;
}

TakeoverResult LearnedTakeover::act(const ConflictAwareMode& mode, const BezierPath& path,
                                    const AgentState& self, const PolicyFeatures& features,
                                    const TakeoverContext& ctx) const {
  TakeoverResult out = fallback_.act(mode, path, self, features, ctx);
  const ControlAction learned = denormalize_action(policy_mean(params_, feature_vector(features)));
  out.action.accel_long = std::min(out.action.accel_long, learned.accel_long);
  return out;
}

}  // namespace litsim
