#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "litsim/checkpoint.hpp"
#include "litsim/control.hpp"
#include "litsim/metrics.hpp"
#include "litsim/nn.hpp"

namespace litsim {

inline constexpr int kActionSize = 3;
inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 1.0;

/// Network outputs live in normalized units; multiply by this to get a
/// ControlAction (yaw rate, longitudinal, lateral acceleration).
inline constexpr std::array<double, kActionSize> kActionScale = {kMaxYawRate, 4.0, kMaxLatAccel};

using ActionVec = std::array<double, kActionSize>;

ActionVec normalize_action(const ControlAction& a);
/// Scaled and clamped to the actuator limits.
ControlAction denormalize_action(const ActionVec& u);

struct PolicyNetConfig {
  int hidden = 128;
  int value_hidden = 128;
  int disc_hidden = 128;
  double init_log_std = 0.0;
};

/// Gaussian policy with state-independent log-std, a value head and a
/// discriminator over (features, normalized action).
class PolicyParams {
 public:
  explicit PolicyParams(PolicyNetConfig cfg = {});

  const PolicyNetConfig& config() const { return cfg_; }
  /// Policy mean, log-std and value head.
  nn::ParamSet& net() { return net_; }
  const nn::ParamSet& net() const { return net_; }
  nn::ParamSet& disc() { return disc_; }
  const nn::ParamSet& disc() const { return disc_; }

  void init(std::mt19937_64& rng);
  bool all_finite() const { return net_.all_finite() && disc_.all_finite(); }
  /// Clamps the stored log-std into [kMinLogStd, kMaxLogStd].
  void clamp_log_std();

  struct Layout {
    nn::SliceId pi_w1, pi_b1, pi_w2, pi_b2, log_std;
    nn::SliceId v_w1, v_b1, v_w2, v_b2;
    nn::SliceId d_w1, d_b1, d_w2, d_b2;
  };
  const Layout& layout() const { return layout_; }

 private:
  PolicyNetConfig cfg_;
  nn::ParamSet net_;
  nn::ParamSet disc_;
  Layout layout_{};
};

ActionVec policy_mean(const PolicyParams& p, const std::vector<double>& features);
ActionVec policy_log_std(const PolicyParams& p);
double policy_value(const PolicyParams& p, const std::vector<double>& features);
double log_prob(const PolicyParams& p, const std::vector<double>& features, const ActionVec& u);
double discriminator_logit(const PolicyParams& p, const std::vector<double>& features,
                           const ActionVec& u);

/// -log(1 - sigmoid(logit)), evaluated as softplus(logit).
double discriminator_reward(double logit);
double discriminator_reward(const PolicyParams& p, const std::vector<double>& features,
                            const ActionVec& u);

// ---------------------------------------------------------------------------
// Rewards

struct RewardConfig {
  double imitation_weight = 1.0;
  double collision_penalty = -10.0;  // per event, ends the episode
  double proximity_weight = 0.1;
  double proximity_range = 2.0;  // m
  double off_road_penalty = -1.0;  // per tick
  double progress_weight = 0.01;   // per forward metre

  /// Throws Error(kInvalidArgument) on non-finite weights or a non-negative
  /// collision penalty.
  void validate() const;
};

struct TickEvents {
  bool collision = false;
  bool off_road = false;
  /// Bumper gap to the nearest other vehicle, m.
  double min_gap = kNeighborSentinel;
  double forward_m = 0.0;
};

double external_reward(const RewardConfig& cfg, const TickEvents& e);
double augmented_reward(const RewardConfig& cfg, double imitation, const TickEvents& e);

// ---------------------------------------------------------------------------
// Rollouts

inline constexpr int kMaxEpisodeSteps = 300;

struct Transition {
  std::vector<double> features;
  ActionVec action{};  // normalized
  double imitation_reward = 0.0;
  double external_reward = 0.0;
  double value = 0.0;
  double log_prob = 0.0;
  bool done = false;
};

struct RolloutBuffer {
  std::vector<Transition> steps;
  /// Augmented return of every episode that finished inside this buffer.
  std::vector<double> episode_returns;
  int collisions = 0;
};

struct ExpertSample {
  std::vector<double> features;
  ActionVec action{};
};

/// Two-lane straight road: the controlled agent starts in the right lane
/// with an IDM-driven lead ahead and a second car in the left lane.
struct EnvConfig {
  double lane_width = 3.6;
  double min_speed = 12.0;
  double max_speed = 25.0;
  double min_gap = 25.0;
  double max_gap = 60.0;
  /// Largest |lead speed - agent speed| at the start.
  double speed_spread = 4.0;
  bool with_lead = true;
  int max_steps = kMaxEpisodeSteps;
};

class DrivingEnv {
 public:
  explicit DrivingEnv(EnvConfig cfg = {});

  void reset(std::mt19937_64& rng);
  const std::vector<double>& features() const { return features_; }
  const PolicyFeatures& raw_features() const { return raw_; }
  const AgentState& agent() const { return states_.at(kAgent); }
  double desired_speed() const { return desired_speed_; }
  int steps() const { return steps_; }

  struct StepResult {
    TickEvents events;
    bool done = false;
  };
  StepResult step(const ControlAction& action);

  static constexpr AgentId kAgent = 1;

 private:
  void refresh_features();

  EnvConfig cfg_;
  HDMap map_;
  std::map<AgentId, AgentState> states_;
  std::map<AgentId, double> desired_;
  double desired_speed_ = 0.0;
  double last_accel_ = 0.0;
  int steps_ = 0;
  PolicyFeatures raw_;
  std::vector<double> features_;
};

/// IDM longitudinal control plus centerline tracking.
ControlAction expert_action(const PolicyFeatures& f, double desired_speed,
                            const IdmParams& idm = {});

std::vector<ExpertSample> generate_expert_data(const EnvConfig& env, int n_episodes,
                                               std::uint64_t seed, int* collisions = nullptr);

/// Samples `min_steps` or more transitions, always finishing the last episode.
RolloutBuffer collect_rollout(const PolicyParams& p, const EnvConfig& env, const RewardConfig& rc,
                              int min_steps, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// PPO

struct PpoConfig {
  enum class Optimizer { kSgd, kAdam };
  Optimizer policy_optimizer = Optimizer::kSgd;
  Optimizer disc_optimizer = Optimizer::kAdam;
  double learning_rate = 0.03;
  int batch_size = 32;
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  int epochs = 4;
  int rollout_steps = 320;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double max_grad_norm = 0.5;
  int disc_batch = 32;
};

/// Generalized advantage estimates and returns from the augmented rewards.
void compute_gae(const RolloutBuffer& buf, const RewardConfig& rc, double gamma, double lambda,
                 std::vector<double>& advantages, std::vector<double>& returns);

struct PpoSample {
  std::vector<double> features;
  ActionVec action{};
  double old_log_prob = 0.0;
  double advantage = 0.0;
  double ret = 0.0;
};

/// Clipped-surrogate term min(r A, clip(r, 1 - e, 1 + e) A).
double clipped_surrogate(double ratio, double advantage, double clip);

/// Mean over the batch of -surrogate + value_coef (V - R)^2 - entropy_coef H,
/// with its gradient over net() when `grad` is non-null.
double ppo_loss(const PolicyParams& p, const std::vector<PpoSample>& batch, const PpoConfig& cfg,
                nn::Vector* grad = nullptr);

/// Balanced binary cross-entropy, expert labelled 1, with its gradient over disc().
double discriminator_loss(const PolicyParams& p, const std::vector<ExpertSample>& expert,
                          const std::vector<ExpertSample>& policy, nn::Vector* grad = nullptr);

/// Fraction of correctly classified samples at logit threshold 0.
double discriminator_accuracy(const PolicyParams& p, const std::vector<ExpertSample>& expert,
                              const std::vector<ExpertSample>& policy);

struct UpdateStats {
  int update = 0;
  double mean_return = 0.0;
  double disc_accuracy = 0.0;
};

class PpoTrainer {
 public:
  PpoTrainer(PolicyParams params, std::vector<ExpertSample> expert, PpoConfig cfg, RewardConfig rc,
             EnvConfig env, std::uint64_t seed);

  /// Collects one rollout, updates the discriminator once and runs the
  /// clipped-surrogate epochs. Throws Error(kNonFiniteGradient).
  UpdateStats update();

  const PolicyParams& params() const { return params_; }
  const std::vector<UpdateStats>& curve() const { return curve_; }

 private:
  PolicyParams params_;
  std::vector<ExpertSample> expert_;
  PpoConfig cfg_;
  RewardConfig rc_;
  EnvConfig env_;
  std::mt19937_64 rng_;
  nn::Adam net_opt_;
  nn::Adam disc_opt_;
  std::vector<UpdateStats> curve_;
};

/// Mean augmented return of the stochastic policy over `episodes` episodes,
/// with imitation rewards scored by `scorer`'s discriminator.
double evaluate_return(const PolicyParams& policy, const PolicyParams& scorer, const EnvConfig& env,
                       const RewardConfig& rc, int episodes, std::uint64_t seed);

Checkpoint policy_checkpoint(const PolicyParams& p, std::uint64_t seed);
PolicyParams load_policy(const Checkpoint& c);

/// Takeover driven by the learned policy mean. Steering and the yield
/// ceiling come from the deterministic controller, since the features carry
/// neither the route nor the conflict; the learned acceleration may only be
/// more cautious than that ceiling.
class LearnedTakeover final : public TakeoverPolicy {
 public:
  explicit LearnedTakeover(PolicyParams params, ControllerConfig cfg = {})
      : params_(std::move(params)), fallback_(cfg) {}
  TakeoverResult act(const ConflictAwareMode& mode, const BezierPath& path, const AgentState& self,
                     const PolicyFeatures& features, const TakeoverContext& ctx) const override;

 private:
  PolicyParams params_;
  DeterministicTakeover fallback_;
};

}  // namespace litsim
