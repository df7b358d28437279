#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "litsim/nn.hpp"
#include "litsim/scenario.hpp"

namespace litsim {

struct PredictorConfig {
  int history_steps = kHistorySteps;  // tau
  int horizon_steps = kHorizonSteps;  // T
  double dt = kTickSeconds;
  int modes = 3;  // keep-lane, shift-left, shift-right
  int encoder_hidden = 64;
  int decoder_hidden = 64;
  int lane_width = 16;
  int interaction_width = 32;
  int attention_heads = 1;
  double neighbor_radius = 30.0;

  double learning_rate = 1e-3;
  int lr_decay_every = 10;  // epochs
  double lr_decay_factor = 0.1;
  int epochs = 20;
  int batch_size = 1;
  bool teacher_forcing = true;
  /// Ticks between training anchors inside a segment.
  int anchor_stride = 50;
};

struct PredictedStep {
  double x = 0.0;
  double y = 0.0;
  double sigma = 0.1;  // isotropic, m
};

/// Future of one agent over ticks t+1..t+T, one mean sequence per mode.
struct PredictedTrajectory {
  AgentId agent_id = 0;
  Tick start_tick = 0;   // t, the last observed tick
  AgentState origin;     // observed state at t
  std::vector<std::vector<PredictedStep>> modes;
  std::vector<double> mode_probs;
  /// Horizon cut short by the end of the log (or empty past it).
  bool truncated = false;

  std::size_t best_mode() const;
  /// Mode-argmax mean sequence.
  const std::vector<PredictedStep>& point_estimate() const { return modes[best_mode()]; }
  std::size_t length() const { return modes.empty() ? 0 : modes.front().size(); }
};

/// Single-mode trajectory; convenient for rollouts.
PredictedTrajectory make_single_mode(AgentId id, Tick t, const AgentState& origin,
                                     std::vector<PredictedStep> steps);

/// Logged future from the track. Empty and flagged when t is the track's
/// last tick; truncated and flagged when the log ends inside the horizon.
PredictedTrajectory predict_replay(const TrackHistory& track, Tick t, int horizon);

/// Constant turn rate and velocity rollout from the state at t.
PredictedTrajectory predict_kinematic(const TrackHistory& track, Tick t, int horizon);

/// Mixture negative log-likelihood summed over steps, evaluated in log space.
double nll_loss(const PredictedTrajectory& pred, const std::vector<Vec2>& truth);

// ---------------------------------------------------------------------------
// Learned predictor

/// Model inputs for one target at tick t, already rotated into the target frame.
struct PredictorInput {
  AgentId target = 0;
  Tick tick = 0;
  AgentState current;
  /// tau relative displacements, oldest first; entries with valid=false are padding.
  std::vector<Vec2> history;
  std::vector<bool> history_valid;
  /// Per-agent interaction features (self first, then neighbors in canonical order).
  std::vector<std::vector<double>> agents;
  std::vector<double> lane;
  /// Ground-truth future offsets in the target frame; empty at inference.
  std::vector<Vec2> future;
};

inline constexpr int kAgentFeatures = 7;
inline constexpr int kLaneSamples = 6;
inline constexpr int kLaneFeatures = 3 * kLaneSamples;

/// Flat parameters with named slices for every layer plus the config that
/// fixes their shapes.
class ModelParams {
 public:
  explicit ModelParams(PredictorConfig cfg = {});

  const PredictorConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const nn::ParamSet& params() const { return params_; }

  /// Throws Error(kShapeMismatch) when slices disagree with the config.
  void check_shapes() const;

  struct Layout {
    nn::SliceId enc_wx, enc_bx, enc_wh, enc_bh;
    nn::SliceId lane_w, lane_b;
    nn::SliceId emb_w, emb_b, att_q, att_k, att_v;
    nn::SliceId mode_w, mode_b;
    nn::SliceId dec_init_w, dec_init_b;
    nn::SliceId dec_wx, dec_bx, dec_wh, dec_bh;
    nn::SliceId out_w, out_b, out_skip;
  };
  const Layout& layout() const { return layout_; }

 private:
  PredictorConfig cfg_;
  nn::ParamSet params_;
  Layout layout_{};
};

PredictorInput make_predictor_input(const PredictorConfig& cfg,
                                    const std::map<AgentId, TrackHistory>& histories,
                                    const std::map<AgentId, AgentState>& current,
                                    const HDMap& map, AgentId target, Tick t);

/// Forward pass. With `teacher_forcing` and a non-empty input.future, the
/// decoder is fed ground-truth displacements.
PredictedTrajectory predict_learned(const ModelParams& params, const PredictorInput& input);

PredictedTrajectory predict_learned(const ModelParams& params,
                                    const std::map<AgentId, TrackHistory>& histories,
                                    const std::map<AgentId, AgentState>& current,
                                    const HDMap& map, AgentId target, Tick t);

/// Mixture NLL of input.future under the model, optionally with its gradient
/// with respect to the flat parameter vector.
double learned_nll(const ModelParams& params, const PredictorInput& input, bool teacher_forcing,
                   nn::Vector* grad = nullptr);

std::vector<PredictorInput> build_training_inputs(const std::vector<Segment>& data,
                                                  const PredictorConfig& cfg);

struct PredictorTraining {
  ModelParams model;
  std::uint64_t seed = 0;
  /// Entry 0 is the mean loss before training; entry e the mean loss seen during epoch e.
  std::vector<double> loss_curve;
};

PredictorTraining train_predictor(const std::vector<Segment>& data, const PredictorConfig& cfg,
                                  std::uint64_t seed);
PredictorTraining train_predictor_on(const std::vector<PredictorInput>& inputs,
                                     const PredictorConfig& cfg, std::uint64_t seed);

/// Mean displacement error of the point estimate against input.future.
double average_displacement(const PredictedTrajectory& pred, const PredictorInput& input);

}  // namespace litsim
