#pragma once

#include <array>
#include <map>
#include <optional>
#include <variant>
#include <vector>

#include "litsim/conflict.hpp"
#include "litsim/geometry.hpp"
#include "litsim/scenario.hpp"

namespace litsim {

// ---------------------------------------------------------------------------
// Policy state

/// Log replay (policy L).
struct ReplayMode {
  bool operator==(const ReplayMode&) const = default;
};

/// Conflict-aware takeover (policy C) driven by exactly one conflict record.
struct ConflictAwareMode {
  Vec2 goal;
  bool yield = true;
  Tick takeover_tick = 0;
  Conflict conflict;
  /// Tick at which the opposing agent is predicted to pass the goal.
  Tick opponent_arrival_tick = 0;
  /// Set once the opponent has passed; the arrival tick is frozen from then on.
  bool opponent_passed = false;

  bool operator==(const ConflictAwareMode&) const = default;
};

using AgentMode = std::variant<ReplayMode, ConflictAwareMode>;

inline bool is_replay(const AgentMode& m) { return std::holds_alternative<ReplayMode>(m); }

/// A detected conflict with its yield assignment for this tick.
struct AssignedConflict {
  Conflict conflict;
  AgentId yielder = 0;
  /// True when the pair had no yielder assigned before this tick.
  bool fresh = false;
};

/// Implements the replay/takeover state machine for one agent.
AgentMode mode_transition(AgentId self, const AgentMode& mode, Tick t,
                          const std::vector<AssignedConflict>& conflicts, bool goal_reached);

// ---------------------------------------------------------------------------
// Features and actions

inline constexpr int kMaxNeighbors = 6;
inline constexpr double kNeighborSentinel = 100.0;

struct NeighborFeatures {
  double distance = kNeighborSentinel;  // bumper-to-bumper gap, m
  double velocity = 0.0;
  double relative_angle = 0.0;
  double relative_heading = 0.0;
};

struct PolicyFeatures {
  // core
  double length = 0.0;
  double height = 0.0;
  double velocity = 0.0;
  double acceleration = 0.0;
  // surrounding
  std::array<NeighborFeatures, kMaxNeighbors> neighbors{};
  // road
  double marker_dist_left = 0.0;
  double marker_dist_right = 0.0;
  double road_dist_left = kRoadSentinel;
  double road_dist_right = kRoadSentinel;
  double lane_offset = 0.0;
  double lane_curvature = 0.0;
  double lane_rel_heading = 0.0;
};

inline constexpr int kFeatureSize = 4 + 4 * kMaxNeighbors + 7;

/// Scaled flat vector fed to the learned policy.
std::vector<double> feature_vector(const PolicyFeatures& f);

/// Throws Error(kOffMap) when the agent cannot be projected onto a lane.
PolicyFeatures extract_features(const HDMap& map, const std::map<AgentId, AgentState>& states,
                                AgentId agent, double acceleration = 0.0,
                                double neighbor_radius = 30.0);

struct ControlAction {
  double yaw_rate = 0.0;    // rad/s, |.| <= 0.5
  double accel_long = 0.0;  // m/s^2, [-8, 4]
  double accel_lat = 0.0;   // m/s^2, |.| <= 4

  bool operator==(const ControlAction&) const = default;
};

inline constexpr double kMaxYawRate = 0.5;
inline constexpr double kMinAccel = -8.0;
inline constexpr double kMaxAccel = 4.0;
inline constexpr double kMaxLatAccel = 4.0;

ControlAction clamp_action(ControlAction a);

/// Integrates one tick of unicycle kinematics; speed never goes negative.
AgentState integrate(const AgentState& s, const ControlAction& a, double dt = kTickSeconds);

// ---------------------------------------------------------------------------
// Route planning and the deterministic takeover controller

/// Uniform-cost search over the lane graph (successor edges cost the
/// traversed centerline length, lane changes 10 m), sampled every 2 m and
/// smoothed with bezier_fit. The path ends exactly at `goal`.
BezierPath plan_route(const HDMap& map, const LaneFrame& start, Vec2 goal);
/// Lane sequence chosen by plan_route, start lane first.
std::vector<LaneId> route_lanes(const HDMap& map, const LaneFrame& start, Vec2 goal);

struct YieldDecision {
  AgentId yielder = 0;
  AgentId other = 0;
  int yielder_arrival = 0;  // steps into the horizon
  int other_arrival = 0;
};

struct Approach {
  int step = 0;
  double distance = 0.0;
};
/// Closest approach of the mode-argmax future (or the origin, step 0) to `point`.
Approach closest_approach(const PredictedTrajectory& pred, Vec2 point);

/// Step (1..T) of closest approach to `point`; 0 when the agent is closest now.
int arrival_step(const PredictedTrajectory& pred, Vec2 point);

/// Background yields to the ego; otherwise the later arrival yields and an
/// exact tie goes to the larger id.
YieldDecision decide_yield(const Conflict& conflict, const PredictedTrajectory& first,
                           const PredictedTrajectory& second, AgentId ego);

struct ControllerConfig {
  double yield_margin_s = 1.0;
  double goal_tolerance = 1.5;
  double min_lookahead = 3.0;
  double lookahead_time = 1.0;
  double speed_gain = 1.0;  // 1/s
  /// Yielders keep their front bumper this far short of the cross point
  /// until the opponent has passed.
  double stop_clearance = 1.0;
  /// Handback also waits until speed is within this of the logged speed at
  /// the resync point.
  double handback_speed_tolerance = 2.0;
};

struct TakeoverContext {
  Tick now = 0;
  /// Logged speed at the agent's current position along its log.
  double reference_speed = 0.0;
};

struct TakeoverResult {
  ControlAction action;
  bool infeasible_yield = false;
};

/// Constant deceleration (>= 0) that covers `dist` in exactly `time` without
/// stopping first; only valid when speed * time <= 2 * dist.
double arrival_deceleration(double speed, double dist, double time);

/// Closest neighbor ahead and roughly aligned with the agent, if any.
std::optional<NeighborFeatures> lead_neighbor(const PolicyFeatures& f);

/// Tracks the logged speed (never closer than IDM allows behind a lead),
/// overridden by the constant-deceleration yield profile while the opponent
/// has not cleared the cross point plus the margin.
TakeoverResult takeover_step(const ConflictAwareMode& mode, const BezierPath& path,
                             const AgentState& self, const PolicyFeatures& features,
                             const TakeoverContext& ctx, const ControllerConfig& cfg = {});

/// Pure-pursuit yaw rate toward the point `lookahead` ahead on the path.
double pure_pursuit_yaw_rate(const BezierPath& path, const AgentState& self, double lookahead);

/// Takeover controllers are interchangeable behind this interface.
class TakeoverPolicy {
 public:
  virtual ~TakeoverPolicy() = default;
  virtual TakeoverResult act(const ConflictAwareMode& mode, const BezierPath& path,
                             const AgentState& self, const PolicyFeatures& features,
                             const TakeoverContext& ctx) const = 0;
};

class DeterministicTakeover final : public TakeoverPolicy {
 public:
  explicit DeterministicTakeover(ControllerConfig cfg = {}) : cfg_(cfg) {}
  TakeoverResult act(const ConflictAwareMode& mode, const BezierPath& path, const AgentState& self,
                     const PolicyFeatures& features, const TakeoverContext& ctx) const override {
    return takeover_step(mode, path, self, features, ctx, cfg_);
  }
  const ControllerConfig& config() const { return cfg_; }

 private:
  ControllerConfig cfg_;
};

}  // namespace litsim
