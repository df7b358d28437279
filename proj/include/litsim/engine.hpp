#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "litsim/control.hpp"
#include "litsim/metrics.hpp"
#include "litsim/predictor.hpp"
#include "litsim/trace.hpp"

namespace litsim {

enum class PredictorKind { kReplay, kKinematic, kLearned };
enum class BackgroundMode {
  kLitSim,  // replay with conflict-aware takeover
  kReplay,  // pure log replay
  kIdm,     // every background agent car-follows along its logged path
};
enum class EgoPolicyKind { kReplay, kLaneChange, kUnprotectedLeft, kIdmFollow };

PredictorKind parse_predictor_kind(const std::string& s);
BackgroundMode parse_background_mode(const std::string& s);
EgoPolicyKind parse_ego_policy_kind(const std::string& s);
std::string to_string(PredictorKind k);
std::string to_string(BackgroundMode m);
std::string to_string(EgoPolicyKind k);

struct EgoScript {
  EgoPolicyKind kind = EgoPolicyKind::kReplay;
  /// Absolute tick at which a lane change starts.
  Tick change_tick = 50;
  /// +1 changes to the left neighbor lane, -1 to the right.
  int direction = 1;
  double change_duration_s = 3.0;
  /// Final point of the unprotected-left route.
  Vec2 turn_goal;
};

struct SimConfig {
  double roi_radius = 30.0;
  int horizon = kHorizonSteps;
  int history = kHistorySteps;
  int max_iterations = 10;
  std::uint64_t seed = 0;
  /// Random agent present at the first simulated tick when unset.
  std::optional<AgentId> ego;
  EgoScript ego_script;
  PredictorKind predictor = PredictorKind::kKinematic;
  BackgroundMode background = BackgroundMode::kLitSim;
  ControllerConfig controller;
  ConflictOptions conflict;
  IdmParams idm;
  int blend_ticks = 10;
};

/// Throws Error(kInvalidArgument) on out-of-range settings.
void validate(const SimConfig& cfg);

/// Motion of the ego for one tick given everyone's current states.
class EgoPolicy {
 public:
  virtual ~EgoPolicy() = default;
  virtual AgentState step(Tick t, const AgentState& self,
                          const std::map<AgentId, AgentState>& others) = 0;
};

/// Builds the ego policy for `script` at the segment's first simulated tick.
std::unique_ptr<EgoPolicy> scripted_ego(const EgoScript& script, const Segment& seg, AgentId ego,
                                        const IdmParams& idm = {});

struct Models {
  const ModelParams* predictor = nullptr;
  /// Deterministic controller when null.
  const TakeoverPolicy* takeover = nullptr;
};

/// Resolves the ego id: the configured one or a seeded draw among agents
/// present at the first simulated tick.
AgentId choose_ego(const Segment& seg, const SimConfig& cfg);

SimTrace run_segment(const Segment& seg, const SimConfig& cfg, const Models& models = {});

// ---------------------------------------------------------------------------
// Plot-ready exports

/// tick,agent_id,x,y,yaw,speed,width,length,mode,event
void write_trace(const SimTrace& trace, std::ostream& out);
SimTrace read_trace(std::istream& in);
/// tick,first,second,first_step,cross_x,cross_y,penetration,yielder
void write_conflicts(const SimTrace& trace, std::ostream& out);
/// tick,agent,transition,opponent,detail
void write_audit(const SimTrace& trace, std::ostream& out);
std::vector<AuditEvent> read_audit(std::istream& in);
/// tick,first_step,horizon_mean
void write_ego_divergence(const SimTrace& trace, std::ostream& out);

}  // namespace litsim
