#pragma once

#include <map>
#include <string>
#include <vector>

#include "litsim/conflict.hpp"
#include "litsim/scenario.hpp"

namespace litsim {

enum class TraceMode : char { kReplay = 'L', kTakeover = 'C', kEgo = 'E', kIdm = 'I' };

struct AgentRecord {
  AgentState state;
  TraceMode mode = TraceMode::kReplay;
};

struct Frame {
  Tick tick = 0;
  std::map<AgentId, AgentRecord> agents;
};

enum class AuditKind {
  kTakeover,
  /// A C-mode agent switched to a newly detected conflict.
  kRetarget,
  kHandback,
  kInfeasibleYield,
  kIterationCapHit,
  kRouteFailure,
  kOffMap,
};

std::string to_string(AuditKind k);

struct AuditEvent {
  Tick tick = 0;
  AgentId agent = 0;
  AuditKind kind = AuditKind::kTakeover;
  AgentId opponent = 0;
  std::string detail;
};

struct ConflictRecord {
  Tick tick = 0;
  Conflict conflict;
  AgentId yielder = 0;
};

/// Gap between the ego prediction made at `tick` and the ego's actual motion.
struct EgoDivergence {
  Tick tick = 0;
  double first_step = 0.0;    // m, error one tick ahead
  double horizon_mean = 0.0;  // m, mean error over the predicted steps
};

/// Closed-loop rollout of one segment. frames[i] holds tick sim_start + i;
/// the first frame is the logged state at sim_start.
struct SimTrace {
  AgentId ego = 0;
  Tick sim_start = 0;
  std::vector<Frame> frames;
  std::vector<ConflictRecord> conflicts;
  std::vector<AuditEvent> audit;
  /// One entry per tick that ran conflict resolution.
  std::vector<EgoDivergence> ego_divergence;

  const Frame* frame_at(Tick t) const {
    if (t < sim_start || t >= sim_start + static_cast<Tick>(frames.size())) return nullptr;
    return &frames[static_cast<std::size_t>(t - sim_start)];
  }
};

}  // namespace litsim
