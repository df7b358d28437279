#pragma once

#include <map>
#include <optional>
#include <vector>

#include "litsim/geometry.hpp"
#include "litsim/predictor.hpp"

namespace litsim {

/// Predicted overlap of two agents. `first` < `second` always.
struct Conflict {
  AgentId first = 0;
  AgentId second = 0;
  int first_step = 1;  // offset into the horizon, 1..T
  Vec2 cross_point;    // midpoint of the two box centers at first_step
  double penetration = 0.0;

  bool involves(AgentId id) const { return first == id || second == id; }
  AgentId other(AgentId id) const { return first == id ? second : first; }
  bool operator==(const Conflict&) const = default;
};

struct AgentDims {
  double width = 1.8;
  double length = 4.5;
};

struct ConflictOptions {
  /// Added to every half extent. The default checks boxes at exact extents.
  double inflation = 0.0;
  /// Check every pair of modes instead of only the most likely one.
  bool all_modes = false;
  /// Circle pre-check per step; never changes the result.
  bool prune = true;
};

/// Heading per step from consecutive means, holding the previous heading
/// (starting from the origin yaw) when a step moves less than 1 mm.
std::vector<double> step_headings(const PredictedTrajectory& pred, std::size_t mode);

std::optional<Conflict> detect_pair(const PredictedTrajectory& a, const PredictedTrajectory& b,
                                    AgentDims dims_a, AgentDims dims_b,
                                    const ConflictOptions& opts = {});

/// All pairwise conflicts sorted by (first_step, first, second).
std::vector<Conflict> detect_all(const std::map<AgentId, PredictedTrajectory>& preds,
                                 const std::map<AgentId, AgentDims>& dims, AgentId ego,
                                 const ConflictOptions& opts = {});

}  // namespace litsim
