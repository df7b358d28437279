#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "litsim/vec2.hpp"

namespace litsim {

using AgentId = std::int64_t;
using LaneId = std::int64_t;
/// Integer step index; wall time only appears at I/O boundaries.
using Tick = std::int64_t;

inline constexpr int kTickHz = 10;
inline constexpr double kTickSeconds = 0.1;
inline constexpr int kHistorySteps = 30;
inline constexpr int kHorizonSteps = 50;
inline constexpr int kSegmentInitSteps = 30;
inline constexpr int kSegmentSimSteps = 250;
inline constexpr int kSegmentSteps = kSegmentInitSteps + kSegmentSimSteps;

/// Pose, extent and speed of one agent at one tick.
struct AgentState {
  double x = 0.0;       // m
  double y = 0.0;       // m
  double width = 1.8;   // m
  double length = 4.5;  // m
  double yaw = 0.0;     // rad, [-pi, pi)
  double speed = 0.0;   // m/s, >= 0

  Vec2 position() const { return {x, y}; }
  bool operator==(const AgentState&) const = default;
};

/// Builds a state with yaw wrapped and the extent/speed invariants checked.
AgentState make_state(double x, double y, double width, double length, double yaw, double speed);
bool is_valid(const AgentState& s);

struct TrackHistory {
  AgentId id = 0;
  Tick first_step = 0;
  std::vector<AgentState> states;

  Tick last_step() const { return first_step + static_cast<Tick>(states.size()) - 1; }
  bool covers(Tick t) const { return t >= first_step && t <= last_step() && !states.empty(); }
  const AgentState& at(Tick t) const { return states[static_cast<std::size_t>(t - first_step)]; }
  bool operator==(const TrackHistory&) const = default;
};

/// True when every per-tick displacement is at most speed * dt + 0.5 m.
bool is_physically_plausible(const TrackHistory& track, double slack = 0.5);

struct Lane {
  LaneId id = 0;
  std::vector<Vec2> centerline;
  std::vector<Vec2> left_marking;
  std::vector<Vec2> right_marking;
  double width = 3.6;
  bool operator==(const Lane&) const = default;
};

enum class LaneRelation { kSuccessor, kLeft, kRight };

struct LaneEdge {
  LaneId from = 0;
  LaneId to = 0;
  LaneRelation relation = LaneRelation::kSuccessor;
  bool operator==(const LaneEdge&) const = default;
};

struct HDMap {
  std::vector<Lane> lanes;
  std::vector<std::vector<Vec2>> road_edges;
  std::vector<LaneEdge> adjacency;

  const Lane* find_lane(LaneId id) const;
  bool empty() const { return lanes.empty(); }
  bool operator==(const HDMap&) const = default;
};

/// Throws Error(kInvalidArgument) on dangling adjacency or degenerate centerlines.
void validate_map(const HDMap& map);

struct LogScenario {
  HDMap map;
  std::map<AgentId, TrackHistory> tracks;
  int tick_hz = kTickHz;
  Tick duration_steps = 0;

  bool operator==(const LogScenario&) const = default;
};

/// A 28 s evaluation slice, rebased so its first tick is 0.
struct Segment {
  LogScenario log;
  Tick source_start = 0;
  int init_steps = kSegmentInitSteps;
  int sim_steps = kSegmentSimSteps;
  /// Agents present at the first simulated tick without a full history window.
  std::set<AgentId> late_entrants;

  Tick sim_start() const { return init_steps; }
  Tick end() const { return init_steps + sim_steps; }
};

/// Logical NGSIM columns mapped to header names.
struct ColumnMap {
  std::string vehicle_id = "Vehicle_ID";
  std::string frame = "Frame_ID";
  std::string local_x = "Local_X";
  std::string local_y = "Local_Y";
  std::string length = "v_Length";
  std::string width = "v_Width";
  std::string velocity = "v_Vel";
  std::string lane_id = "Lane_ID";
  /// Source length unit in meters (NGSIM uses feet).
  double unit_scale = 0.3048;
};

LogScenario parse_ngsim_csv(std::istream& in, const ColumnMap& columns = {}, HDMap map = {});

/// Splits into consecutive 280-step segments, dropping any trailing remainder.
std::vector<Segment> segment_log(const LogScenario& log);
Segment make_segment(const LogScenario& log, Tick start);

void write_canonical_log(const LogScenario& log, std::ostream& sink);
LogScenario read_canonical_log(std::istream& in, HDMap map = {});

void write_map_document(const HDMap& map, std::ostream& sink);
HDMap read_map_document(std::istream& in);

/// Derives yaw from smoothed 3-tick displacements, holding the previous value
/// when the displacement is under 0.05 m.
std::vector<double> derive_yaw(const std::vector<Vec2>& positions);

}  // namespace litsim
