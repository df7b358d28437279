#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "litsim/engine.hpp"
#include "litsim/scenario.hpp"

namespace litsim::synth {

inline constexpr double kLaneWidth = 3.6;

/// Straight lanes along +x, lane i (1-based) centered at y = (i - 1) * width,
/// spanning x in [-150, length].
HDMap highway_map(int lanes, double length = 1200.0, double lane_width = kLaneWidth);

/// Four-way intersection centered at the origin with through, left-turn and
/// exit lanes; see the lane-id constants below.
HDMap intersection_map();

namespace lanes {
inline constexpr LaneId kNorthApproach = 1;
inline constexpr LaneId kNorthThrough = 2;
inline constexpr LaneId kNorthExit = 3;
inline constexpr LaneId kNorthLeft = 4;
inline constexpr LaneId kWestExit = 5;
inline constexpr LaneId kSouthApproach = 6;
inline constexpr LaneId kSouthThrough = 7;
inline constexpr LaneId kSouthExit = 8;
inline constexpr LaneId kWestApproach = 9;
inline constexpr LaneId kWestThrough = 10;
inline constexpr LaneId kEastApproach = 11;
inline constexpr LaneId kEastThrough = 12;
inline constexpr LaneId kEastExit = 13;
}  // namespace lanes

/// Track that moves along `path` starting at arclength s0 with the given
/// per-tick speeds (one per tick from `first`). Yaw follows the path heading.
TrackHistory track_along(AgentId id, Tick first, const std::vector<Vec2>& path, double s0,
                         const std::vector<double>& speeds, double width = 1.8, double length = 4.5);

/// Speed profile holding v0 until the agent passes x_switch (on a +x path
/// starting at x_start), then ramping to v1 at `rate` m/s^2.
std::vector<double> speed_profile(int ticks, double x_start, double v0, double x_switch, double v1,
                                  double rate = 2.0);

/// Scenario bundle: a segment with the ego and its scripted policy.
struct Scenario {
  std::string name;
  Segment segment;
  AgentId ego = 0;
  EgoScript script;
  /// Agents whose logs the scripted ego is meant to disturb.
  std::vector<AgentId> targets;
};

struct CutInParams {
  double ego_speed = 20.0;
  double follower_speed = 25.0;
  /// Center distance from follower to ego when the lane change starts.
  double gap_at_change = 12.0;
  Tick change_tick = 50;
  /// The follower's log settles to the ego's speed past this x.
  double settle_x = 250.0;
  /// Extra traffic in all lanes (0 keeps the two-agent core).
  int fillers_per_lane = 0;
  int lanes = 2;
  std::uint64_t seed = 1;
};

/// Ego (id 1) merges one lane left in front of a faster logged follower (id 2).
Scenario cut_in(const CutInParams& p = {});

struct LeftTurnParams {
  double ego_speed = 8.0;
  double oncoming_speed = 10.0;
  /// Ego position on the northbound approach at the first simulated tick.
  double ego_start_y = -60.0;
  /// Seconds the oncoming agent's log reaches the crossing after the ego's
  /// turning path would.
  double timing_offset_s = 0.5;
  int fillers = 0;
  std::uint64_t seed = 1;
};

/// Ego (id 1) turns left across a logged oncoming agent (id 2) that goes straight.
Scenario unprotected_left(const LeftTurnParams& p = {});

/// Twenty conflict scenarios alternating cut-ins and unprotected lefts with
/// surrounding traffic.
std::vector<Scenario> conflict_corpus(int n = 20, std::uint64_t seed = 7);

/// Multi-lane constant-speed traffic with generous gaps and late entrants;
/// the ego replays its own log.
std::vector<Scenario> quiet_corpus(int n = 50, std::uint64_t seed = 11);

/// Single-lane segments holding one constant-velocity track each.
std::vector<Segment> constant_velocity_segments(int n, std::uint64_t seed);

}  // namespace litsim::synth
