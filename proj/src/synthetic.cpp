#include "litsim/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "litsim/error.hpp"
#include "litsim/geometry.hpp"

namespace litsim::synth {

namespace {

std::vector<Vec2> straight(Vec2 from, Vec2 to, double spacing) {
  const double len = distance(from, to);
  const int n = std::max(1, static_cast<int>(std::ceil(len / spacing)));
  std::vector<Vec2> pts;
  for (int i = 0; i <= n; ++i) pts.push_back(lerp(from, to, static_cast<double>(i) / n));
  return pts;
}

std::vector<Vec2> arc(Vec2 center, double radius, double a0, double a1, int samples) {
  std::vector<Vec2> pts;
  for (int i = 0; i <= samples; ++i) {
    const double a = a0 + (a1 - a0) * i / samples;
    pts.push_back(center + Vec2{std::cos(a), std::sin(a)} * radius);
  }
  return pts;
}

Lane make_lane(LaneId id, std::vector<Vec2> centerline, double width) {
  Lane l;
  l.id = id;
  l.centerline = std::move(centerline);
  l.width = width;
  return l;
}

/// Infinite straight path through `p` along `heading` (2 km each way).
std::vector<Vec2> line_through(Vec2 p, double heading) {
  const Vec2 h = heading_vector(heading);
  return {p - h * 2000.0, p + h * 2000.0};
}

Segment to_segment(std::vector<TrackHistory> tracks, HDMap map) {
  LogScenario log;
  log.map = std::move(map);
  log.tick_hz = kTickHz;
  log.duration_steps = kSegmentSteps;
  for (auto& t : tracks) {
    if (t.states.empty()) continue;
    const AgentId id = t.id;
    log.tracks.emplace(id, std::move(t));
  }
  return make_segment(log, 0);
}

/// Clips a track to ticks [0, kSegmentSteps) and to |x|,|y| inside `bound`,
/// keeping only the first contiguous run.
TrackHistory clip(const TrackHistory& t, double x_min, double x_max, double y_min, double y_max) {
  TrackHistory out;
  out.id = t.id;
  bool started = false;
  for (std::size_t i = 0; i < t.states.size(); ++i) {
    const Tick tick = t.first_step + static_cast<Tick>(i);
    const auto& s = t.states[i];
    const bool inside = tick >= 0 && tick < kSegmentSteps && s.x >= x_min && s.x <= x_max &&
                        s.y >= y_min && s.y <= y_max;
    if (inside) {
      if (!started) {
        out.first_step = tick;
        started = true;
      }
      out.states.push_back(s);
    } else if (started) {
      break;
    }
  }
  return out;
}

}  // namespace

HDMap highway_map(int lanes, double length, double lane_width) {
  if (lanes < 1) throw Error(ErrorCode::kInvalidArgument, "highway needs at least one lane");
  HDMap map;
  for (int i = 1; i <= lanes; ++i) {
    const double y = (i - 1) * lane_width;
    Lane l = make_lane(i, straight({-150.0, y}, {length, y}, 10.0), lane_width);
    l.left_marking = straight({-150.0, y + 0.5 * lane_width}, {length, y + 0.5 * lane_width}, 10.0);
    l.right_marking = straight({-150.0, y - 0.5 * lane_width}, {length, y - 0.5 * lane_width}, 10.0);
    map.lanes.push_back(std::move(l));
    if (i > 1) {
      map.adjacency.push_back({i - 1, i, LaneRelation::kLeft});
      map.adjacency.push_back({i, i - 1, LaneRelation::kRight});
    }
  }
  map.road_edges.push_back(straight({-150.0, -0.5 * lane_width}, {length, -0.5 * lane_width}, 10.0));
  const double top = (lanes - 0.5) * lane_width;
  map.road_edges.push_back(straight({-150.0, top}, {length, top}, 10.0));
  return map;
}

HDMap intersection_map() {
  constexpr double w = kLaneWidth;
  constexpr double h = 0.5 * kLaneWidth;
  constexpr double box = 8.0;
  constexpr double far = 200.0;
  constexpr double pi = std::numbers::pi;
  HDMap map;
  using namespace lanes;
  map.lanes.push_back(make_lane(kNorthApproach, straight({h, -far}, {h, -box}, 2.0), w));
  map.lanes.push_back(make_lane(kNorthThrough, straight({h, -box}, {h, box}, 2.0), w));
  map.lanes.push_back(make_lane(kNorthExit, straight({h, box}, {h, far}, 2.0), w));
  map.lanes.push_back(make_lane(kNorthLeft, arc({-box, -box}, box + h, 0.0, 0.5 * pi, 16), w));
  map.lanes.push_back(make_lane(kWestExit, straight({-box, h}, {-far, h}, 2.0), w));
  map.lanes.push_back(make_lane(kSouthApproach, straight({-h, far}, {-h, box}, 2.0), w));
  map.lanes.push_back(make_lane(kSouthThrough, straight({-h, box}, {-h, -box}, 2.0), w));
  map.lanes.push_back(make_lane(kSouthExit, straight({-h, -box}, {-h, -far}, 2.0), w));
  map.lanes.push_back(make_lane(kWestApproach, straight({far, h}, {box, h}, 2.0), w));
  map.lanes.push_back(make_lane(kWestThrough, straight({box, h}, {-box, h}, 2.0), w));
  map.lanes.push_back(make_lane(kEastApproach, straight({-far, -h}, {-box, -h}, 2.0), w));
  map.lanes.push_back(make_lane(kEastThrough, straight({-box, -h}, {box, -h}, 2.0), w));
  map.lanes.push_back(make_lane(kEastExit, straight({box, -h}, {far, -h}, 2.0), w));
  map.adjacency = {
      {kNorthApproach, kNorthThrough, LaneRelation::kSuccessor},
      {kNorthApproach, kNorthLeft, LaneRelation::kSuccessor},
      {kNorthThrough, kNorthExit, LaneRelation::kSuccessor},
      {kNorthLeft, kWestExit, LaneRelation::kSuccessor},
      {kSouthApproach, kSouthThrough, LaneRelation::kSuccessor},
      {kSouthThrough, kSouthExit, LaneRelation::kSuccessor},
      {kWestApproach, kWestThrough, LaneRelation::kSuccessor},
      {kWestThrough, kWestExit, LaneRelation::kSuccessor},
      {kEastApproach, kEastThrough, LaneRelation::kSuccessor},
      {kEastThrough, kEastExit, LaneRelation::kSuccessor},
  };
  return map;
}

TrackHistory track_along(AgentId id, Tick first, const std::vector<Vec2>& path, double s0,
                         const std::vector<double>& speeds, double width, double length) {
  TrackHistory t;
  t.id = id;
  t.first_step = first;
  double s = s0;
  for (std::size_t k = 0; k < speeds.size(); ++k) {
    if (k > 0) s += 0.5 * (speeds[k - 1] + speeds[k]) * kTickSeconds;
    const Vec2 p = polyline_point_at(path, s);
    t.states.push_back(make_state(p.x, p.y, width, length, polyline_heading_at(path, s), speeds[k]));
  }
  return t;
}

std::vector<double> speed_profile(int ticks, double x_start, double v0, double x_switch, double v1,
                                  double rate) {
  std::vector<double> v(static_cast<std::size_t>(ticks));
  double x = x_start;
  double cur = v0;
  for (int k = 0; k < ticks; ++k) {
    if (k > 0) {
      const double prev = cur;
      if (x >= x_switch) {
        const double dv = rate * kTickSeconds;
        cur = cur < v1 ? std::min(v1, cur + dv) : std::max(v1, cur - dv);
      }
      x += 0.5 * (prev + cur) * kTickSeconds;
    }
    v[static_cast<std::size_t>(k)] = cur;
  }
  return v;
}

namespace {

std::vector<double> constant(int ticks, double v) { return std::vector<double>(static_cast<std::size_t>(ticks), v); }

/// Track along +x in a highway lane whose x at tick 0 is `x0`.
TrackHistory highway_track(AgentId id, double y, double x0, const std::vector<double>& speeds,
                           double width = 1.8, double length = 4.5) {
  const auto path = line_through({0.0, y}, 0.0);
  return track_along(id, 0, path, x0 + 2000.0, speeds, width, length);
}

}  // namespace

Scenario cut_in(const CutInParams& p) {
  const int lanes = std::max(2, p.lanes);
  const double x_change = 150.0;
  const double t_change = static_cast<double>(p.change_tick) * kTickSeconds;
  const double ego_x0 = x_change - p.ego_speed * t_change;
  const double f_x0 = x_change - p.gap_at_change - p.follower_speed * t_change;
  const double map_len = 1200.0;

  std::vector<TrackHistory> tracks;
  tracks.push_back(highway_track(1, 0.0, ego_x0, constant(kSegmentSteps, p.ego_speed)));
  tracks.push_back(highway_track(
      2, kLaneWidth, f_x0, speed_profile(kSegmentSteps, f_x0, p.follower_speed, p.settle_x, p.ego_speed)));

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  AgentId next = 3;
  auto dims = [&] { return std::pair{1.75 + 0.25 * jitter(rng), 4.2 + 0.8 * jitter(rng)}; };
  for (int lane = 1; lane <= lanes && p.fillers_per_lane > 0; ++lane) {
    const double y = (lane - 1) * kLaneWidth;
    std::vector<double> xs;
    if (lane == 1) {
      // ahead of and behind the ego
      double ahead = ego_x0 + 45.0;
      double behind = ego_x0 - 45.0;
      for (int i = 0; i < p.fillers_per_lane; ++i) {
        if (i % 2 == 0) {
          xs.push_back(ahead);
          ahead += 40.0 + 25.0 * jitter(rng);
        } else {
          xs.push_back(behind);
          behind -= 40.0 + 25.0 * jitter(rng);
        }
      }
    } else if (lane == 2) {
      double ahead = f_x0 + 70.0 + 10.0 * jitter(rng);
      double behind = f_x0 - 75.0 - 10.0 * jitter(rng);
      for (int i = 0; i < p.fillers_per_lane; ++i) {
        if (i % 2 == 0) {
          xs.push_back(ahead);
          ahead += 55.0 + 25.0 * jitter(rng);
        } else {
          xs.push_back(behind);
          behind -= 65.0 + 25.0 * jitter(rng);
        }
      }
    } else {
      double x = ego_x0 + 120.0 * jitter(rng) - 60.0;
      for (int i = 0; i < p.fillers_per_lane; ++i) {
        xs.push_back(x);
        x -= 45.0 + 30.0 * jitter(rng);
      }
    }
    for (double x0 : xs) {
      std::vector<double> v;
      if (lane == 1) {
        v = constant(kSegmentSteps, p.ego_speed);
      } else if (lane == 2) {
        v = speed_profile(kSegmentSteps, x0, p.follower_speed, p.settle_x, p.ego_speed);
      } else {
        v = constant(kSegmentSteps, 26.0 + 2.0 * (lane - 3));
      }
      const auto [wd, ln] = dims();
      tracks.push_back(clip(highway_track(next++, y, x0, v, wd, ln), -150.0, map_len, -10.0, 100.0));
    }
  }

  Scenario s;
  s.name = "cut_in";
  s.segment = to_segment(std::move(tracks), highway_map(lanes, map_len));
  s.ego = 1;
  s.script.kind = EgoPolicyKind::kLaneChange;
  s.script.change_tick = p.change_tick;
  s.script.direction = 1;
  s.targets = {2};
  return s;
}

Scenario unprotected_left(const LeftTurnParams& p) {
  using namespace lanes;
  constexpr double h = 0.5 * kLaneWidth;
  constexpr double box = 8.0;
  const double t0 = static_cast<double>(kSegmentInitSteps) * kTickSeconds;
  // The turn arc (center (-box, -box), radius box + h) meets the southbound
  // center line x = -h at this angle.
  const double theta = std::acos((box - h) / (box + h));
  const Vec2 crossing{-h, -box + (box + h) * std::sin(theta)};
  const double to_crossing = (-box - p.ego_start_y) + (box + h) * theta;
  const double t_cross = t0 + to_crossing / p.ego_speed + p.timing_offset_s;

  const auto north = line_through({h, 0.0}, 0.5 * std::numbers::pi);
  const auto south = line_through({-h, 0.0}, -0.5 * std::numbers::pi);
  const auto east = line_through({0.0, -h}, 0.0);
  const auto west = line_through({0.0, h}, std::numbers::pi);

  std::vector<TrackHistory> tracks;
  // s coordinates on the 4 km lines: s = 2000 + signed distance along heading
  const double ego_s0 = 2000.0 + (p.ego_start_y - p.ego_speed * t0);
  tracks.push_back(track_along(1, 0, north, ego_s0, constant(kSegmentSteps, p.ego_speed)));
  const double onc_s0 = 2000.0 + (-crossing.y - p.oncoming_speed * t_cross);
  tracks.push_back(track_along(2, 0, south, onc_s0, constant(kSegmentSteps, p.oncoming_speed)));

  std::mt19937_64 rng(p.seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  AgentId next = 3;
  for (int i = 0; i < p.fillers; ++i) {
    const double wd = 1.75 + 0.25 * jitter(rng);
    const double ln = 4.2 + 0.8 * jitter(rng);
    TrackHistory t;
    switch (i % 6) {
      case 0: {  // northbound leader / follower
        const double off = (i / 6 % 2 == 0 ? 30.0 : -28.0) * (1 + i / 12);
        t = track_along(next++, 0, north, ego_s0 + off, constant(kSegmentSteps, p.ego_speed), wd, ln);
        break;
      }
      case 1: {  // southbound, well spaced behind the oncoming agent
        t = track_along(next++, 0, south, onc_s0 - 80.0 * (1 + i / 6) - 15.0 * jitter(rng),
                        constant(kSegmentSteps, p.oncoming_speed), wd, ln);
        break;
      }
      case 2: {  // queued at the east approach
        t = track_along(next++, 0, east, 2000.0 - 12.0 - 7.5 * (i / 6), constant(kSegmentSteps, 0.0), wd, ln);
        break;
      }
      case 3: {  // queued at the west approach
        t = track_along(next++, 0, west, 2000.0 - 12.0 - 7.5 * (i / 6), constant(kSegmentSteps, 0.0), wd, ln);
        break;
      }
      case 4: {  // leaving westbound far ahead of the turn
        t = track_along(next++, 0, west, 2000.0 + 90.0 + 40.0 * (i / 6) + 10.0 * jitter(rng),
                        constant(kSegmentSteps, 11.0), wd, ln);
        break;
      }
      default: {  // southbound leader ahead of the oncoming agent
        t = track_along(next++, 0, south, onc_s0 + 60.0 * (1 + i / 6) + 10.0 * jitter(rng),
                        constant(kSegmentSteps, p.oncoming_speed), wd, ln);
        break;
      }
    }
    tracks.push_back(clip(t, -195.0, 195.0, -195.0, 195.0));
  }

  Scenario s;
  s.name = "unprotected_left";
  s.segment = to_segment(std::move(tracks), intersection_map());
  s.ego = 1;
  s.script.kind = EgoPolicyKind::kUnprotectedLeft;
  s.script.turn_goal = {-60.0, h};
  s.targets = {2};
  return s;
}

std::vector<Scenario> conflict_corpus(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) {
    if (i % 2 == 0) {
      CutInParams p;
      p.ego_speed = 18.0 + 4.0 * u(rng);
      p.follower_speed = p.ego_speed + 4.0 + 3.0 * u(rng);
      p.gap_at_change = 10.0 + 4.0 * u(rng);
      p.change_tick = 45 + static_cast<Tick>(20.0 * u(rng));
      p.settle_x = 230.0 + 60.0 * u(rng);
      p.lanes = 4;
      p.fillers_per_lane = 6;
      p.seed = seed * 1000 + static_cast<std::uint64_t>(i);
      out.push_back(cut_in(p));
    } else {
      LeftTurnParams p;
      p.ego_speed = 7.0 + 2.0 * u(rng);
      p.oncoming_speed = 9.0 + 3.0 * u(rng);
      p.ego_start_y = -55.0 - 15.0 * u(rng);
      p.timing_offset_s = 0.2 + 0.5 * u(rng);
      p.fillers = 22;
      p.seed = seed * 1000 + static_cast<std::uint64_t>(i);
      out.push_back(unprotected_left(p));
    }
    out.back().name += "_" + std::to_string(i);
  }
  return out;
}

std::vector<Scenario> quiet_corpus(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Scenario> out;
  for (int i = 0; i < n; ++i) {
    const int lanes = 3;
    std::vector<TrackHistory> tracks;
    AgentId next = 1;
    AgentId ego = 0;
    for (int lane = 1; lane <= lanes; ++lane) {
      const double v = 16.0 + 10.0 * u(rng);
      double x = 500.0 - 30.0 * u(rng);
      while (x > -150.0 - v * kSegmentSteps * kTickSeconds) {
        const double wd = 1.75 + 0.25 * u(rng);
        const double ln = 4.2 + 0.8 * u(rng);
        auto t = clip(highway_track(next, (lane - 1) * kLaneWidth, x, constant(kSegmentSteps, v), wd, ln),
                      -150.0, 1200.0, -10.0, 100.0);
        if (!t.states.empty()) {
          if (lane == 2 && ego == 0 && t.covers(kSegmentInitSteps) &&
              t.at(kSegmentInitSteps).x > 50.0 && t.at(kSegmentInitSteps).x < 250.0) {
            ego = next;
          }
          tracks.push_back(std::move(t));
          ++next;
        }
        x -= 35.0 + 30.0 * u(rng);
      }
    }
    if (ego == 0) ego = tracks.front().id;
    Scenario s;
    s.name = "quiet_" + std::to_string(i);
    s.segment = to_segment(std::move(tracks), highway_map(lanes));
    s.ego = ego;
    s.script.kind = EgoPolicyKind::kReplay;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Segment> constant_velocity_segments(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const HDMap map = highway_map(3);
  std::vector<Segment> out;
  for (int i = 0; i < n; ++i) {
    const int lane = 1 + static_cast<int>(3.0 * u(rng)) % 3;
    const double v = 5.0 + 20.0 * u(rng);
    const double x0 = -140.0 + 100.0 * u(rng);
    std::vector<TrackHistory> tracks{highway_track(1, (lane - 1) * kLaneWidth, x0, constant(kSegmentSteps, v))};
    out.push_back(to_segment(std::move(tracks), map));
  }
  return out;
}

}  // namespace litsim::synth
