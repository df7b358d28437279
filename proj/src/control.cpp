#include "litsim/control.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <tuple>

#include "litsim/error.hpp"
#include "litsim/metrics.hpp"

namespace litsim {

// ---------------------------------------------------------------------------
// State machine

namespace {

const AssignedConflict* first_fresh_for(AgentId self, const std::vector<AssignedConflict>& cs) {
  for (const auto& c : cs) {
    if (c.fresh && c.yielder == self && c.conflict.involves(self)) return &c;
  }
  return nullptr;
}

}  // namespace

AgentMode mode_transition(AgentId self, const AgentMode& mode, Tick t,
                          const std::vector<AssignedConflict>& conflicts, bool goal_reached) {
  const AssignedConflict* fresh = first_fresh_for(self, conflicts);
  if (is_replay(mode)) {
    if (!fresh) return mode;
    ConflictAwareMode c;
    c.goal = fresh->conflict.cross_point;
    c.yield = true;
    c.takeover_tick = t;
    c.conflict = fresh->conflict;
    c.opponent_arrival_tick = t + fresh->conflict.first_step;
    return c;
  }
  const auto& cur = std::get<ConflictAwareMode>(mode);
  if (fresh) {
    ConflictAwareMode next = cur;
    next.goal = fresh->conflict.cross_point;
    next.conflict = fresh->conflict;
    next.opponent_arrival_tick = t + fresh->conflict.first_step;
    next.opponent_passed = false;
    return next;
  }
  const bool still_conflicted = std::any_of(conflicts.begin(), conflicts.end(), [&](const auto& c) {
    return c.conflict.involves(self);
  });
  if (goal_reached && !still_conflicted) return ReplayMode{};
  return mode;
}

// ---------------------------------------------------------------------------
// Features

std::vector<double> feature_vector(const PolicyFeatures& f) {
  std::vector<double> v;
  v.reserve(kFeatureSize);
  v.push_back(f.length / 5.0);
  v.push_back(f.height / 2.0);
  v.push_back(f.velocity / 20.0);
  v.push_back(f.acceleration / 4.0);
  for (const auto& n : f.neighbors) {
    v.push_back(n.distance / kNeighborSentinel);
    v.push_back(n.velocity / 20.0);
    v.push_back(n.relative_angle / std::numbers::pi);
    v.push_back(n.relative_heading / std::numbers::pi);
  }
  v.push_back(f.marker_dist_left / 4.0);
  v.push_back(f.marker_dist_right / 4.0);
  v.push_back(f.road_dist_left / kRoadSentinel);
  v.push_back(f.road_dist_right / kRoadSentinel);
  v.push_back(f.lane_offset / 2.0);
  v.push_back(f.lane_curvature * 10.0);
  v.push_back(f.lane_rel_heading);
  return v;
}

PolicyFeatures extract_features(const HDMap& map, const std::map<AgentId, AgentState>& states,
                                AgentId agent, double acceleration, double neighbor_radius) {
  auto it = states.find(agent);
  if (it == states.end()) {
    throw Error(ErrorCode::kInvalidArgument, "agent " + std::to_string(agent) + " has no state");
  }
  const AgentState& self = it->second;
  auto proj = try_project_to_lane(map, self.position(), self.yaw);
  if (!proj) {
    throw Error(ErrorCode::kOffMap, "agent " + std::to_string(agent) + " is off the map");
  }

  PolicyFeatures f;
  f.length = self.length;
  f.height = self.width;
  f.velocity = self.speed;
  f.acceleration = acceleration;

  std::vector<std::pair<double, AgentId>> near;
  for (const auto& [id, s] : states) {
    if (id == agent) continue;
    const double d = distance(self.position(), s.position());
    if (d <= neighbor_radius) near.emplace_back(d, id);
  }
  std::sort(near.begin(), near.end());
  for (std::size_t i = 0; i < near.size() && i < static_cast<std::size_t>(kMaxNeighbors); ++i) {
    const AgentState& n = states.at(near[i].second);
    const Vec2 delta = n.position() - self.position();
    auto& out = f.neighbors[i];
    out.distance = std::max(0.0, near[i].first - 0.5 * (self.length + n.length));
    out.velocity = n.speed;
    out.relative_angle = wrap_angle(std::atan2(delta.y, delta.x) - self.yaw);
    out.relative_heading = wrap_angle(n.yaw - self.yaw);
  }

  f.marker_dist_left = proj->marker_left;
  f.marker_dist_right = proj->marker_right;
  f.road_dist_left = proj->road_left;
  f.road_dist_right = proj->road_right;
  f.lane_offset = proj->frame.d;
  f.lane_curvature = proj->frame.curvature;
  f.lane_rel_heading = proj->frame.heading_err;
  return f;
}

// ---------------------------------------------------------------------------
// Actions

ControlAction clamp_action(ControlAction a) {
  a.yaw_rate = std::clamp(a.yaw_rate, -kMaxYawRate, kMaxYawRate);
  a.accel_long = std::clamp(a.accel_long, kMinAccel, kMaxAccel);
  a.accel_lat = std::clamp(a.accel_lat, -kMaxLatAccel, kMaxLatAccel);
  return a;
}

AgentState integrate(const AgentState& s, const ControlAction& a, double dt) {
  AgentState n = s;
  n.yaw = wrap_angle(s.yaw + a.yaw_rate * dt);
  n.speed = std::max(0.0, s.speed + a.accel_long * dt);
  n.x = s.x + n.speed * std::cos(n.yaw) * dt;
  n.y = s.y + n.speed * std::sin(n.yaw) * dt;
  return n;
}

// ---------------------------------------------------------------------------
// Routing

namespace {

constexpr double kLaneChangeLength = 10.0;
constexpr double kWaypointSpacing = 2.0;

struct RouteNode {
  LaneId lane = 0;
  double entry_s = 0.0;
  LaneRelation via = LaneRelation::kSuccessor;
};

struct GoalCandidate {
  LaneId lane = 0;
  double s = 0.0;
};

std::vector<GoalCandidate> goal_candidates(const HDMap& map, Vec2 goal) {
  std::vector<GoalCandidate> on_lane;
  std::vector<std::pair<double, GoalCandidate>> near;
  for (const auto& lane : map.lanes) {
    const auto p = project_to_polyline(lane.centerline, goal);
    if (std::abs(p.d) <= 0.5 * lane.width + 1e-9 && p.distance <= 0.5 * lane.width + 1e-9) {
      on_lane.push_back({lane.id, p.s});
    } else if (p.distance <= 20.0) {
      near.push_back({p.distance, {lane.id, p.s}});
    }
  }
  if (!on_lane.empty()) return on_lane;
  std::sort(near.begin(), near.end(), [](const auto& a, const auto& b) {
    return std::tie(a.first, a.second.lane) < std::tie(b.first, b.second.lane);
  });
  std::vector<GoalCandidate> out;
  if (!near.empty()) out.push_back(near.front().second);
  return out;
}

Vec2 lane_normal(const std::vector<Vec2>& poly, double s) {
  const double h = polyline_heading_at(poly, s);
  return {-std::sin(h), std::cos(h)};
}

struct Route {
  std::vector<RouteNode> nodes;
  GoalCandidate goal;
};

Route search(const HDMap& map, const LaneFrame& start, Vec2 goal) {
  const Lane* start_lane = map.find_lane(start.lane_id);
  if (!start_lane) {
    throw Error(ErrorCode::kNoRoute, "start lane " + std::to_string(start.lane_id) + " not in map");
  }
  const auto goals = goal_candidates(map, goal);
  if (goals.empty()) throw Error(ErrorCode::kNoRoute, "goal is not near any lane");

  struct Entry {
    double cost;
    LaneId lane;
    bool operator>(const Entry& o) const { return std::tie(cost, lane) > std::tie(o.cost, o.lane); }
  };
  std::map<LaneId, double> cost;
  std::map<LaneId, RouteNode> node;
  std::map<LaneId, LaneId> parent;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
  cost[start.lane_id] = 0.0;
  node[start.lane_id] = {start.lane_id, start.s, LaneRelation::kSuccessor};
  open.push({0.0, start.lane_id});
  std::set<LaneId> done;
  while (!open.empty()) {
    const Entry e = open.top();
    open.pop();
    if (!done.insert(e.lane).second) continue;
    const Lane& lane = *map.find_lane(e.lane);
    const double entry_s = node[e.lane].entry_s;
    const double len = polyline_length(lane.centerline);
    for (const auto& edge : map.adjacency) {
      if (edge.from != e.lane || done.contains(edge.to)) continue;
      const Lane* to = map.find_lane(edge.to);
      if (!to) continue;
      double step = 0.0;
      double to_s = 0.0;
      if (edge.relation == LaneRelation::kSuccessor) {
        step = std::max(0.0, len - entry_s);
      } else {
        const Vec2 here = polyline_point_at(lane.centerline, std::min(entry_s, len));
        to_s = project_to_polyline(to->centerline, here).s + kLaneChangeLength;
        if (to_s > polyline_length(to->centerline)) continue;
        step = kLaneChangeLength;
      }
      const double c = e.cost + step;
      auto it = cost.find(edge.to);
      if (it == cost.end() || c < it->second) {
        cost[edge.to] = c;
        node[edge.to] = {edge.to, to_s, edge.relation};
        parent[edge.to] = e.lane;
        open.push({c, edge.to});
      }
    }
  }

  double best = std::numeric_limits<double>::infinity();
  const GoalCandidate* chosen = nullptr;
  for (const auto& g : goals) {
    auto it = cost.find(g.lane);
    if (it == cost.end()) continue;
    const double entry_s = node[g.lane].entry_s;
    if (g.s < entry_s - 1e-6 && !(g.lane == start.lane_id && it->second == 0.0)) continue;
    const double total = it->second + std::max(0.0, g.s - entry_s);
    if (total < best) {
      best = total;
      chosen = &g;
    }
  }
  if (!chosen) throw Error(ErrorCode::kNoRoute, "goal is unreachable from lane " + std::to_string(start.lane_id));

  Route r;
  r.goal = *chosen;
  for (LaneId id = chosen->lane;;) {
    r.nodes.push_back(node[id]);
    auto p = parent.find(id);
    if (p == parent.end()) break;
    id = p->second;
  }
  std::reverse(r.nodes.begin(), r.nodes.end());
  return r;
}

void push_unique(std::vector<Vec2>& pts, Vec2 p) {
  if (pts.empty() || distance(pts.back(), p) > 0.05) pts.push_back(p);
}

void sample_lane(std::vector<Vec2>& pts, const Lane& lane, double from, double to) {
  for (double s = from; s < to; s += kWaypointSpacing) push_unique(pts, polyline_point_at(lane.centerline, s));
  push_unique(pts, polyline_point_at(lane.centerline, to));
}

}  // namespace

std::vector<LaneId> route_lanes(const HDMap& map, const LaneFrame& start, Vec2 goal) {
  std::vector<LaneId> out;
  for (const auto& n : search(map, start, goal).nodes) out.push_back(n.lane);
  return out;
}

BezierPath plan_route(const HDMap& map, const LaneFrame& start, Vec2 goal) {
  const Route r = search(map, start, goal);
  const Lane& first = *map.find_lane(start.lane_id);
  std::vector<Vec2> pts;
  pts.push_back(polyline_point_at(first.centerline, start.s) + lane_normal(first.centerline, start.s) * start.d);
  for (std::size_t i = 0; i < r.nodes.size(); ++i) {
    const Lane& lane = *map.find_lane(r.nodes[i].lane);
    const double from = r.nodes[i].entry_s + (i == 0 ? kWaypointSpacing : 0.0);
    if (i + 1 == r.nodes.size()) {
      if (r.goal.s > from) sample_lane(pts, lane, from, r.goal.s);
    } else if (r.nodes[i + 1].via == LaneRelation::kSuccessor) {
      const double len = polyline_length(lane.centerline);
      if (len > from) sample_lane(pts, lane, from, len);
    }
  }
  push_unique(pts, goal);
  if (pts.size() < 2) {
    // Already at the goal: a short stub along the lane keeps the path well formed.
    pts.push_back(pts.front() + heading_vector(polyline_heading_at(first.centerline, start.s)));
  }
  return bezier_fit(pts, 0.5);
}

// ---------------------------------------------------------------------------
// Yield assignment

Approach closest_approach(const PredictedTrajectory& pred, Vec2 point) {
  Approach out{0, distance(pred.origin.position(), point)};
  if (pred.modes.empty()) return out;
  const auto& steps = pred.point_estimate();
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const double d = distance({steps[k].x, steps[k].y}, point);
    if (d < out.distance) out = {static_cast<int>(k) + 1, d};
  }
  return out;
}

int arrival_step(const PredictedTrajectory& pred, Vec2 point) { return closest_approach(pred, point).step; }

YieldDecision decide_yield(const Conflict& conflict, const PredictedTrajectory& first,
                           const PredictedTrajectory& second, AgentId ego) {
  YieldDecision d;
  const int a1 = arrival_step(first, conflict.cross_point);
  const int a2 = arrival_step(second, conflict.cross_point);
  bool first_yields;
  if (first.agent_id == ego) {
    first_yields = false;
  } else if (second.agent_id == ego) {
    first_yields = true;
  } else if (a1 != a2) {
    first_yields = a1 > a2;
  } else {
    first_yields = first.agent_id > second.agent_id;
  }
  d.yielder = first_yields ? first.agent_id : second.agent_id;
  d.other = first_yields ? second.agent_id : first.agent_id;
  d.yielder_arrival = first_yields ? a1 : a2;
  d.other_arrival = first_yields ? a2 : a1;
  return d;
}

// ---------------------------------------------------------------------------
// Controller

double arrival_deceleration(double speed, double dist, double time) {
  return std::max(0.0, 2.0 * (speed * time - dist) / (time * time));
}

double pure_pursuit_yaw_rate(const BezierPath& path, const AgentState& self, double lookahead) {
  const double len = path.length();
  const double target_s = path.project(self.position()) + lookahead;
  Vec2 target;
  if (target_s <= len) {
    target = path.point_at_distance(target_s);
  } else {
    target = path.evaluate(1.0) + path.tangent(1.0) * (target_s - len);
  }
  const Vec2 delta = target - self.position();
  const double ld = delta.norm();
  if (ld < 1e-9) return 0.0;
  const double alpha = wrap_angle(std::atan2(delta.y, delta.x) - self.yaw);
  return self.speed * 2.0 * std::sin(alpha) / ld;
}

std::optional<NeighborFeatures> lead_neighbor(const PolicyFeatures& f) {
  std::optional<NeighborFeatures> lead;
  for (const auto& n : f.neighbors) {
    if (n.distance >= kNeighborSentinel) continue;
    if (std::abs(n.relative_angle) > 0.35 || std::abs(n.relative_heading) > 0.8) continue;
    // Center distance approximated with the agent's own length for the neighbor.
    const double lateral = (n.distance + f.length) * std::abs(std::sin(n.relative_angle));
    if (lateral > f.height + 0.5) continue;
    if (!lead || n.distance < lead->distance) lead = n;
  }
  return lead;
}

TakeoverResult takeover_step(const ConflictAwareMode& mode, const BezierPath& path,
                             const AgentState& self, const PolicyFeatures& features,
                             const TakeoverContext& ctx, const ControllerConfig& cfg) {
  TakeoverResult out;
  const double v = self.speed;
  const double lookahead = std::max(cfg.min_lookahead, v * cfg.lookahead_time);
  const double to_goal = path.length() - path.project(self.position());

  double accel = cfg.speed_gain * (ctx.reference_speed - v);
  if (const auto lead = lead_neighbor(features)) {
    IdmParams idm;
    idm.desired_speed = std::max(ctx.reference_speed, 1.0);
    const double lead_speed = std::max(0.0, lead->velocity * std::cos(lead->relative_heading));
    accel = std::min(accel, idm_accel(v, lead_speed, lead->distance, idm));
  }
  const double window = static_cast<double>(mode.opponent_arrival_tick - ctx.now) * kTickSeconds +
                        cfg.yield_margin_s;
  if (mode.yield && window > 0.0 && to_goal > 0.0) {
    if (v <= 1e-9) return out;
    // The front bumper, not the center, must hold short of the cross point.
    const double room = std::max(0.0, to_goal - (0.5 * self.length + cfg.stop_clearance));
    if (v * window <= room) {
      accel = std::min(accel, 0.0);
    } else {
      double decel;
      if (v * window <= 2.0 * room) {
        decel = arrival_deceleration(v, room, window);
      } else {
        decel = room > 0.1 ? v * v / (2.0 * room) : std::numeric_limits<double>::infinity();
      }
      if (decel > -kMinAccel) out.infeasible_yield = true;
      accel = std::min(accel, -std::min(decel, -kMinAccel));
    }
  }
  accel = std::clamp(accel, kMinAccel, kMaxAccel);
  if (v + accel * kTickSeconds < 0.0) accel = -v / kTickSeconds;

  out.action.accel_long = accel;
  out.action.yaw_rate = pure_pursuit_yaw_rate(path, self, lookahead);
  out.action = clamp_action(out.action);
  out.action.accel_lat = std::clamp(v * out.action.yaw_rate, -kMaxLatAccel, kMaxLatAccel);
  return out;
}

}  // namespace litsim
