#include "litsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "litsim/geometry.hpp"

namespace litsim {

std::string to_string(AuditKind k) {
  switch (k) {
    case AuditKind::kTakeover: return "takeover";
    case AuditKind::kRetarget: return "retarget";
    case AuditKind::kHandback: return "handback";
    case AuditKind::kInfeasibleYield: return "infeasible_yield";
    case AuditKind::kIterationCapHit: return "iteration_cap_hit";
    case AuditKind::kRouteFailure: return "route_failure";
    case AuditKind::kOffMap: return "off_map";
  }
  return "unknown";
}

double idm_accel(double speed, double lead_speed, double gap, const IdmParams& p) {
  if (gap <= 0.0) return -8.0;
  const double free = 1.0 - std::pow(speed / p.desired_speed, p.delta);
  double interaction = 0.0;
  if (std::isfinite(gap)) {
    const double dv = speed - lead_speed;
    const double s_star =
        p.min_gap + speed * p.time_headway + speed * dv / (2.0 * std::sqrt(p.max_accel * p.comfort_decel));
    const double ratio = std::max(0.0, s_star) / gap;
    interaction = ratio * ratio;
  }
  return std::clamp(p.max_accel * (free - interaction), -8.0, 4.0);
}

double ade(const SimTrace& trace, const LogScenario& log, double horizon_s) {
  const Tick end = trace.sim_start + static_cast<Tick>(std::llround(horizon_s * log.tick_hz));
  double total = 0.0;
  int ticks = 0;
  for (Tick t = trace.sim_start; t < end; ++t) {
    const Frame* f = trace.frame_at(t);
    if (!f) break;
    double sum = 0.0;
    int n = 0;
    for (const auto& [id, rec] : f->agents) {
      auto it = log.tracks.find(id);
      if (it == log.tracks.end() || !it->second.covers(t)) continue;
      sum += distance(rec.state.position(), it->second.at(t).position());
      ++n;
    }
    if (n == 0) continue;
    total += sum / n;
    ++ticks;
  }
  return ticks == 0 ? 0.0 : total / ticks;
}

namespace {

double orient(Vec2 a, Vec2 b, Vec2 c) { return cross(b - a, c - a); }

bool on_segment(Vec2 a, Vec2 b, Vec2 p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const double d1 = orient(q1, q2, p1);
  const double d2 = orient(q1, q2, p2);
  const double d3 = orient(p1, p2, q1);
  const double d4 = orient(p1, p2, q2);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) {
    return true;
  }
  return (d1 == 0 && on_segment(q1, q2, p1)) || (d2 == 0 && on_segment(q1, q2, p2)) ||
         (d3 == 0 && on_segment(p1, p2, q1)) || (d4 == 0 && on_segment(p1, p2, q2));
}

bool contains(const std::array<Vec2, 4>& poly, Vec2 p) {
  bool pos = false;
  bool neg = false;
  for (std::size_t i = 0; i < 4; ++i) {
    const double o = orient(poly[i], poly[(i + 1) % 4], p);
    pos = pos || o > 0;
    neg = neg || o < 0;
  }
  return !(pos && neg);
}

}  // namespace

bool polygons_intersect(const std::array<Vec2, 4>& a, const std::array<Vec2, 4>& b) {
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      if (segments_intersect(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
    }
  }
  return contains(a, b[0]) || contains(b, a[0]);
}

std::set<AgentId> colliding_agents(const SimTrace& trace) {
  std::set<AgentId> out;
  for (const auto& f : trace.frames) {
    std::vector<std::pair<AgentId, std::array<Vec2, 4>>> boxes;
    for (const auto& [id, rec] : f.agents) boxes.emplace_back(id, corners(box_of(rec.state)));
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      for (std::size_t j = i + 1; j < boxes.size(); ++j) {
        if (polygons_intersect(boxes[i].second, boxes[j].second)) {
          out.insert(boxes[i].first);
          out.insert(boxes[j].first);
        }
      }
    }
  }
  return out;
}

std::set<AgentId> all_agents(const SimTrace& trace) {
  std::set<AgentId> out;
  for (const auto& f : trace.frames) {
    for (const auto& [id, rec] : f.agents) out.insert(id);
  }
  return out;
}

std::set<AgentId> taken_over_agents(const SimTrace& trace) {
  std::set<AgentId> out;
  for (const auto& e : trace.audit) {
    if (e.kind == AuditKind::kTakeover) out.insert(e.agent);
  }
  return out;
}

double mean_progress(const SimTrace& trace) {
  std::map<AgentId, double> travelled;
  std::map<AgentId, Vec2> last;
  for (const auto& f : trace.frames) {
    for (const auto& [id, rec] : f.agents) {
      auto it = last.find(id);
      if (it != last.end()) travelled[id] += distance(it->second, rec.state.position());
      else travelled[id] = 0.0;
      last[id] = rec.state.position();
    }
  }
  if (travelled.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [id, d] : travelled) sum += d;
  return sum / static_cast<double>(travelled.size());
}

ScenarioMetrics scenario_metrics(const SimTrace& trace, const LogScenario& log,
                                 const std::vector<double>& horizons_s, std::string name) {
  ScenarioMetrics m;
  m.name = std::move(name);
  m.agents = static_cast<int>(all_agents(trace).size());
  m.colliding = static_cast<int>(colliding_agents(trace).size());
  m.taken_over = static_cast<int>(taken_over_agents(trace).size());
  for (double h : horizons_s) m.ade.push_back(ade(trace, log, h));
  m.progress = mean_progress(trace);
  m.infeasible_yields = static_cast<int>(std::count_if(
      trace.audit.begin(), trace.audit.end(), [](const auto& e) { return e.kind == AuditKind::kInfeasibleYield; }));
  return m;
}

MetricsReport aggregate(std::vector<ScenarioMetrics> scenarios, const std::vector<double>& horizons_s) {
  MetricsReport r;
  r.horizons_s = horizons_s;
  r.ade.assign(horizons_s.size(), 0.0);
  int agents = 0;
  int colliding = 0;
  int taken = 0;
  int clean = 0;
  double progress = 0.0;
  for (const auto& s : scenarios) {
    for (std::size_t i = 0; i < horizons_s.size() && i < s.ade.size(); ++i) r.ade[i] += s.ade[i];
    agents += s.agents;
    colliding += s.colliding;
    taken += s.taken_over;
    if (s.colliding == 0) ++clean;
    progress += s.progress * s.agents;
  }
  if (!scenarios.empty()) {
    for (auto& a : r.ade) a /= static_cast<double>(scenarios.size());
    r.reactivity = static_cast<double>(clean) / static_cast<double>(scenarios.size());
  }
  if (agents > 0) {
    r.collision_rate = static_cast<double>(colliding) / agents;
    r.relevant_ratio = static_cast<double>(taken) / agents;
    r.progress = progress / agents;
  }
  r.scenarios = std::move(scenarios);
  return r;
}

}  // namespace litsim
