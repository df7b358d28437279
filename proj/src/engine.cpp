#include "litsim/engine.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <set>

#include "litsim/error.hpp"
#include "litsim/text_io.hpp"

namespace litsim {

// ---------------------------------------------------------------------------
// Enum names

PredictorKind parse_predictor_kind(const std::string& s) {
  if (s == "replay") return PredictorKind::kReplay;
  if (s == "kinematic") return PredictorKind::kKinematic;
  if (s == "learned") return PredictorKind::kLearned;
  throw Error(ErrorCode::kInvalidArgument, "unknown predictor '" + s + "'");
}

BackgroundMode parse_background_mode(const std::string& s) {
  if (s == "litsim") return BackgroundMode::kLitSim;
  if (s == "replay") return BackgroundMode::kReplay;
  if (s == "idm") return BackgroundMode::kIdm;
  throw Error(ErrorCode::kInvalidArgument, "unknown background mode '" + s + "'");
}

EgoPolicyKind parse_ego_policy_kind(const std::string& s) {
  if (s == "replay") return EgoPolicyKind::kReplay;
  if (s == "lane-change") return EgoPolicyKind::kLaneChange;
  if (s == "unprotected-left") return EgoPolicyKind::kUnprotectedLeft;
  if (s == "idm") return EgoPolicyKind::kIdmFollow;
  throw Error(ErrorCode::kInvalidArgument, "unknown ego policy '" + s + "'");
}

std::string to_string(PredictorKind k) {
  switch (k) {
    case PredictorKind::kReplay: return "replay";
    case PredictorKind::kKinematic: return "kinematic";
    case PredictorKind::kLearned: return "learned";
  }
  return "?";
}

std::string to_string(BackgroundMode m) {
  switch (m) {
    case BackgroundMode::kLitSim: return "litsim";
    case BackgroundMode::kReplay: return "replay";
    case BackgroundMode::kIdm: return "idm";
  }
  return "?";
}

std::string to_string(EgoPolicyKind k) {
  switch (k) {
    case EgoPolicyKind::kReplay: return "replay";
    case EgoPolicyKind::kLaneChange: return "lane-change";
    case EgoPolicyKind::kUnprotectedLeft: return "unprotected-left";
    case EgoPolicyKind::kIdmFollow: return "idm";
  }
  return "?";
}

void validate(const SimConfig& cfg) {
  if (!(cfg.roi_radius > 0.0)) throw Error(ErrorCode::kInvalidArgument, "roi_radius must be > 0");
  if (cfg.max_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "max_iterations must be >= 1");
  if (cfg.horizon < 1) throw Error(ErrorCode::kInvalidArgument, "horizon must be >= 1");
  if (cfg.history < 2) throw Error(ErrorCode::kInvalidArgument, "history must be >= 2");
  if (cfg.blend_ticks < 1) throw Error(ErrorCode::kInvalidArgument, "blend_ticks must be >= 1");
}

// ---------------------------------------------------------------------------
// Path helpers shared by IDM agents and scripted egos

namespace {

/// Logged positions with a straight 300 m extension along the final heading.
std::vector<Vec2> extended_path(const TrackHistory& track) {
  std::vector<Vec2> pts;
  for (const auto& s : track.states) {
    if (pts.empty() || distance(pts.back(), s.position()) > 1e-6) pts.push_back(s.position());
  }
  const AgentState& last = track.states.back();
  double heading = last.yaw;
  if (pts.size() >= 2) {
    const Vec2 d = pts.back() - pts[pts.size() - 2];
    heading = std::atan2(d.y, d.x);
  }
  if (pts.size() == 1) pts.insert(pts.begin(), pts.front() - heading_vector(heading) * 0.1);
  pts.push_back(pts.back() + heading_vector(heading) * 300.0);
  return pts;
}

struct Lead {
  double gap = std::numeric_limits<double>::infinity();
  double speed = 0.0;
};

Lead find_lead(const std::vector<Vec2>& path, double s_self, const AgentState& self, AgentId self_id,
               const std::map<AgentId, AgentState>& others) {
  Lead lead;
  for (const auto& [id, o] : others) {
    if (id == self_id) continue;
    if (distance(o.position(), self.position()) > 120.0) continue;
    const auto p = project_to_polyline(path, o.position());
    const double ds = p.s - s_self;
    if (ds <= 0.0 || ds > 100.0) continue;
    if (std::abs(p.d) > 0.5 * (self.width + o.width) + 0.3) continue;
    const double gap = ds - 0.5 * (self.length + o.length);
    if (gap < lead.gap) {
      lead.gap = gap;
      lead.speed = std::max(0.0, o.speed * std::cos(wrap_angle(o.yaw - p.heading)));
    }
  }
  return lead;
}

double max_logged_speed(const TrackHistory& track) {
  double v = 1.0;
  for (const auto& s : track.states) v = std::max(v, s.speed);
  return v;
}

/// Arclength of a logged index along extended_path.
double arclength_at_index(const std::vector<Vec2>& path, const TrackHistory& track, std::size_t idx) {
  return project_to_polyline(path, track.states[idx].position()).s;
}

// ---------------------------------------------------------------------------
// Ego policies

class ReplayEgo final : public EgoPolicy {
 public:
  explicit ReplayEgo(const TrackHistory& track) : track_(track) {}
  AgentState step(Tick t, const AgentState& self, const std::map<AgentId, AgentState>&) override {
    if (track_.covers(t + 1)) return track_.at(t + 1);
    AgentState n = self;
    n.x += self.speed * std::cos(self.yaw) * kTickSeconds;
    n.y += self.speed * std::sin(self.yaw) * kTickSeconds;
    return n;
  }

 private:
  const TrackHistory& track_;
};

/// Moves along a fixed path at constant speed, continuing straight past its end.
class PathEgo final : public EgoPolicy {
 public:
  PathEgo(BezierPath path, double speed) : path_(std::move(path)), speed_(speed) {}
  AgentState step(Tick, const AgentState& self, const std::map<AgentId, AgentState>&) override {
    s_ += speed_ * kTickSeconds;
    AgentState n = self;
    const double len = path_.length();
    Vec2 p;
    Vec2 tangent;
    if (s_ <= len) {
      const double u = path_.parameter_at_distance(s_);
      p = path_.evaluate(u);
      tangent = path_.tangent(u);
    } else {
      tangent = path_.tangent(1.0);
      p = path_.evaluate(1.0) + tangent * (s_ - len);
    }
    n.x = p.x;
    n.y = p.y;
    n.yaw = wrap_angle(std::atan2(tangent.y, tangent.x));
    n.speed = speed_;
    return n;
  }

 private:
  BezierPath path_;
  double speed_;
  double s_ = 0.0;
};

class IdmEgo final : public EgoPolicy {
 public:
  IdmEgo(const TrackHistory& track, AgentId id, Tick t0, IdmParams idm)
      : path_(extended_path(track)), id_(id), idm_(idm) {
    idm_.desired_speed = max_logged_speed(track);
    s_ = arclength_at_index(path_, track, static_cast<std::size_t>(t0 - track.first_step));
  }
  AgentState step(Tick, const AgentState& self, const std::map<AgentId, AgentState>& others) override {
    const Lead lead = find_lead(path_, s_, self, id_, others);
    const double a = idm_accel(self.speed, lead.speed, lead.gap, idm_);
    AgentState n = self;
    n.speed = std::max(0.0, self.speed + a * kTickSeconds);
    s_ += n.speed * kTickSeconds;
    const Vec2 p = polyline_point_at(path_, s_);
    n.x = p.x;
    n.y = p.y;
    n.yaw = wrap_angle(polyline_heading_at(path_, s_));
    return n;
  }

 private:
  std::vector<Vec2> path_;
  AgentId id_;
  IdmParams idm_;
  double s_ = 0.0;
};

const Lane* neighbor_lane(const HDMap& map, LaneId from, LaneRelation rel) {
  for (const auto& e : map.adjacency) {
    if (e.from == from && e.relation == rel) return map.find_lane(e.to);
  }
  return nullptr;
}

}  // namespace

std::unique_ptr<EgoPolicy> scripted_ego(const EgoScript& script, const Segment& seg, AgentId ego,
                                        const IdmParams& idm) {
  auto it = seg.log.tracks.find(ego);
  const Tick t0 = seg.sim_start();
  if (it == seg.log.tracks.end() || !it->second.covers(t0)) {
    throw Error(ErrorCode::kEgoMissing, "ego " + std::to_string(ego) + " absent at tick " + std::to_string(t0));
  }
  const TrackHistory& track = it->second;
  const AgentState& s0 = track.at(t0);
  switch (script.kind) {
    case EgoPolicyKind::kReplay:
      return std::make_unique<ReplayEgo>(track);
    case EgoPolicyKind::kIdmFollow:
      return std::make_unique<IdmEgo>(track, ego, t0, idm);
    case EgoPolicyKind::kLaneChange: {
      const HDMap& map = seg.log.map;
      const auto proj = project_to_lane(map, s0.position(), s0.yaw);
      const Lane& own = *map.find_lane(proj.frame.lane_id);
      const Lane* target =
          neighbor_lane(map, own.id, script.direction > 0 ? LaneRelation::kLeft : LaneRelation::kRight);
      if (!target) {
        throw Error(ErrorCode::kInvalidArgument,
                    "lane " + std::to_string(own.id) + " has no neighbor in the requested direction");
      }
      const double v = s0.speed;
      const double s_change =
          proj.frame.s + v * static_cast<double>(std::max<Tick>(0, script.change_tick - t0)) * kTickSeconds;
      std::vector<Vec2> pts{s0.position()};
      for (double s = proj.frame.s + 2.0; s < s_change; s += 2.0) {
        pts.push_back(polyline_point_at(own.centerline, s));
      }
      pts.push_back(polyline_point_at(own.centerline, s_change));
      const Vec2 change_start = pts.back();
      const double s_target = project_to_polyline(target->centerline, change_start).s +
                              std::max(v * script.change_duration_s, 1.0);
      const double end = std::max(polyline_length(target->centerline), s_target + 1.0) + 100.0;
      // Sampling the crossing as densely as the lanes keeps the fitted yaw from overshooting.
      const Vec2 change_end = polyline_point_at(target->centerline, s_target);
      const int n = std::max(1, static_cast<int>(distance(change_start, change_end) / 2.0));
      for (int i = 1; i < n; ++i) pts.push_back(lerp(change_start, change_end, static_cast<double>(i) / n));
      for (double s = s_target; s < end; s += 2.0) pts.push_back(polyline_point_at(target->centerline, s));
      return std::make_unique<PathEgo>(bezier_fit(pts, 0.05), v);
    }
    case EgoPolicyKind::kUnprotectedLeft: {
      const auto proj = project_to_lane(seg.log.map, s0.position(), s0.yaw);
      return std::make_unique<PathEgo>(plan_route(seg.log.map, proj.frame, script.turn_goal), s0.speed);
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown ego policy");
}

AgentId choose_ego(const Segment& seg, const SimConfig& cfg) {
  const Tick t0 = seg.sim_start();
  if (cfg.ego) {
    auto it = seg.log.tracks.find(*cfg.ego);
    if (it == seg.log.tracks.end() || !it->second.covers(t0)) {
      throw Error(ErrorCode::kEgoMissing, "ego " + std::to_string(*cfg.ego) + " absent at tick " +
                                              std::to_string(t0));
    }
    return *cfg.ego;
  }
  std::vector<AgentId> present;
  for (const auto& [id, tr] : seg.log.tracks) {
    if (tr.covers(t0)) present.push_back(id);
  }
  if (present.empty()) throw Error(ErrorCode::kEgoMissing, "no agent present at the first simulated tick");
  std::mt19937_64 rng(cfg.seed);
  return present[static_cast<std::size_t>(rng() % present.size())];
}

// ---------------------------------------------------------------------------
// Simulation

namespace {

using Pair = std::pair<AgentId, AgentId>;

struct Runtime {
  const TrackHistory* track = nullptr;
  bool present = false;
  AgentState state;
  AgentMode mode = ReplayMode{};
  TraceMode trace_mode = TraceMode::kReplay;
  /// Index into track->states of the replayed state.
  long cursor = 0;
  /// Handback blend: offset decays to zero over blend_ticks after resync.
  Vec2 offset;
  int blend_step = 0;
  bool blending = false;
  long takeover_cursor = 0;
  BezierPath path;
  double accel = 0.0;
  bool infeasible_reported = false;
  bool off_map_reported = false;
  std::vector<AgentState> history;
  Tick history_start = 0;
  // IDM background
  std::vector<Vec2> idm_path;
  double idm_s = 0.0;
  double idm_v0 = 0.0;
};

class Simulation {
 public:
  Simulation(const Segment& seg, const SimConfig& cfg, const Models& models)
      : seg_(seg), cfg_(cfg), models_(models), map_(seg.log.map) {
    validate(cfg_);
    ego_ = choose_ego(seg, cfg_);
    ego_policy_ = scripted_ego(cfg_.ego_script, seg, ego_, cfg_.idm);
    if (cfg_.predictor == PredictorKind::kLearned && !models_.predictor) {
      throw Error(ErrorCode::kInvalidArgument, "learned predictor requested without a model");
    }
    takeover_ = models_.takeover ? models_.takeover : &default_takeover_;
    default_takeover_ = DeterministicTakeover(cfg_.controller);
  }

  SimTrace run() {
    const Tick t0 = seg_.sim_start();
    const Tick end = seg_.end();
    for (const auto& [id, tr] : seg_.log.tracks) {
      Runtime& r = agents_[id];
      r.track = &tr;
      r.trace_mode = id == ego_ ? TraceMode::kEgo : TraceMode::kReplay;
      if (tr.covers(t0)) enter(id, r, t0);
    }
    trace_.ego = ego_;
    trace_.sim_start = t0;
    record(t0);
    for (Tick t = t0; t + 1 < end; ++t) {
      if (cfg_.background == BackgroundMode::kLitSim) resolve(t);
      step(t);
      if (cfg_.background == BackgroundMode::kLitSim) handbacks(t + 1);
      record(t + 1);
    }
    measure_ego_divergence();
    return std::move(trace_);
  }

 private:
  void enter(AgentId id, Runtime& r, Tick t) {
    r.present = true;
    r.cursor = static_cast<long>(t - r.track->first_step);
    r.state = r.track->states[static_cast<std::size_t>(r.cursor)];
    const long first = std::max<long>(0, r.cursor - cfg_.history);
    r.history.assign(r.track->states.begin() + first, r.track->states.begin() + r.cursor + 1);
    r.history_start = r.track->first_step + first;
    if (cfg_.background == BackgroundMode::kIdm && id != ego_) {
      r.trace_mode = TraceMode::kIdm;
      r.idm_path = extended_path(*r.track);
      r.idm_s = arclength_at_index(r.idm_path, *r.track, static_cast<std::size_t>(r.cursor));
      r.idm_v0 = max_logged_speed(*r.track);
    }
  }

  std::map<AgentId, AgentState> snapshot() const {
    std::map<AgentId, AgentState> out;
    for (const auto& [id, r] : agents_) {
      if (r.present) out.emplace(id, r.state);
    }
    return out;
  }

  void record(Tick t) {
    Frame f;
    f.tick = t;
    for (const auto& [id, r] : agents_) {
      if (!r.present) continue;
      f.agents.emplace(id, AgentRecord{r.state, r.trace_mode});
    }
    trace_.frames.push_back(std::move(f));
  }

  void audit(Tick t, AgentId id, AuditKind kind, AgentId opponent, std::string detail = {}) {
    trace_.audit.push_back({t, id, kind, opponent, std::move(detail)});
  }

  // --- replay -------------------------------------------------------------

  /// Replayed state `ahead` ticks after the current one, including any
  /// remaining handback blend. Empty when the log has run out.
  std::optional<AgentState> replay_state(const Runtime& r, int ahead) const {
    const long idx = r.cursor + ahead;
    if (idx < 0 || idx >= static_cast<long>(r.track->states.size())) return std::nullopt;
    AgentState s = r.track->states[static_cast<std::size_t>(idx)];
    if (r.blending) {
      const int k = r.blend_step + ahead;
      if (k < cfg_.blend_ticks) {
        const double w = 1.0 - static_cast<double>(k) / cfg_.blend_ticks;
        s.x += w * r.offset.x;
        s.y += w * r.offset.y;
      }
    }
    return s;
  }

  /// Log index with the closest position at or after `from`.
  long resync_index(const Runtime& r, long from, Vec2 p) const {
    long best = std::clamp<long>(from, 0, static_cast<long>(r.track->states.size()) - 1);
    double best_d = std::numeric_limits<double>::infinity();
    for (long i = best; i < static_cast<long>(r.track->states.size()); ++i) {
      const double d = distance(r.track->states[static_cast<std::size_t>(i)].position(), p);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  // --- prediction ---------------------------------------------------------

  TrackHistory history_track(AgentId id, const Runtime& r) const {
    TrackHistory h;
    h.id = id;
    h.first_step = r.history_start;
    h.states = r.history;
    return h;
  }

  PredictedTrajectory predict_ego(Tick t) const {
    const Runtime& r = agents_.at(ego_);
    switch (cfg_.predictor) {
      case PredictorKind::kReplay: {
        if (r.track->covers(t)) return predict_replay(*r.track, t, cfg_.horizon);
        return make_single_mode(ego_, t, r.state, {});
      }
      case PredictorKind::kKinematic:
        return predict_kinematic(history_track(ego_, r), t, cfg_.horizon);
      case PredictorKind::kLearned: {
        std::map<AgentId, TrackHistory> histories;
        for (const auto& [id, a] : agents_) {
          if (a.present) histories.emplace(id, history_track(id, a));
        }
        return predict_learned(*models_.predictor, histories, snapshot(), map_, ego_, t);
      }
    }
    return {};
  }

  double reference_speed(const Runtime& r) const {
    const long idx = resync_index(r, r.takeover_cursor, r.state.position());
    return r.track->states[static_cast<std::size_t>(idx)].speed;
  }

  /// World at `ahead` ticks from now: replayed agents from their logs, the
  /// rest at constant velocity.
  std::map<AgentId, AgentState> projected_world(int ahead) const {
    std::map<AgentId, AgentState> out;
    for (const auto& [id, r] : agents_) {
      if (!r.present) continue;
      if (id != ego_ && is_replay(r.mode) && cfg_.background != BackgroundMode::kIdm) {
        if (auto s = replay_state(r, ahead)) out.emplace(id, *s);
        continue;
      }
      AgentState s = r.state;
      s.x += s.speed * std::cos(s.yaw) * kTickSeconds * ahead;
      s.y += s.speed * std::sin(s.yaw) * kTickSeconds * ahead;
      out.emplace(id, s);
    }
    return out;
  }

  PolicyFeatures features_in(const std::map<AgentId, AgentState>& world, AgentId id, double accel,
                             bool* off_map = nullptr) const {
    try {
      return extract_features(map_, world, id, accel);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kOffMap) throw;
      if (off_map) *off_map = true;
      return PolicyFeatures{};
    }
  }

  PredictedTrajectory rollout(AgentId id, const Runtime& r, Tick t) const {
    const auto& mode = std::get<ConflictAwareMode>(r.mode);
    const double ref = reference_speed(r);
    AgentState s = r.state;
    double accel = r.accel;
    std::vector<PredictedStep> steps;
    steps.reserve(static_cast<std::size_t>(cfg_.horizon));
    for (int k = 1; k <= cfg_.horizon; ++k) {
      auto world = projected_world(k - 1);
      world[id] = s;
      const auto res = takeover_->act(mode, r.path, s, features_in(world, id, accel), {t + k - 1, ref});
      accel = res.action.accel_long;
      s = integrate(s, res.action);
      steps.push_back({s.x, s.y, 0.1});
    }
    return make_single_mode(id, t, r.state, std::move(steps));
  }

  /// Predictions depend on every agent's state and mode; any change to
  /// either must call invalidate().
  void invalidate() { pred_cache_.clear(); }

  PredictedTrajectory predict(AgentId id, Tick t) const {
    auto hit = pred_cache_.find({id, t});
    if (hit != pred_cache_.end()) return hit->second;
    return pred_cache_.emplace(std::pair{id, t}, compute_prediction(id, t)).first->second;
  }

  PredictedTrajectory compute_prediction(AgentId id, Tick t) const {
    if (id == ego_) return predict_ego(t);
    const Runtime& r = agents_.at(id);
    if (!is_replay(r.mode)) return rollout(id, r, t);
    std::vector<PredictedStep> steps;
    for (int k = 1; k <= cfg_.horizon; ++k) {
      auto s = replay_state(r, k);
      if (!s) break;
      steps.push_back({s->x, s->y, 0.1});
    }
    auto p = make_single_mode(id, t, r.state, std::move(steps));
    p.truncated = static_cast<int>(p.length()) < cfg_.horizon;
    return p;
  }

  // --- takeover -----------------------------------------------------------

  /// Closest point to `p` on the agent's logged path from its cursor onward.
  Vec2 snap_to_log(const Runtime& r, Vec2 p) const {
    std::vector<Vec2> pts;
    for (std::size_t i = static_cast<std::size_t>(std::max<long>(0, r.cursor)); i < r.track->states.size(); ++i) {
      pts.push_back(r.track->states[i].position());
    }
    if (pts.size() < 2) return p;
    return project_to_polyline(pts, p).foot;
  }

  BezierPath fallback_path(const Runtime& r, Vec2 goal) const {
    std::vector<Vec2> pts{r.state.position()};
    const long goal_idx = resync_index(r, r.cursor, goal);
    for (long i = r.cursor + 5; i < goal_idx; i += 5) {
      pts.push_back(r.track->states[static_cast<std::size_t>(i)].position());
    }
    pts.push_back(goal);
    if (distance(pts.front(), pts.back()) < 1.0) {
      pts.back() = pts.front() + heading_vector(r.state.yaw) * 1.0;
    }
    return bezier_fit(pts, 0.5);
  }

  void plan(AgentId id, Runtime& r, Tick t, ConflictAwareMode& mode) {
    mode.goal = snap_to_log(r, mode.conflict.cross_point);
    try {
      const auto proj = project_to_lane(map_, r.state.position(), r.state.yaw);
      r.path = plan_route(map_, proj.frame, mode.goal);
    } catch (const Error& e) {
      audit(t, id, AuditKind::kRouteFailure, mode.conflict.other(id), e.what());
      r.path = fallback_path(r, mode.goal);
    }
  }

  void update_arrivals(Tick t) {
    for (auto& [id, r] : agents_) {
      if (!r.present || is_replay(r.mode)) continue;
      auto& mode = std::get<ConflictAwareMode>(r.mode);
      if (mode.opponent_passed) continue;
      const AgentId opp = mode.conflict.other(id);
      auto it = agents_.find(opp);
      if (it == agents_.end() || !it->second.present) {
        mode.opponent_passed = true;
        mode.opponent_arrival_tick = t;
        invalidate();
        continue;
      }
      const auto a = closest_approach(predict(opp, t), mode.goal);
      const auto before = mode;
      mode.opponent_arrival_tick = t + a.step;
      // An opponent no longer predicted to reach the cross point has nothing to be yielded to.
      const auto& o = it->second.state;
      if (a.step == 0 || a.distance > 0.5 * (o.length + r.state.width)) {
        mode.opponent_passed = true;
        mode.opponent_arrival_tick = t;
      }
      if (!(mode == before)) invalidate();
    }
  }

  static bool parked(const Runtime& r, const PredictedTrajectory& pred) {
    if (r.state.speed > 0.1) return false;
    const Vec2 here = r.state.position();
    for (const auto& p : pred.point_estimate()) {
      if (distance(Vec2{p.x, p.y}, here) > 0.1) return false;
    }
    return true;
  }

  /// Compares each tick's ego prediction with where the ego policy went.
  void measure_ego_divergence() {
    for (const auto& [t, plan] : ego_plans_) {
      double first = 0.0;
      double sum = 0.0;
      int n = 0;
      for (std::size_t k = 0; k < plan.size(); ++k) {
        const Frame* f = trace_.frame_at(t + static_cast<Tick>(k) + 1);
        if (!f || !f->agents.contains(ego_)) break;
        const double e = distance(Vec2{plan[k].x, plan[k].y}, f->agents.at(ego_).state.position());
        if (k == 0) first = e;
        sum += e;
        ++n;
      }
      if (n > 0) trace_.ego_divergence.push_back({t, first, sum / n});
    }
  }

  void resolve(Tick t) {
    update_arrivals(t);
    if (agents_.at(ego_).present) ego_plans_[t] = predict(ego_, t).point_estimate();
    const Vec2 ego_pos = agents_.at(ego_).state.position();
    std::vector<AgentId> candidates;
    for (const auto& [id, r] : agents_) {
      if (!r.present) continue;
      if (id == ego_ || !is_replay(r.mode) || distance(r.state.position(), ego_pos) <= cfg_.roi_radius) {
        candidates.push_back(id);
      }
    }

    std::vector<Conflict> conflicts;
    bool resolved = false;
    for (int iter = 0; iter < cfg_.max_iterations; ++iter) {
      std::map<AgentId, PredictedTrajectory> preds;
      std::map<AgentId, AgentDims> dims;
      for (AgentId id : candidates) {
        preds.emplace(id, predict(id, t));
        const auto& s = agents_.at(id).state;
        dims.emplace(id, AgentDims{s.width, s.length});
      }
      conflicts = detect_all(preds, dims, ego_, cfg_.conflict);

      std::vector<AssignedConflict> fresh;
      std::map<AgentId, int> opponent_arrival;
      for (const auto& c : conflicts) {
        const Pair key{c.first, c.second};
        if (assigned_.contains(key)) continue;
        const auto d = decide_yield(c, preds.at(c.first), preds.at(c.second), ego_);
        assigned_[key] = d.yielder;
        trace_.conflicts.push_back({t, c, d.yielder});
        fresh.push_back({c, d.yielder, true});
      }
      if (fresh.empty()) {
        resolved = true;
        break;
      }
      std::set<AgentId> yielders;
      for (const auto& f : fresh) yielders.insert(f.yielder);
      for (AgentId id : yielders) {
        Runtime& r = agents_.at(id);
        const bool was_replay = is_replay(r.mode);
        // A parked agent whose log stays parked already yields; taking it over changes nothing.
        if (was_replay && parked(r, preds.at(id))) continue;
        const auto before = r.mode;
        r.mode = mode_transition(id, r.mode, t, fresh, false);
        invalidate();
        if (is_replay(r.mode)) continue;
        auto& mode = std::get<ConflictAwareMode>(r.mode);
        if (!was_replay && std::get<ConflictAwareMode>(before).conflict == mode.conflict) continue;
        const AgentId opp = mode.conflict.other(id);
        if (was_replay) {
          r.takeover_cursor = r.cursor;
          r.blending = false;
          r.infeasible_reported = false;
          r.off_map_reported = false;
          r.trace_mode = TraceMode::kTakeover;
        }
        plan(id, r, t, mode);
        mode.opponent_arrival_tick = t + arrival_step(preds.at(opp), mode.goal);
        mode.opponent_passed = false;
        invalidate();
        audit(t, id, was_replay ? AuditKind::kTakeover : AuditKind::kRetarget, opp,
              "pair=" + std::to_string(mode.conflict.first) + ":" + std::to_string(mode.conflict.second) +
                  " goal=" + text::format_double(mode.goal.x) + ":" + text::format_double(mode.goal.y));
      }
    }
    if (!resolved) audit(t, ego_, AuditKind::kIterationCapHit, 0);

    std::set<Pair> live;
    for (const auto& c : conflicts) live.insert({c.first, c.second});
    std::erase_if(assigned_, [&](const auto& kv) { return !live.contains(kv.first); });
  }

  // --- stepping -----------------------------------------------------------

  void step(Tick t) {
    invalidate();
    const auto world = snapshot();
    std::map<AgentId, AgentState> next;
    for (auto& [id, r] : agents_) {
      if (!r.present) continue;
      if (id == ego_) {
        next[id] = ego_policy_->step(t, r.state, world);
      } else if (cfg_.background == BackgroundMode::kIdm) {
        const Lead lead = find_lead(r.idm_path, r.idm_s, r.state, id, world);
        IdmParams p = cfg_.idm;
        p.desired_speed = r.idm_v0;
        const double a = idm_accel(r.state.speed, lead.speed, lead.gap, p);
        AgentState n = r.state;
        n.speed = std::max(0.0, r.state.speed + a * kTickSeconds);
        r.idm_s += n.speed * kTickSeconds;
        const Vec2 pos = polyline_point_at(r.idm_path, r.idm_s);
        n.x = pos.x;
        n.y = pos.y;
        n.yaw = wrap_angle(polyline_heading_at(r.idm_path, r.idm_s));
        if (r.track->covers(t + 1)) next[id] = n;
      } else if (is_replay(r.mode)) {
        if (auto s = replay_state(r, 1)) next[id] = *s;
      } else {
        const auto& mode = std::get<ConflictAwareMode>(r.mode);
        bool off_map = false;
        const auto features = features_in(world, id, r.accel, &off_map);
        if (off_map && !r.off_map_reported) {
          audit(t, id, AuditKind::kOffMap, mode.conflict.other(id));
          r.off_map_reported = true;
        }
        const auto res = takeover_->act(mode, r.path, r.state, features, {t, reference_speed(r)});
        if (res.infeasible_yield && !r.infeasible_reported) {
          audit(t, id, AuditKind::kInfeasibleYield, mode.conflict.other(id));
          r.infeasible_reported = true;
        }
        r.accel = res.action.accel_long;
        next[id] = integrate(r.state, res.action);
      }
    }

    for (auto& [id, r] : agents_) {
      if (r.present) {
        auto it = next.find(id);
        if (it == next.end()) {
          r.present = false;
          continue;
        }
        r.state = it->second;
        if (is_replay(r.mode) && id != ego_ && cfg_.background != BackgroundMode::kIdm) {
          ++r.cursor;
          if (r.blending && ++r.blend_step >= cfg_.blend_ticks) r.blending = false;
        }
        r.history.push_back(r.state);
        if (static_cast<int>(r.history.size()) > cfg_.history + 1) {
          r.history.erase(r.history.begin());
          ++r.history_start;
        }
      } else if (r.track->first_step == t + 1) {
        enter(id, r, t + 1);
      }
    }
  }

  /// Conflicts the agent would have if it resumed replay from log index j now.
  std::vector<AssignedConflict> replay_conflicts(AgentId id, const Runtime& r, long j, Tick t) const {
    Runtime probe = r;
    probe.mode = ReplayMode{};
    probe.cursor = j;
    probe.offset = r.state.position() - r.track->states[static_cast<std::size_t>(j)].position();
    probe.blend_step = 0;
    probe.blending = true;
    std::vector<PredictedStep> steps;
    for (int k = 1; k <= cfg_.horizon; ++k) {
      auto s = replay_state(probe, k);
      if (!s) break;
      steps.push_back({s->x, s->y, 0.1});
    }
    const auto mine = make_single_mode(id, t, r.state, std::move(steps));
    std::vector<AssignedConflict> out;
    const Vec2 ego_pos = agents_.at(ego_).state.position();
    for (const auto& [other, o] : agents_) {
      if (other == id || !o.present) continue;
      const bool candidate = other == ego_ || !is_replay(o.mode) ||
                             distance(o.state.position(), ego_pos) <= cfg_.roi_radius;
      if (!candidate) continue;
      const auto c = detect_pair(mine, predict(other, t), {r.state.width, r.state.length},
                                 {o.state.width, o.state.length}, cfg_.conflict);
      if (c) out.push_back({*c, 0, false});
    }
    return out;
  }

  void handbacks(Tick t) {
    for (auto& [id, r] : agents_) {
      if (!r.present || is_replay(r.mode)) continue;
      const auto& mode = std::get<ConflictAwareMode>(r.mode);
      const bool reached = distance(r.state.position(), mode.goal) <= cfg_.controller.goal_tolerance ||
                           r.path.project(r.state.position()) >= r.path.length() - 1e-6;
      if (!reached) continue;
      const AgentId opp = mode.conflict.other(id);
      const long j = resync_index(r, r.takeover_cursor, r.state.position());
      const double logged_speed = r.track->states[static_cast<std::size_t>(j)].speed;
      if (std::abs(r.state.speed - logged_speed) > cfg_.controller.handback_speed_tolerance) continue;
      r.mode = mode_transition(id, r.mode, t, replay_conflicts(id, r, j, t), reached);
      if (!is_replay(r.mode)) continue;
      invalidate();
      r.cursor = j;
      r.offset = r.state.position() - r.track->states[static_cast<std::size_t>(j)].position();
      r.blend_step = 0;
      r.blending = true;
      r.trace_mode = TraceMode::kReplay;
      audit(t, id, AuditKind::kHandback, opp, "log_index=" + std::to_string(j));
    }
  }

  const Segment& seg_;
  SimConfig cfg_;
  Models models_;
  const HDMap& map_;
  AgentId ego_ = 0;
  std::unique_ptr<EgoPolicy> ego_policy_;
  DeterministicTakeover default_takeover_;
  const TakeoverPolicy* takeover_ = nullptr;
  std::map<AgentId, Runtime> agents_;
  std::map<Pair, AgentId> assigned_;
  SimTrace trace_;
  mutable std::map<std::pair<AgentId, Tick>, PredictedTrajectory> pred_cache_;
  std::map<Tick, std::vector<PredictedStep>> ego_plans_;
};

}  // namespace

SimTrace run_segment(const Segment& seg, const SimConfig& cfg, const Models& models) {
  return Simulation(seg, cfg, models).run();
}

// ---------------------------------------------------------------------------
// Exports

namespace {

using text::format_double;

}  // namespace

void write_trace(const SimTrace& trace, std::ostream& out) {
  std::map<std::pair<Tick, AgentId>, std::string> events;
  for (const auto& e : trace.audit) {
    auto& s = events[{e.tick, e.agent}];
    if (!s.empty()) s += ';';
    s += to_string(e.kind);
  }
  out << "# litsim-trace 1 ego=" << trace.ego << " sim_start=" << trace.sim_start << '\n';
  out << "tick,agent_id,x,y,yaw,speed,width,length,mode,event\n";
  for (const auto& f : trace.frames) {
    for (const auto& [id, rec] : f.agents) {
      const auto& s = rec.state;
      out << f.tick << ',' << id << ',' << format_double(s.x) << ',' << format_double(s.y) << ','
          << format_double(s.yaw) << ',' << format_double(s.speed) << ',' << format_double(s.width) << ','
          << format_double(s.length) << ',' << static_cast<char>(rec.mode) << ',';
      auto it = events.find({f.tick, id});
      if (it != events.end()) out << it->second;
      out << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::kSinkFailure, "trace sink rejected the write");
}

namespace {

AuditKind parse_audit_kind(std::string_view s) {
  for (auto k : {AuditKind::kTakeover, AuditKind::kRetarget, AuditKind::kHandback,
                 AuditKind::kInfeasibleYield, AuditKind::kIterationCapHit, AuditKind::kRouteFailure,
                 AuditKind::kOffMap}) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::kParse, "unknown audit event '" + std::string(s) + "'");
}

TraceMode parse_trace_mode(std::string_view s) {
  if (s.size() == 1) {
    switch (s[0]) {
      case 'L': return TraceMode::kReplay;
      case 'C': return TraceMode::kTakeover;
      case 'E': return TraceMode::kEgo;
      case 'I': return TraceMode::kIdm;
    }
  }
  throw Error(ErrorCode::kParse, "unknown mode '" + std::string(s) + "'");
}

}  // namespace

SimTrace read_trace(std::istream& in) {
  using text::parse_field;
  SimTrace trace;
  std::string line;
  if (!std::getline(in, line) || !line.starts_with("# litsim-trace 1 ")) {
    throw Error(ErrorCode::kParse, "missing trace header");
  }
  for (auto tok : text::split(std::string_view(line).substr(17), ' ')) {
    if (tok.starts_with("ego=")) trace.ego = parse_field<AgentId>(tok.substr(4), "ego");
    if (tok.starts_with("sim_start=")) trace.sim_start = parse_field<Tick>(tok.substr(10), "sim_start");
  }
  if (!std::getline(in, line) || line != "tick,agent_id,x,y,yaw,speed,width,length,mode,event") {
    throw Error(ErrorCode::kMissingColumn, "trace column header mismatch");
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() != 10) throw Error(ErrorCode::kParse, "trace row needs 10 fields: " + line);
    const Tick t = parse_field<Tick>(f[0], "tick");
    const AgentId id = parse_field<AgentId>(f[1], "agent_id");
    if (trace.frames.empty() || trace.frames.back().tick != t) {
      const Tick expect = trace.sim_start + static_cast<Tick>(trace.frames.size());
      if (t != expect) throw Error(ErrorCode::kNonMonotonicFrames, "trace tick " + std::to_string(t));
      trace.frames.push_back(Frame{t, {}});
    }
    AgentRecord rec;
    rec.state.x = parse_field<double>(f[2], "x");
    rec.state.y = parse_field<double>(f[3], "y");
    rec.state.yaw = parse_field<double>(f[4], "yaw");
    rec.state.speed = parse_field<double>(f[5], "speed");
    rec.state.width = parse_field<double>(f[6], "width");
    rec.state.length = parse_field<double>(f[7], "length");
    rec.mode = parse_trace_mode(f[8]);
    trace.frames.back().agents.emplace(id, rec);
    if (!f[9].empty()) {
      for (auto ev : text::split(f[9], ';')) trace.audit.push_back({t, id, parse_audit_kind(ev), 0, {}});
    }
  }
  return trace;
}

void write_conflicts(const SimTrace& trace, std::ostream& out) {
  out << "tick,first,second,first_step,cross_x,cross_y,penetration,yielder\n";
  for (const auto& r : trace.conflicts) {
    const auto& c = r.conflict;
    out << r.tick << ',' << c.first << ',' << c.second << ',' << c.first_step << ','
        << format_double(c.cross_point.x) << ',' << format_double(c.cross_point.y) << ','
        << format_double(c.penetration) << ',' << r.yielder << '\n';
  }
  if (!out) throw Error(ErrorCode::kSinkFailure, "conflict sink rejected the write");
}

void write_audit(const SimTrace& trace, std::ostream& out) {
  out << "tick,agent,transition,opponent,detail\n";
  for (const auto& e : trace.audit) {
    out << e.tick << ',' << e.agent << ',' << to_string(e.kind) << ',' << e.opponent << ',' << e.detail
        << '\n';
  }
  if (!out) throw Error(ErrorCode::kSinkFailure, "audit sink rejected the write");
}

void write_ego_divergence(const SimTrace& trace, std::ostream& out) {
  out << "tick,first_step,horizon_mean\n";
  for (const auto& d : trace.ego_divergence) {
    out << d.tick << ',' << format_double(d.first_step) << ',' << format_double(d.horizon_mean) << '\n';
  }
  if (!out) throw Error(ErrorCode::kSinkFailure, "divergence sink rejected the write");
}

std::vector<AuditEvent> read_audit(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "tick,agent,transition,opponent,detail") {
    throw Error(ErrorCode::kMissingColumn, "audit column header mismatch");
  }
  std::vector<AuditEvent> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    if (f.size() < 5) throw Error(ErrorCode::kParse, "audit row needs 5 fields: " + line);
    AuditEvent e;
    e.tick = text::parse_field<Tick>(f[0], "tick");
    e.agent = text::parse_field<AgentId>(f[1], "agent");
    e.kind = parse_audit_kind(f[2]);
    e.opponent = text::parse_field<AgentId>(f[3], "opponent");
    const std::size_t at = line.find(',', line.find(',', line.find(',', line.find(',') + 1) + 1) + 1);
    e.detail = line.substr(at + 1);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace litsim
