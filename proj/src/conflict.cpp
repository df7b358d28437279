#include "litsim/conflict.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "litsim/error.hpp"

namespace litsim {

std::vector<double> step_headings(const PredictedTrajectory& pred, std::size_t mode) {
  const auto& steps = pred.modes[mode];
  std::vector<double> out;
  out.reserve(steps.size());
  Vec2 prev = pred.origin.position();
  double yaw = pred.origin.yaw;
  for (const auto& st : steps) {
    const Vec2 cur{st.x, st.y};
    const Vec2 d = cur - prev;
    if (d.norm() >= 1e-3) yaw = std::atan2(d.y, d.x);
    out.push_back(yaw);
    prev = cur;
  }
  return out;
}

namespace {

std::optional<Conflict> scan(const PredictedTrajectory& a, std::size_t ma, const PredictedTrajectory& b,
                             std::size_t mb, AgentDims da, AgentDims db, const ConflictOptions& opts) {
  const auto& sa = a.modes[ma];
  const auto& sb = b.modes[mb];
  const std::size_t n = std::min(sa.size(), sb.size());
  if (n == 0) return std::nullopt;
  const auto ya = step_headings(a, ma);
  const auto yb = step_headings(b, mb);
  const double ra = std::hypot(0.5 * da.length + opts.inflation, 0.5 * da.width + opts.inflation);
  const double rb = std::hypot(0.5 * db.length + opts.inflation, 0.5 * db.width + opts.inflation);
  for (std::size_t k = 0; k < n; ++k) {
    const Vec2 ca{sa[k].x, sa[k].y};
    const Vec2 cb{sb[k].x, sb[k].y};
    if (opts.prune && distance(ca, cb) > ra + rb) continue;
    const auto boxa = box_at(ca, ya[k], da.width, da.length, opts.inflation);
    const auto boxb = box_at(cb, yb[k], db.width, db.length, opts.inflation);
    const double pen = obb_penetration(boxa, boxb);
    if (pen >= 0.0) {
      Conflict c;
      c.first = std::min(a.agent_id, b.agent_id);
      c.second = std::max(a.agent_id, b.agent_id);
      c.first_step = static_cast<int>(k) + 1;
      c.cross_point = (ca + cb) * 0.5;
      c.penetration = pen;
      return c;
    }
  }
  return std::nullopt;
}

}  // namespace

std::optional<Conflict> detect_pair(const PredictedTrajectory& a, const PredictedTrajectory& b,
                                    AgentDims dims_a, AgentDims dims_b, const ConflictOptions& opts) {
  if (a.modes.empty() || b.modes.empty()) return std::nullopt;
  if (!opts.all_modes) return scan(a, a.best_mode(), b, b.best_mode(), dims_a, dims_b, opts);
  std::optional<Conflict> best;
  for (std::size_t i = 0; i < a.modes.size(); ++i) {
    for (std::size_t j = 0; j < b.modes.size(); ++j) {
      auto c = scan(a, i, b, j, dims_a, dims_b, opts);
      if (c && (!best || c->first_step < best->first_step)) best = c;
    }
  }
  return best;
}

std::vector<Conflict> detect_all(const std::map<AgentId, PredictedTrajectory>& preds,
                                 const std::map<AgentId, AgentDims>& dims, AgentId ego,
                                 const ConflictOptions& opts) {
  if (!preds.empty() && !preds.contains(ego)) {
    throw Error(ErrorCode::kEgoMissing, "ego " + std::to_string(ego) + " has no prediction");
  }
  auto dims_of = [&](AgentId id) {
    auto it = dims.find(id);
    if (it != dims.end()) return it->second;
    const auto& o = preds.at(id).origin;
    return AgentDims{o.width, o.length};
  };
  std::vector<Conflict> out;
  for (auto i = preds.begin(); i != preds.end(); ++i) {
    for (auto j = std::next(i); j != preds.end(); ++j) {
      if (auto c = detect_pair(i->second, j->second, dims_of(i->first), dims_of(j->first), opts)) {
        out.push_back(*c);
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Conflict& x, const Conflict& y) {
    return std::tie(x.first_step, x.first, x.second) < std::tie(y.first_step, y.first, y.second);
  });
  return out;
}

}  // namespace litsim
