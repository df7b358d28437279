#include "litsim/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "litsim/error.hpp"

namespace litsim {

OrientedBox box_at(Vec2 center, double yaw, double width, double length, double inflation) {
  return {center, {0.5 * length + inflation, 0.5 * width + inflation}, yaw};
}

OrientedBox box_of(const AgentState& s, double inflation) {
  return box_at(s.position(), s.yaw, s.width, s.length, inflation);
}

std::array<Vec2, 4> corners(const OrientedBox& b) {
  const Vec2 u = heading_vector(b.yaw);
  const Vec2 v{-u.y, u.x};
  const Vec2 ex = u * b.half_extents.x;
  const Vec2 ey = v * b.half_extents.y;
  return {b.center + ex + ey, b.center - ex + ey, b.center - ex - ey, b.center + ex - ey};
}

namespace {

// Projected overlap of the two boxes along unit axis n.
double axis_overlap(const OrientedBox& a, const OrientedBox& b, Vec2 n) {
  auto radius = [n](const OrientedBox& box) {
    const Vec2 u = heading_vector(box.yaw);
    const Vec2 v{-u.y, u.x};
    return box.half_extents.x * std::abs(dot(u, n)) + box.half_extents.y * std::abs(dot(v, n));
  };
  const double gap = std::abs(dot(b.center - a.center, n));
  return radius(a) + radius(b) - gap;
}

}  // namespace

double obb_penetration(const OrientedBox& a, const OrientedBox& b) {
  const Vec2 ua = heading_vector(a.yaw);
  const Vec2 ub = heading_vector(b.yaw);
  const std::array<Vec2, 4> axes = {ua, Vec2{-ua.y, ua.x}, ub, Vec2{-ub.y, ub.x}};
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& n : axes) worst = std::min(worst, axis_overlap(a, b, n));
  return worst;
}

bool obb_overlap(const OrientedBox& a, const OrientedBox& b) { return obb_penetration(a, b) >= 0.0; }

// ---------------------------------------------------------------------------
// Bézier

Vec2 BezierCurve::evaluate(double t) const {
  std::vector<Vec2> pts = control_points;
  for (std::size_t level = pts.size(); level > 1; --level) {
    for (std::size_t i = 0; i + 1 < level; ++i) pts[i] = pts[i] * (1.0 - t) + pts[i + 1] * t;
  }
  return pts.front();
}

Vec2 BezierCurve::derivative(double t) const {
  const int n = degree();
  if (n < 1) return {};
  BezierCurve hodograph;
  for (std::size_t i = 0; i + 1 < control_points.size(); ++i) {
    hodograph.control_points.push_back((control_points[i + 1] - control_points[i]) * n);
  }
  return hodograph.evaluate(t);
}

BezierPath::BezierPath(std::vector<BezierCurve> pieces) : pieces_(std::move(pieces)) {
  if (pieces_.empty()) return;
  std::vector<double> chords;
  double total = 0.0;
  for (const auto& p : pieces_) {
    const double c = distance(p.control_points.front(), p.control_points.back());
    chords.push_back(c);
    total += c;
  }
  breaks_.push_back(0.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < chords.size(); ++i) {
    acc += chords[i];
    breaks_.push_back(i + 1 == chords.size() ? 1.0 : acc / total);
  }

  constexpr int kSamplesPerPiece = 32;
  table_.push_back({0.0, 0.0});
  Vec2 prev = evaluate(0.0);
  samples_.push_back(prev);
  double s = 0.0;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    for (int k = 1; k <= kSamplesPerPiece; ++k) {
      const double u = breaks_[i] + (breaks_[i + 1] - breaks_[i]) * k / kSamplesPerPiece;
      const Vec2 q = evaluate(u);
      const double ds = distance(prev, q);
      if (ds <= 0.0) continue;
      s += ds;
      table_.push_back({u, s});
      samples_.push_back(q);
      prev = q;
    }
  }
}

std::pair<std::size_t, double> BezierPath::locate(double u) const {
  u = std::clamp(u, 0.0, 1.0);
  auto it = std::upper_bound(breaks_.begin(), breaks_.end(), u);
  std::size_t i = it == breaks_.begin() ? 0 : static_cast<std::size_t>(it - breaks_.begin()) - 1;
  i = std::min(i, pieces_.size() - 1);
  const double span = breaks_[i + 1] - breaks_[i];
  const double t = span > 0.0 ? (u - breaks_[i]) / span : 0.0;
  return {i, std::clamp(t, 0.0, 1.0)};
}

Vec2 BezierPath::evaluate(double u) const {
  if (u <= 0.0) return pieces_.front().control_points.front();
  if (u >= 1.0) return pieces_.back().control_points.back();
  auto [i, t] = locate(u);
  return pieces_[i].evaluate(t);
}

Vec2 BezierPath::derivative(double u) const {
  auto [i, t] = locate(u);
  const double span = breaks_[i + 1] - breaks_[i];
  return pieces_[i].derivative(t) / span;
}

Vec2 BezierPath::tangent(double u) const {
  Vec2 d = derivative(u);
  double n = d.norm();
  if (n < 1e-12) {
    // Degenerate handle; fall back to the chord of the piece.
    auto [i, t] = locate(u);
    d = pieces_[i].control_points.back() - pieces_[i].control_points.front();
    n = d.norm();
  }
  return n > 0.0 ? d / n : Vec2{1.0, 0.0};
}

double BezierPath::parameter_at_distance(double s) const {
  if (s <= 0.0) return 0.0;
  if (s >= length()) return 1.0;
  auto it = std::lower_bound(table_.begin(), table_.end(), s,
                             [](const auto& e, double v) { return e.second < v; });
  const auto& hi = *it;
  const auto& lo = *(it - 1);
  const double f = (s - lo.second) / (hi.second - lo.second);
  return lo.first + f * (hi.first - lo.first);
}

Vec2 BezierPath::point_at_distance(double s) const { return evaluate(parameter_at_distance(s)); }

double BezierPath::project(Vec2 p) const {
  double best = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  for (std::size_t k = 1; k < table_.size(); ++k) {
    const Vec2 prev = samples_[k - 1];
    const Vec2 q = samples_[k];
    const Vec2 seg = q - prev;
    const double len2 = seg.squared_norm();
    const double f = len2 > 0.0 ? std::clamp(dot(p - prev, seg) / len2, 0.0, 1.0) : 0.0;
    const double dist = distance(prev + seg * f, p);
    if (dist < best) {
      best = dist;
      best_s = table_[k - 1].second + f * (table_[k].second - table_[k - 1].second);
    }
  }
  return best_s;
}

namespace {

Vec2 unit(Vec2 v) {
  const double n = v.norm();
  return n > 0.0 ? v / n : Vec2{};
}

std::vector<Vec2> tangents_for(const std::vector<Vec2>& pts) {
  const std::size_t n = pts.size();
  std::vector<Vec2> t(n);
  t.front() = unit(pts[1] - pts[0]);
  t.back() = unit(pts[n - 1] - pts[n - 2]);
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const Vec2 in = unit(pts[i] - pts[i - 1]);
    const Vec2 out = unit(pts[i + 1] - pts[i]);
    const Vec2 bis = in + out;
    t[i] = bis.norm() > 1e-9 ? unit(bis) : out;
  }
  return t;
}

double piece_deviation(const BezierCurve& c, const std::vector<Vec2>& poly) {
  constexpr int kSamples = 64;
  double worst = 0.0;
  for (int k = 0; k <= kSamples; ++k) {
    worst = std::max(worst, project_to_polyline(poly, c.evaluate(static_cast<double>(k) / kSamples)).distance);
  }
  return worst;
}

}  // namespace

BezierPath bezier_fit(const std::vector<Vec2>& waypoints, double tolerance) {
  if (waypoints.size() < 2) {
    throw Error(ErrorCode::kDegenerateInput, "bezier_fit needs at least 2 waypoints");
  }
  std::vector<Vec2> pts;
  for (const auto& w : waypoints) {
    if (pts.empty() || distance(pts.back(), w) > 1e-9) pts.push_back(w);
  }
  if (pts.size() < 2) throw Error(ErrorCode::kDegenerateInput, "all waypoints coincide");
  // The exact last waypoint must terminate the path even if deduplication
  // kept a point within 1e-9 of it.
  pts.back() = waypoints.back();
  const std::vector<Vec2> base = pts;
  // seg[i]: the base segment holding pts[i]. Refinement only inserts
  // midpoints, so each piece stays within one base segment and is checked
  // against that segment and its neighbors.
  std::vector<std::size_t> seg(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) seg[i] = std::min(i, base.size() - 2);
  const auto window = [&](std::size_t k) {
    const std::size_t lo = k >= 2 ? k - 2 : 0;
    const std::size_t hi = std::min(base.size() - 1, k + 3);
    return std::vector<Vec2>(base.begin() + static_cast<long>(lo), base.begin() + static_cast<long>(hi) + 1);
  };

  // Sampled deviation is checked against a slightly tighter bound so denser
  // external sampling stays within `tolerance`.
  const double internal_tol = 0.9 * tolerance;
  constexpr int kMaxRounds = 16;
  std::vector<BezierCurve> pieces;
  for (int round = 0;; ++round) {
    const auto tan = tangents_for(pts);
    pieces.clear();
    std::vector<bool> bad(pts.size() - 1, false);
    bool any_bad = false;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      const double len = distance(pts[i], pts[i + 1]);
      BezierCurve c{{pts[i], pts[i] + tan[i] * (len / 3.0), pts[i + 1] - tan[i + 1] * (len / 3.0),
                     pts[i + 1]}};
      if (piece_deviation(c, window(seg[i])) > internal_tol) {
        bad[i] = true;
        any_bad = true;
      }
      pieces.push_back(std::move(c));
    }
    if (!any_bad) break;
    if (round == kMaxRounds) {
      // Straighten anything still out of tolerance; a straight piece lies on
      // the polyline by construction.
      for (std::size_t i = 0; i < pieces.size(); ++i) {
        if (!bad[i]) continue;
        const Vec2 a = pts[i];
        const Vec2 b = pts[i + 1];
        pieces[i].control_points = {a, lerp(a, b, 1.0 / 3.0), lerp(a, b, 2.0 / 3.0), b};
      }
      break;
    }
    std::vector<Vec2> refined;
    std::vector<std::size_t> refined_seg;
    for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
      refined.push_back(pts[i]);
      refined_seg.push_back(seg[i]);
      if (bad[i]) {
        refined.push_back(lerp(pts[i], pts[i + 1], 0.5));
        refined_seg.push_back(seg[i]);
      }
    }
    refined.push_back(pts.back());
    refined_seg.push_back(seg.back());
    pts = std::move(refined);
    seg = std::move(refined_seg);
  }
  return BezierPath(std::move(pieces));
}

// ---------------------------------------------------------------------------
// Polylines and lanes

double polyline_length(const std::vector<Vec2>& poly) {
  double s = 0.0;
  for (std::size_t i = 1; i < poly.size(); ++i) s += distance(poly[i - 1], poly[i]);
  return s;
}

PolylineProjection project_to_polyline(const std::vector<Vec2>& poly, Vec2 p) {
  PolylineProjection best;
  // Squared distances pick the segment; square roots are only taken for it.
  double best_d2 = std::numeric_limits<double>::infinity();
  double best_f = 0.0;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const Vec2 a = poly[i];
    const Vec2 seg = poly[i + 1] - a;
    const double len2 = dot(seg, seg);
    if (len2 <= 0.0) continue;
    const double f = std::clamp(dot(p - a, seg) / len2, 0.0, 1.0);
    const Vec2 r = p - (a + seg * f);
    const double d2 = dot(r, r);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_f = f;
      best.segment = i;
    }
  }
  if (!std::isfinite(best_d2)) {
    // a single point, or every segment is degenerate
    best.foot = poly.front();
    best.distance = distance(p, poly.front());
    return best;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < best.segment; ++i) acc += distance(poly[i], poly[i + 1]);
  const Vec2 a = poly[best.segment];
  const Vec2 seg = poly[best.segment + 1] - a;
  const double len = seg.norm();
  best.foot = a + seg * best_f;
  best.distance = distance(p, best.foot);
  best.s = acc + best_f * len;
  best.heading = std::atan2(seg.y, seg.x);
  best.d = cross(seg / len, p - best.foot) >= 0.0 ? best.distance : -best.distance;
  return best;
}

Vec2 polyline_point_at(const std::vector<Vec2>& poly, double s) {
  if (s <= 0.0) {
    const Vec2 dir = unit(poly[1] - poly[0]);
    return poly.front() + dir * s;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const double len = distance(poly[i], poly[i + 1]);
    if (acc + len >= s) return lerp(poly[i], poly[i + 1], (s - acc) / len);
    acc += len;
  }
  const std::size_t n = poly.size();
  return poly.back() + unit(poly[n - 1] - poly[n - 2]) * (s - acc);
}

double polyline_heading_at(const std::vector<Vec2>& poly, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < poly.size(); ++i) {
    const double len = distance(poly[i], poly[i + 1]);
    if (acc + len >= s || i + 2 == poly.size()) {
      const Vec2 d = poly[i + 1] - poly[i];
      return std::atan2(d.y, d.x);
    }
    acc += len;
  }
  return 0.0;
}

double three_point_curvature(Vec2 a, Vec2 b, Vec2 c) {
  const double ab = distance(a, b);
  const double bc = distance(b, c);
  const double ca = distance(c, a);
  const double denom = ab * bc * ca;
  if (denom <= 0.0) return 0.0;
  // kappa = 1/R = 4 * area / (|ab| |bc| |ca|); the cross product carries the sign.
  return 2.0 * cross(b - a, c - a) / denom;
}

double centerline_curvature(const std::vector<Vec2>& poly, double s, double spacing) {
  const double total = polyline_length(poly);
  if (total < 2.0 * spacing) {
    spacing = total / 2.0;
    s = spacing;
  } else {
    s = std::clamp(s, spacing, total - spacing);
  }
  const double k = three_point_curvature(polyline_point_at(poly, s - spacing),
                                         polyline_point_at(poly, s),
                                         polyline_point_at(poly, s + spacing));
  return std::abs(k) < 1e-4 ? 0.0 : k;
}

LaneProjection project_onto(const HDMap& map, const Lane& lane, Vec2 p, double yaw) {
  const auto proj = project_to_polyline(lane.centerline, p);
  LaneProjection out;
  out.frame.lane_id = lane.id;
  out.frame.s = proj.s;
  out.frame.d = proj.d;
  out.frame.heading_err = wrap_angle(yaw - proj.heading);
  out.frame.curvature = centerline_curvature(lane.centerline, proj.s);
  out.lane_width = lane.width;
  out.marker_left = lane.left_marking.size() >= 2
                        ? project_to_polyline(lane.left_marking, p).distance
                        : std::max(0.0, 0.5 * lane.width - proj.d);
  out.marker_right = lane.right_marking.size() >= 2
                         ? project_to_polyline(lane.right_marking, p).distance
                         : std::max(0.0, 0.5 * lane.width + proj.d);
  const Vec2 lane_dir = heading_vector(proj.heading);
  for (const auto& edge : map.road_edges) {
    if (edge.size() < 2) continue;
    const auto e = project_to_polyline(edge, p);
    if (cross(lane_dir, e.foot - p) >= 0.0) {
      out.road_left = std::min(out.road_left, e.distance);
    } else {
      out.road_right = std::min(out.road_right, e.distance);
    }
  }
  return out;
}

std::optional<LaneProjection> try_project_to_lane(const HDMap& map, Vec2 p, double yaw) {
  constexpr double kMaxRange = 20.0;
  const Lane* best = nullptr;
  double best_dist = std::numeric_limits<double>::infinity();
  bool best_aligned = false;
  for (const auto& lane : map.lanes) {
    const auto proj = project_to_polyline(lane.centerline, p);
    if (proj.distance > kMaxRange || std::abs(proj.d) > lane.width + 5.0) continue;
    const bool aligned = std::abs(wrap_angle(yaw - proj.heading)) <= std::numbers::pi / 2.0;
    // Heading-compatible lanes win over opposing ones; then nearest; ties go
    // to the lower lane id through iteration order.
    const bool better = (aligned && !best_aligned) ||
                        (aligned == best_aligned && proj.distance < best_dist - 1e-9);
    if (best == nullptr || better) {
      best = &lane;
      best_dist = proj.distance;
      best_aligned = aligned;
    }
  }
  if (best == nullptr) return std::nullopt;
  return project_onto(map, *best, p, yaw);
}

LaneProjection project_to_lane(const HDMap& map, Vec2 p, double yaw) {
  if (map.empty()) throw Error(ErrorCode::kNoLaneWithinRange, "map has no lanes");
  auto proj = try_project_to_lane(map, p, yaw);
  if (!proj) {
    throw Error(ErrorCode::kNoLaneWithinRange,
                "no lane centerline within 20 m of (" + std::to_string(p.x) + ", " +
                    std::to_string(p.y) + ")");
  }
  return *proj;
}

}  // namespace litsim
